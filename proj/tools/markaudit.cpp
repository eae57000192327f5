// markaudit: batch toolkit for interaction-layer watermark audits.
//
// One binary, one subcommand per pipeline stage. Every command reads JSONL or
// CSV inputs, writes a JSON report (stdout or --out), and echoes the seed it
// ran under. Exit codes: 0 success, 1 validation error, 2 I/O error, 3 judge
// endpoint failure. Only `judge run` touches the network.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "markaudit/agreement.hpp"
#include "markaudit/cleaning.hpp"
#include "markaudit/corpus.hpp"
#include "markaudit/errors.hpp"
#include "markaudit/judge.hpp"
#include "markaudit/judge_client.hpp"
#include "markaudit/jsonl.hpp"
#include "markaudit/metrics.hpp"
#include "markaudit/rng.hpp"
#include "markaudit/rubrics.hpp"
#include "markaudit/simulate.hpp"
#include "markaudit/studystats.hpp"
#include "markaudit/tokenmark.hpp"

namespace {

using nlohmann::ordered_json;
using namespace markaudit;

// ============================================================================
// Shared plumbing
// ============================================================================

struct Opts {
    std::vector<std::string> in;
    std::string out;
    std::optional<long long> seed;
    std::string rubric = "strong";
    std::vector<double> density;
    std::string subset_ids;

    double gamma = 0.25;
    double delta = 2.0;
    int vocab = 4096;
    double threshold_z = 2.33;
    long long n = 100;
    long long length = 513;
    std::vector<double> rates = {0.0, 0.05, 0.1, 0.2, 0.3};

    double margin = 1.0;
    double alpha = 0.05;
    std::string conditions_pair;
    std::string baseline_cond;
    int latin_k = 5;

    std::string condition = "strong";
    double prob = 0.5;
    double abstain_prob = 0.0;
    std::string agent_name = "agent";

    std::string audit_log;
    std::string confusion_csv;
    long long bootstrap = 1000;

    double tau_student = -1.0;
    double tau_teacher = -1.0;
    std::string student_file;
    std::string teacher_file;
    double teacher_clean = -1.0;
    double teacher_para = -1.0;
    double student_clean = -1.0;
    double student_para = -1.0;
    std::string teacher_clean_file;
    std::string teacher_para_file;
    std::string student_clean_file;
    std::string student_para_file;
};

ordered_json base_report(const std::string& command,
                         const std::optional<long long>& seed) {
    ordered_json j;
    j["command"] = command;
    if (seed)
        j["seed"] = *seed;
    else
        j["seed"] = nullptr;
    return j;
}

void emit_report(const ordered_json& j, const std::string& out_path) {
    const std::string text = j.dump(2) + "\n";
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(out_path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + out_path + " for writing");
    f << text;
    if (!f) throw IoError("short write to " + out_path);
}

std::string slurp_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ordered_json parse_json_file(const std::string& path) {
    try {
        return ordered_json::parse(slurp_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path + ": invalid JSON: " + e.what());
    }
}

ordered_json rate_json(const RateEstimate& r) {
    ordered_json j;
    j["k"] = r.k;
    j["n_effective"] = r.n_effective;
    j["abstain"] = r.abstain;
    j["rate"] = r.rate;
    j["ci_low"] = r.ci_low;
    j["ci_high"] = r.ci_high;
    return j;
}

RateEstimate rate_from_json(const ordered_json& j, const std::string& where) {
    try {
        RateEstimate r;
        r.k = j.at("k").get<std::int64_t>();
        r.n_effective = j.at("n_effective").get<std::int64_t>();
        r.abstain = j.at("abstain").get<std::int64_t>();
        r.rate = j.at("rate").get<double>();
        r.ci_low = j.at("ci_low").get<double>();
        r.ci_high = j.at("ci_high").get<double>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(where + ": malformed rate object: " + e.what());
    }
}

const std::string& clean_text(const ResponseRecord& r) {
    return r.response_clean ? *r.response_clean : r.response;
}

std::set<std::string> read_id_list(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::set<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) ids.insert(line);
    }
    return ids;
}

void apply_subset(std::vector<ResponseRecord>& rows,
                  const std::string& subset_path) {
    if (subset_path.empty()) return;
    const auto keep = read_id_list(subset_path);
    std::vector<ResponseRecord> kept;
    for (auto& r : rows)
        if (keep.count(r.id)) kept.push_back(std::move(r));
    rows = std::move(kept);
}

void require_inputs(const Opts& o, std::size_t count, const char* command) {
    if (o.in.size() != count)
        throw ValidationError(std::string(command) + ": expected " +
                              std::to_string(count) + " --in file(s), got " +
                              std::to_string(o.in.size()));
}

GreenListParams params_from(const Opts& o) {
    GreenListParams p;
    p.vocab_size = o.vocab;
    p.gamma = o.gamma;
    p.delta = o.delta;
    p.threshold_z = o.threshold_z;
    p.validate();
    return p;
}

ordered_json params_json(const GreenListParams& p) {
    ordered_json j;
    j["vocab"] = p.vocab_size;
    j["gamma"] = p.gamma;
    j["delta"] = p.delta;
    j["threshold_z"] = p.threshold_z;
    return j;
}

// ============================================================================
// clean
// ============================================================================

std::string trim_sidecar_path(const std::string& out) {
    const std::string suffix = ".jsonl";
    if (out.size() > suffix.size() &&
        out.compare(out.size() - suffix.size(), suffix.size(), suffix) == 0)
        return out.substr(0, out.size() - suffix.size()) + ".trim.jsonl";
    return out + ".trim.jsonl";
}

void run_clean(const Opts& o) {
    require_inputs(o, 1, "clean");
    if (o.out.empty()) throw ValidationError("clean: --out is required");
    auto rows = read_response_jsonl(o.in[0]);

    std::ofstream trim_out(trim_sidecar_path(o.out),
                           std::ios::binary | std::ios::trunc);
    if (!trim_out)
        throw IoError("cannot open " + trim_sidecar_path(o.out) +
                      " for writing");

    std::map<std::string, std::int64_t> fallbacks;
    std::int64_t trimmed = 0;
    for (auto& r : rows) {
        const TrimResult t = trim_tail(r.response);
        r.response_clean = t.cleaned;
        if (t.report.trimmed_len != t.report.original_len) ++trimmed;
        ++fallbacks[to_string(t.report.fallback_used)];

        ordered_json tj;
        tj["id"] = r.id;
        tj["original_len"] = t.report.original_len;
        tj["trimmed_len"] = t.report.trimmed_len;
        if (t.report.period)
            tj["period"] = *t.report.period;
        else
            tj["period"] = nullptr;
        tj["repeats_removed"] = t.report.repeats_removed;
        tj["fallback_used"] = to_string(t.report.fallback_used);
        trim_out << tj.dump() << '\n';
    }
    if (!trim_out) throw IoError("short write to " + trim_sidecar_path(o.out));
    trim_out.close();
    write_response_jsonl(o.out, rows);

    ordered_json rep = base_report("clean", o.seed);
    rep["records"] = static_cast<std::int64_t>(rows.size());
    rep["trimmed"] = trimmed;
    rep["fallbacks"] = fallbacks;
    rep["out"] = o.out;
    rep["trim_report"] = trim_sidecar_path(o.out);
    emit_report(rep, "");
}

// ============================================================================
// filter
// ============================================================================

void run_filter_pairwise(const Opts& o) {
    require_inputs(o, 2, "filter pairwise");
    const auto a = read_response_jsonl(o.in[0]);
    const auto b = read_response_jsonl(o.in[1]);

    std::map<std::string, const ResponseRecord*> b_by_id;
    for (const auto& r : b)
        if (!b_by_id.emplace(r.id, &r).second)
            throw ValidationError("filter pairwise: duplicate id \"" + r.id +
                                  "\" in " + o.in[1]);

    std::vector<ResponsePair> pairs;
    for (const auto& r : a) {
        const auto it = b_by_id.find(r.id);
        if (it == b_by_id.end()) continue;
        pairs.push_back({r.id, clean_text(r), clean_text(*it->second)});
    }
    const IndicatorSet kept = pairwise_filter(pairs);

    ordered_json rep = base_report("filter pairwise", o.seed);
    rep["candidates"] = static_cast<std::int64_t>(pairs.size());
    rep["kept"] = static_cast<std::int64_t>(kept.size());
    rep["kept_ids"] = std::vector<std::string>(kept.begin(), kept.end());
    emit_report(rep, o.out);
}

void run_filter_intersect(const Opts& o) {
    if (o.in.empty())
        throw ValidationError("filter intersect: need at least one --in file");
    std::vector<std::vector<ResponseRecord>> runs;
    for (const auto& path : o.in) runs.push_back(read_response_jsonl(path));
    const IndicatorSet kept = intersection_filter(
        runs,
        [](const ResponseRecord& r) { return ends_sentence(clean_text(r)); });

    ordered_json rep = base_report("filter intersect", o.seed);
    rep["runs"] = static_cast<std::int64_t>(runs.size());
    rep["kept"] = static_cast<std::int64_t>(kept.size());
    rep["kept_ids"] = std::vector<std::string>(kept.begin(), kept.end());
    emit_report(rep, o.out);
}

// ============================================================================
// detect
// ============================================================================

void run_detect_regex(const Opts& o) {
    require_inputs(o, 1, "detect regex");
    auto rows = read_response_jsonl(o.in[0]);
    apply_subset(rows, o.subset_ids);
    if (rows.empty())
        throw ValidationError("detect regex: no records to score");

    std::int64_t marked = 0;
    ordered_json per_id = ordered_json::array();
    for (const auto& r : rows) {
        const bool hit = ends_question(clean_text(r));
        marked += hit ? 1 : 0;
        ordered_json e;
        e["id"] = r.id;
        e["marked"] = hit;
        per_id.push_back(e);
    }

    ordered_json rep = base_report("detect regex", o.seed);
    rep["rate"] = rate_json(
        make_rate_estimate(marked, static_cast<std::int64_t>(rows.size())));
    rep["per_id"] = per_id;
    emit_report(rep, o.out);
}

// ============================================================================
// judge run
// ============================================================================

void run_judge(const Opts& o) {
    require_inputs(o, 1, "judge run");
    if (o.out.empty()) throw ValidationError("judge run: --out is required");
    const auto rows = read_response_jsonl(o.in[0]);
    if (rows.empty()) throw ValidationError("judge run: no records to judge");

    std::vector<JudgeItem> items;
    for (const auto& r : rows) {
        if (clean_text(r).empty())
            throw ValidationError("judge run: record \"" + r.id +
                                  "\" has an empty response");
        items.push_back({r.id, r.prompt, clean_text(r)});
    }

    const Rubric& rubric = rubric_for(o.rubric);
    const JudgeEndpointConfig cfg = judge_config_from_env();

    std::optional<AuditLog> log;
    if (!o.audit_log.empty()) log.emplace(o.audit_log);
    JudgeClient client(cfg, log ? &*log : nullptr);

    const auto verdicts = client.judge_all(
        items, rubric, o.seed ? static_cast<std::uint64_t>(*o.seed) : 0);
    write_verdict_jsonl(o.out, verdicts);

    std::int64_t fallbacks = 0;
    for (const auto& v : verdicts)
        fallbacks += v.provenance == VerdictProvenance::fallback_abstain ? 1 : 0;

    ordered_json rep = base_report("judge run", o.seed);
    rep["judged"] = static_cast<std::int64_t>(verdicts.size());
    rep["fallback_abstains"] = fallbacks;
    rep["rubric"] = to_string(rubric.name);
    rep["out"] = o.out;
    emit_report(rep, "");
}

// ============================================================================
// rates
// ============================================================================

void run_rates_file(const Opts& o) {
    auto verdicts = read_verdict_jsonl(o.in[0]);
    if (!o.subset_ids.empty()) {
        const auto keep = read_id_list(o.subset_ids);
        std::vector<Verdict> kept;
        for (auto& v : verdicts)
            if (keep.count(v.id)) kept.push_back(std::move(v));
        verdicts = std::move(kept);
    }
    ordered_json rep = base_report("rates", o.seed);
    rep["rate"] = rate_json(rate(verdicts));
    emit_report(rep, o.out);
}

void run_rates_dir(const Opts& o) {
    namespace fs = std::filesystem;
    // family dir -> (condition, rubric) -> seed -> estimate
    std::map<std::tuple<std::string, std::string, std::string>,
             std::map<long long, RateEstimate>>
        groups;

    std::vector<fs::path> families;
    for (const auto& e : fs::directory_iterator(o.in[0]))
        if (e.is_directory()) families.push_back(e.path());
    std::sort(families.begin(), families.end());
    if (families.empty())
        throw ValidationError("rates: " + o.in[0] +
                              " holds no family directories");

    for (const auto& fam : families) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(fam))
            if (e.is_regular_file() && e.path().extension() == ".jsonl")
                files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& file : files) {
            const std::string stem = file.stem().string();
            const auto first = stem.find("__");
            const auto second =
                first == std::string::npos ? first : stem.find("__", first + 2);
            if (first == std::string::npos || second == std::string::npos)
                throw ValidationError(
                    "rates: cannot parse cell file name \"" + stem +
                    "\" (want <condition>__<rubric>__<seed>.jsonl)");
            const std::string cond = stem.substr(0, first);
            const std::string rub = stem.substr(first + 2, second - first - 2);
            long long seed = 0;
            try {
                seed = std::stoll(stem.substr(second + 2));
            } catch (const std::exception&) {
                throw ValidationError("rates: bad seed in \"" + stem + "\"");
            }
            (void)condition_from_string(cond);
            (void)rubric_name_from_string(rub);
            groups[{fam.filename().string(), cond, rub}][seed] =
                rate(read_verdict_jsonl(file.string()));
        }
    }

    ordered_json out_groups = ordered_json::array();
    for (const auto& [key, by_seed] : groups) {
        const auto& [family, cond, rub] = key;
        std::vector<long long> seeds;
        std::vector<double> percents;
        std::int64_t k = 0, n_eff = 0, abstain = 0;
        for (const auto& [seed, est] : by_seed) {
            seeds.push_back(seed);
            percents.push_back(100.0 * est.rate);
            k += est.k;
            n_eff += est.n_effective;
            abstain += est.abstain;
        }
        ordered_json g;
        g["family"] = family;
        g["condition"] = cond;
        g["rubric"] = rub;
        g["seeds"] = seeds;
        g["rates_percent"] = percents;
        if (percents.size() >= 2) {
            const SeedSummary s = seed_summary(percents);
            g["mean_percent"] = s.mean;
            g["sd_percent"] = s.sd;
        } else {
            g["mean_percent"] = percents.front();
            g["sd_percent"] = nullptr;
        }
        g["pooled"] = rate_json(make_rate_estimate(k, n_eff, abstain));
        out_groups.push_back(g);
    }

    ordered_json rep = base_report("rates", o.seed);
    rep["groups"] = out_groups;
    emit_report(rep, o.out);
}

void run_rates(const Opts& o) {
    require_inputs(o, 1, "rates");
    if (std::filesystem::is_directory(o.in[0]))
        run_rates_dir(o);
    else
        run_rates_file(o);
}

// ============================================================================
// transfer / robustness / dose
// ============================================================================

double rate_of_verdict_file(const std::string& path) {
    return rate(read_verdict_jsonl(path)).rate;
}

void run_transfer(const Opts& o) {
    double tau_s = o.tau_student;
    double tau_t = o.tau_teacher;
    if (tau_s < 0.0 && !o.student_file.empty())
        tau_s = rate_of_verdict_file(o.student_file);
    if (tau_t < 0.0 && !o.teacher_file.empty())
        tau_t = rate_of_verdict_file(o.teacher_file);
    if (tau_s < 0.0 || tau_t < 0.0)
        throw ValidationError(
            "transfer: need --tau-student/--tau-teacher or "
            "--student-file/--teacher-file");

    const TransferReport t = transfer(tau_s, tau_t);
    ordered_json rep = base_report("transfer", o.seed);
    rep["tau_student"] = t.tau_student;
    rep["tau_teacher"] = t.tau_teacher;
    rep["tau_rel"] = t.tau_rel;
    emit_report(rep, o.out);
}

void run_robustness(const Opts& o) {
    auto pick = [](double numeric, const std::string& file,
                   const char* what) -> double {
        if (numeric >= 0.0) return numeric;
        if (!file.empty()) return rate_of_verdict_file(file);
        throw ValidationError(std::string("robustness: missing ") + what);
    };
    const double tc =
        pick(o.teacher_clean, o.teacher_clean_file, "--teacher-clean");
    const double tp = pick(o.teacher_para, o.teacher_para_file, "--teacher-para");
    const double sc =
        pick(o.student_clean, o.student_clean_file, "--student-clean");
    const double sp = pick(o.student_para, o.student_para_file, "--student-para");

    const RobustnessReport r = robustness(tc, tp, sc, sp);
    ordered_json rep = base_report("robustness", o.seed);
    rep["R_T"] = r.R_T;
    rep["R_S"] = r.R_S;
    rep["R_rel"] = r.R_rel;
    rep["regime"] = to_string(r.regime);
    emit_report(rep, o.out);
}

void run_dose(const Opts& o) {
    if (o.in.size() < 2)
        throw ValidationError(
            "dose: need a baseline detect report plus at least one arm "
            "(--in baseline --in arm ...)");
    if (o.density.size() != o.in.size() - 1)
        throw ValidationError(
            "dose: need one --density per arm after the baseline (got " +
            std::to_string(o.density.size()) + " for " +
            std::to_string(o.in.size() - 1) + " arms)");

    const RateEstimate baseline =
        rate_from_json(parse_json_file(o.in[0]).at("rate"), o.in[0]);
    std::vector<DosePoint> points;
    for (std::size_t i = 1; i < o.in.size(); ++i) {
        DosePoint p;
        p.rho = o.density[i - 1];
        p.rate = rate_from_json(parse_json_file(o.in[i]).at("rate"), o.in[i]);
        points.push_back(p);
    }

    const DoseReport d = dose_response(points, baseline);
    ordered_json rep = base_report("dose", o.seed);
    rep["monotone"] = d.monotone;
    ordered_json arms = ordered_json::array();
    for (const auto& a : d.arms) {
        ordered_json aj;
        aj["rho"] = a.rho;
        aj["rate"] = a.rate;
        aj["abs_lift"] = a.abs_lift;
        if (a.mult_lift)
            aj["mult_lift"] = *a.mult_lift;
        else
            aj["mult_lift"] = nullptr;
        arms.push_back(aj);
    }
    rep["arms"] = arms;
    emit_report(rep, o.out);
}

// ============================================================================
// kappa
// ============================================================================

void run_kappa(const Opts& o) {
    if (o.in.size() < 2)
        throw ValidationError("kappa: need at least two --in verdict files");

    std::vector<LabelVector> raters;
    std::vector<std::int64_t> dropped;
    for (const auto& path : o.in) {
        auto [lv, drops] = drop_abstains(read_verdict_jsonl(path));
        raters.push_back(std::move(lv));
        dropped.push_back(drops);
    }

    // Items every rater labeled, in the first rater's order.
    std::set<std::string> common(raters[0].item_ids.begin(),
                                 raters[0].item_ids.end());
    for (std::size_t r = 1; r < raters.size(); ++r) {
        const std::set<std::string> ids(raters[r].item_ids.begin(),
                                        raters[r].item_ids.end());
        std::set<std::string> next;
        for (const auto& id : common)
            if (ids.count(id)) next.insert(id);
        common = std::move(next);
    }
    if (common.empty())
        throw ValidationError("kappa: no items labeled by every rater");
    const std::vector<std::string> common_ids(common.begin(), common.end());
    for (auto& r : raters) r = restrict_to(r, common_ids);

    ordered_json rep = base_report("kappa", o.seed);
    rep["raters"] = static_cast<std::int64_t>(raters.size());
    rep["items"] = static_cast<std::int64_t>(common.size());
    rep["dropped_abstains"] = dropped;

    const ConfusionMatrix2x2 cm = agreement_detail::confusion_of(
        agreement_detail::align(raters[0], raters[1]));
    if (raters.size() == 2) {
        const AgreementReport a = cohen_kappa(raters[0], raters[1]);
        const BootstrapCi ci = bootstrap_kappa_ci(
            raters[0], raters[1], static_cast<std::size_t>(o.bootstrap), 0.95,
            o.seed ? static_cast<std::uint64_t>(*o.seed) : 0);
        rep["kappa"] = a.kappa;
        rep["ci_low"] = ci.low;
        rep["ci_high"] = ci.high;
        rep["p_observed"] = a.p_observed;
        rep["p_expected"] = a.p_expected;
        rep["bootstrap_resamples"] = static_cast<std::int64_t>(o.bootstrap);
    } else {
        // Per-item label rows aligned by id across all raters.
        std::vector<std::map<std::string, bool>> by_id(raters.size());
        for (std::size_t r = 0; r < raters.size(); ++r)
            for (std::size_t i = 0; i < raters[r].item_ids.size(); ++i)
                by_id[r][raters[r].item_ids[i]] = raters[r].labels[i];
        std::vector<std::vector<bool>> items;
        for (const auto& id : raters[0].item_ids) {
            std::vector<bool> row;
            for (const auto& m : by_id) row.push_back(m.at(id));
            items.push_back(std::move(row));
        }
        const AgreementReport fl = fleiss_kappa(items);
        rep["fleiss_kappa"] = fl.kappa;
        rep["p_observed"] = fl.p_observed;
        rep["p_expected"] = fl.p_expected;
        ordered_json pairs = ordered_json::array();
        for (std::size_t a = 0; a < raters.size(); ++a)
            for (std::size_t b = a + 1; b < raters.size(); ++b) {
                ordered_json pj;
                pj["a"] = static_cast<std::int64_t>(a);
                pj["b"] = static_cast<std::int64_t>(b);
                pj["kappa"] = cohen_kappa(raters[a], raters[b]).kappa;
                pairs.push_back(pj);
            }
        rep["pairwise"] = pairs;
    }

    std::string csv_path = o.confusion_csv;
    if (csv_path.empty())
        csv_path = o.out.empty() ? "kappa_confusion.csv"
                                 : o.out + ".confusion.csv";
    std::ofstream csv(csv_path, std::ios::binary | std::ios::trunc);
    if (!csv) throw IoError("cannot open " + csv_path + " for writing");
    csv << ",yes,no\n";
    csv << "yes," << cm.yy << "," << cm.yn << "\n";
    csv << "no," << cm.ny << "," << cm.nn << "\n";
    if (!csv) throw IoError("short write to " + csv_path);
    rep["confusion_csv"] = csv_path;

    emit_report(rep, o.out);
}

// ============================================================================
// h5
// ============================================================================

RatingsMatrix load_ratings(const Opts& o, const char* command) {
    require_inputs(o, 1, command);
    return parse_ratings_csv(slurp_file(o.in[0]));
}

std::size_t column_of(const RatingsMatrix& m, const std::string& name) {
    for (std::size_t i = 0; i < m.conditions.size(); ++i)
        if (m.conditions[i] == name) return i;
    std::string have;
    for (const auto& c : m.conditions) have += (have.empty() ? "" : ", ") + c;
    throw ValidationError("unknown condition \"" + name + "\" (have: " + have +
                          ")");
}

std::pair<std::string, std::string> split_pair(const std::string& spec) {
    const auto comma = spec.find(',');
    if (comma == std::string::npos || comma == 0 || comma + 1 == spec.size())
        throw ValidationError(
            "--conditions wants two comma-separated names, e.g. \"a,b\"");
    return {spec.substr(0, comma), spec.substr(comma + 1)};
}

std::vector<double> paired_diffs(const RatingsMatrix& m, const std::string& a,
                                 const std::string& b) {
    const std::size_t ia = column_of(m, a);
    const std::size_t ib = column_of(m, b);
    std::vector<double> diffs;
    for (const auto& row : m.values)
        diffs.push_back(static_cast<double>(row[ia]) -
                        static_cast<double>(row[ib]));
    return diffs;
}

ordered_json test_json(const TestResult& t) {
    ordered_json j;
    j["statistic"] = t.statistic;
    if (t.df)
        j["df"] = *t.df;
    else
        j["df"] = nullptr;
    j["p_value"] = t.p_value;
    j["decision"] = t.decision;
    j["alpha"] = t.alpha;
    return j;
}

void run_h5_tost(const Opts& o) {
    const RatingsMatrix m = load_ratings(o, "h5 tost");
    const auto [a, b] = split_pair(o.conditions_pair);
    const TestResult t = tost_paired(paired_diffs(m, a, b), o.margin, o.alpha);
    ordered_json rep = base_report("h5 tost", o.seed);
    rep["conditions"] = {a, b};
    rep["margin"] = o.margin;
    rep.update(test_json(t));
    emit_report(rep, o.out);
}

void run_h5_friedman(const Opts& o) {
    const RatingsMatrix m = load_ratings(o, "h5 friedman");
    const TestResult t = friedman(m, o.alpha);
    ordered_json rep = base_report("h5 friedman", o.seed);
    rep["conditions"] = m.conditions;
    rep.update(test_json(t));
    emit_report(rep, o.out);
}

void run_h5_wilcoxon(const Opts& o) {
    const RatingsMatrix m = load_ratings(o, "h5 wilcoxon");
    ordered_json rep = base_report("h5 wilcoxon", o.seed);

    if (!o.conditions_pair.empty()) {
        const auto [a, b] = split_pair(o.conditions_pair);
        const TestResult t =
            wilcoxon_signed_rank(paired_diffs(m, a, b), 25, o.alpha);
        rep["conditions"] = {a, b};
        rep.update(test_json(t));
        emit_report(rep, o.out);
        return;
    }
    if (o.baseline_cond.empty())
        throw ValidationError(
            "h5 wilcoxon: pass --conditions a,b or --baseline <condition>");

    (void)column_of(m, o.baseline_cond);
    std::vector<std::string> others;
    for (const auto& c : m.conditions)
        if (c != o.baseline_cond) others.push_back(c);
    std::vector<TestResult> results;
    std::vector<double> ps;
    for (const auto& c : others) {
        results.push_back(wilcoxon_signed_rank(
            paired_diffs(m, c, o.baseline_cond), 25, o.alpha));
        ps.push_back(results.back().p_value);
    }
    const auto adjusted = bonferroni(ps, o.alpha);

    rep["baseline"] = o.baseline_cond;
    ordered_json pairs = ordered_json::array();
    for (std::size_t i = 0; i < others.size(); ++i) {
        ordered_json pj;
        pj["condition"] = others[i];
        pj["statistic"] = results[i].statistic;
        pj["p_value"] = results[i].p_value;
        pj["p_adjusted"] = adjusted[i].p_adjusted;
        pj["reject"] = adjusted[i].reject;
        pairs.push_back(pj);
    }
    rep["pairs"] = pairs;
    rep["alpha"] = o.alpha;
    emit_report(rep, o.out);
}

void run_h5_latin(const Opts& o) {
    std::optional<std::uint64_t> seed;
    if (o.seed) seed = static_cast<std::uint64_t>(*o.seed);
    const auto square = latin_square(o.latin_k, seed);
    ordered_json rep = base_report("h5 latin", o.seed);
    rep["k"] = o.latin_k;
    rep["square"] = square;
    emit_report(rep, o.out);
}

// ============================================================================
// geno
// ============================================================================

void run_geno_watermark(const Opts& o) {
    if (o.out.empty())
        throw ValidationError("geno watermark: --out is required");
    if (o.n < 1) throw ValidationError("geno watermark: --n must be >= 1");
    const GreenListParams params = params_from(o);
    const AuditKey key = audit_key_from_env();
    const std::uint64_t seed0 =
        o.seed ? static_cast<std::uint64_t>(*o.seed) : 0;

    GreenTable table(key, params);
    const UniformLogitSource source;
    Sampler sampler(source, table);
    std::vector<TokenSequence> seqs;
    for (long long i = 0; i < o.n; ++i) {
        seqs.push_back(sampler.generate(
            o.length, derived_seed(seed0, static_cast<std::uint64_t>(i) + 1)));
        seqs.back().id =
            "seq-" + simulate_detail::padded_index(i, 4);
    }
    write_sequence_jsonl(o.out, seqs);

    ordered_json rep = base_report("geno watermark", o.seed);
    rep["n"] = o.n;
    rep["length"] = o.length;
    rep["params"] = params_json(params);
    rep["out"] = o.out;
    emit_report(rep, "");
}

ordered_json z_report_json(const std::string& id, const ZReport& r) {
    ordered_json j;
    j["id"] = id;
    j["S"] = r.S;
    j["T"] = r.T;
    j["z"] = r.z;
    j["detected"] = r.detected;
    return j;
}

void run_geno_audit(const Opts& o) {
    require_inputs(o, 1, "geno audit");
    const GreenListParams params = params_from(o);
    const AuditKey key = audit_key_from_env();
    const auto seqs = read_sequence_jsonl(o.in[0]);
    if (seqs.empty()) throw ValidationError("geno audit: no sequences");

    GreenTable table(key, params);
    ordered_json reports = ordered_json::array();
    for (const auto& s : seqs)
        reports.push_back(z_report_json(s.id, z_score(s, table)));

    ordered_json rep = base_report("geno audit", o.seed);
    rep["params"] = params_json(params);
    rep["reports"] = reports;
    emit_report(rep, o.out);
}

void run_geno_aggregate(const Opts& o) {
    require_inputs(o, 1, "geno aggregate");
    const ordered_json audit = parse_json_file(o.in[0]);
    std::vector<double> zs;
    std::vector<std::string> ids;
    try {
        for (const auto& r : audit.at("reports")) {
            zs.push_back(r.at("z").get<double>());
            ids.push_back(r.at("id").get<std::string>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(o.in[0] + ": not a geno audit report: " +
                              e.what());
    }
    const double z = aggregate_z(zs);

    ordered_json rep = base_report("geno aggregate", o.seed);
    rep["n"] = static_cast<std::int64_t>(zs.size());
    rep["z"] = z;
    rep["threshold_z"] = o.threshold_z;
    rep["detected"] = z > o.threshold_z;
    emit_report(rep, o.out);
}

void run_geno_sweep(const Opts& o) {
    require_inputs(o, 1, "geno sweep");
    const GreenListParams params = params_from(o);
    const AuditKey key = audit_key_from_env();
    const auto seqs = read_sequence_jsonl(o.in[0]);
    if (seqs.empty()) throw ValidationError("geno sweep: no sequences");
    const std::uint64_t seed0 =
        o.seed ? static_cast<std::uint64_t>(*o.seed) : 0;

    GreenTable table(key, params);
    ordered_json arms = ordered_json::array();
    for (std::size_t ri = 0; ri < o.rates.size(); ++ri) {
        const double rate = o.rates[ri];
        const std::uint64_t arm_seed = derived_seed(
            seed0, 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(ri) + 1));
        double sum_z = 0.0;
        std::int64_t detected = 0;
        for (std::size_t i = 0; i < seqs.size(); ++i) {
            const TokenSequence m =
                mutate(seqs[i], rate, params.vocab_size,
                       derived_seed(arm_seed, static_cast<std::uint64_t>(i) + 1));
            const ZReport r = z_score(m, table);
            sum_z += r.z;
            detected += r.detected ? 1 : 0;
        }
        ordered_json aj;
        aj["rate"] = rate;
        aj["mean_z"] = sum_z / static_cast<double>(seqs.size());
        aj["detected_fraction"] =
            static_cast<double>(detected) / static_cast<double>(seqs.size());
        arms.push_back(aj);
    }

    ordered_json rep = base_report("geno sweep", o.seed);
    rep["params"] = params_json(params);
    rep["n"] = static_cast<std::int64_t>(seqs.size());
    rep["arms"] = arms;
    emit_report(rep, o.out);
}

// ============================================================================
// simulate
// ============================================================================

void run_simulate_fixture(const Opts& o) {
    if (o.out.empty())
        throw ValidationError("simulate fixture: --out is required");
    gen_reference_fixture(o.out);
    ordered_json rep = base_report("simulate fixture", o.seed);
    rep["cells"] =
        static_cast<std::int64_t>(reference_fixture_cells().size());
    rep["out"] = o.out;
    emit_report(rep, "");
}

void run_simulate_agent(const Opts& o) {
    if (o.out.empty())
        throw ValidationError("simulate agent: --out is required");
    SyntheticAgent agent;
    agent.name = o.agent_name;
    agent.seed = o.seed ? static_cast<std::uint64_t>(*o.seed) : 0;
    const Condition cond = condition_from_string(o.condition);
    agent.marker_prob[cond] = o.prob;
    const auto verdicts = gen_verdicts(agent, cond, o.n, o.abstain_prob);
    write_verdict_jsonl(o.out, verdicts);

    ordered_json rep = base_report("simulate agent", o.seed);
    rep["agent"] = agent.name;
    rep["condition"] = to_string(cond);
    rep["n"] = o.n;
    rep["prob"] = o.prob;
    rep["abstain_prob"] = o.abstain_prob;
    rep["out"] = o.out;
    emit_report(rep, "");
}

}  // namespace

// ============================================================================
// Dispatch
// ============================================================================

int main(int argc, char** argv) {
    CLI::App app{"watermark-audit batch toolkit"};
    app.require_subcommand(1);

    Opts o;
    std::function<void()> action;

    auto add_in = [&](CLI::App* c, const char* help) {
        c->add_option("--in", o.in, help);
    };
    auto add_out = [&](CLI::App* c) {
        c->add_option("--out", o.out, "report destination (default stdout)");
    };
    auto add_seed = [&](CLI::App* c) {
        c->add_option("--seed", o.seed, "seed echoed into the report");
    };
    auto add_green = [&](CLI::App* c) {
        c->add_option("--gamma", o.gamma, "green-list fraction");
        c->add_option("--delta", o.delta, "logit bias");
        c->add_option("--vocab", o.vocab, "vocabulary size");
        c->add_option("--threshold-z", o.threshold_z, "detection threshold");
    };

    // clean
    {
        auto* c = app.add_subcommand("clean",
                                     "trim repeated tails, write response_clean");
        add_in(c, "response JSONL");
        c->add_option("--out", o.out, "cleaned JSONL destination")->required();
        add_seed(c);
        c->callback([&] { action = [&] { run_clean(o); }; });
    }

    // filter pairwise|intersect
    {
        auto* f = app.add_subcommand("filter", "survivor filters");
        f->require_subcommand(1);
        auto* p = f->add_subcommand(
            "pairwise", "ids whose paired responses both end a sentence");
        add_in(p, "two response JSONL files");
        add_out(p);
        add_seed(p);
        p->callback([&] { action = [&] { run_filter_pairwise(o); }; });

        auto* i = f->add_subcommand(
            "intersect", "ids ending a sentence in every run");
        add_in(i, "response JSONL files");
        add_out(i);
        add_seed(i);
        i->callback([&] { action = [&] { run_filter_intersect(o); }; });
    }

    // detect regex
    {
        auto* d = app.add_subcommand("detect", "marker detectors");
        d->require_subcommand(1);
        auto* r = d->add_subcommand("regex",
                                    "question-ending marker rate with Wilson CI");
        add_in(r, "response JSONL");
        add_out(r);
        add_seed(r);
        r->add_option("--subset-ids", o.subset_ids,
                      "file of ids to restrict scoring to");
        r->callback([&] { action = [&] { run_detect_regex(o); }; });
    }

    // judge run
    {
        auto* j = app.add_subcommand("judge", "judge-endpoint orchestration");
        j->require_subcommand(1);
        auto* r = j->add_subcommand("run", "judge every record via the endpoint");
        add_in(r, "response JSONL");
        r->add_option("--out", o.out, "verdict JSONL destination")->required();
        add_seed(r);
        r->add_option("--rubric", o.rubric, "strong|soft|style_control");
        r->add_option("--audit-log", o.audit_log, "append-only audit trail");
        r->callback([&] { action = [&] { run_judge(o); }; });
    }

    // rates
    {
        auto* c = app.add_subcommand(
            "rates", "marker rates from a verdict file or fixture tree");
        add_in(c, "verdict JSONL or fixture directory");
        add_out(c);
        add_seed(c);
        c->add_option("--subset-ids", o.subset_ids,
                      "file of ids to restrict to (file mode)");
        c->callback([&] { action = [&] { run_rates(o); }; });
    }

    // transfer
    {
        auto* c = app.add_subcommand("transfer", "student/teacher rate ratio");
        add_out(c);
        add_seed(c);
        c->add_option("--tau-student", o.tau_student, "student marker rate");
        c->add_option("--tau-teacher", o.tau_teacher, "teacher marker rate");
        c->add_option("--student-file", o.student_file, "student verdict JSONL");
        c->add_option("--teacher-file", o.teacher_file, "teacher verdict JSONL");
        c->callback([&] { action = [&] { run_transfer(o); }; });
    }

    // robustness
    {
        auto* c = app.add_subcommand(
            "robustness", "two-level paraphrase-retention decomposition");
        add_out(c);
        add_seed(c);
        c->add_option("--teacher-clean", o.teacher_clean);
        c->add_option("--teacher-para", o.teacher_para);
        c->add_option("--student-clean", o.student_clean);
        c->add_option("--student-para", o.student_para);
        c->add_option("--teacher-clean-file", o.teacher_clean_file);
        c->add_option("--teacher-para-file", o.teacher_para_file);
        c->add_option("--student-clean-file", o.student_clean_file);
        c->add_option("--student-para-file", o.student_para_file);
        c->callback([&] { action = [&] { run_robustness(o); }; });
    }

    // dose
    {
        auto* c = app.add_subcommand(
            "dose", "dose-response over detect reports (first --in = baseline)");
        add_in(c, "detect report JSONs, baseline first");
        add_out(c);
        add_seed(c);
        c->add_option("--density", o.density, "rho per arm after the baseline")
            ->delimiter(',');
        c->callback([&] { action = [&] { run_dose(o); }; });
    }

    // kappa
    {
        auto* c = app.add_subcommand("kappa", "inter-rater agreement");
        add_in(c, "verdict JSONL files (two or more)");
        add_out(c);
        add_seed(c);
        c->add_option("--bootstrap", o.bootstrap, "bootstrap resamples");
        c->add_option("--confusion-csv", o.confusion_csv,
                      "confusion matrix destination");
        c->callback([&] { action = [&] { run_kappa(o); }; });
    }

    // h5
    {
        auto* h = app.add_subcommand("h5", "pre-registered analysis battery");
        h->require_subcommand(1);

        auto* t = h->add_subcommand("tost", "paired equivalence test");
        add_in(t, "ratings CSV");
        add_out(t);
        add_seed(t);
        t->add_option("--conditions", o.conditions_pair, "pair, e.g. a,b")
            ->required();
        t->add_option("--margin", o.margin, "equivalence margin");
        t->add_option("--alpha", o.alpha, "significance level");
        t->callback([&] { action = [&] { run_h5_tost(o); }; });

        auto* f = h->add_subcommand("friedman", "rank test across conditions");
        add_in(f, "ratings CSV");
        add_out(f);
        add_seed(f);
        f->add_option("--alpha", o.alpha, "significance level");
        f->callback([&] { action = [&] { run_h5_friedman(o); }; });

        auto* w = h->add_subcommand("wilcoxon", "paired signed-rank test");
        add_in(w, "ratings CSV");
        add_out(w);
        add_seed(w);
        w->add_option("--conditions", o.conditions_pair, "pair, e.g. a,b");
        w->add_option("--baseline", o.baseline_cond,
                      "compare every other condition against this one");
        w->add_option("--alpha", o.alpha, "significance level");
        w->callback([&] { action = [&] { run_h5_wilcoxon(o); }; });

        auto* l = h->add_subcommand("latin", "balanced latin square");
        add_out(l);
        add_seed(l);
        l->add_option("--k", o.latin_k, "order of the square");
        l->callback([&] { action = [&] { run_h5_latin(o); }; });
    }

    // geno
    {
        auto* g = app.add_subcommand("geno", "token-layer watermark tools");
        g->require_subcommand(1);

        auto* w = g->add_subcommand("watermark", "generate marked sequences");
        w->add_option("--out", o.out, "sequence JSONL destination")->required();
        add_seed(w);
        add_green(w);
        w->add_option("--n", o.n, "sequences to generate");
        w->add_option("--length", o.length, "tokens per sequence incl. prompt");
        w->callback([&] { action = [&] { run_geno_watermark(o); }; });

        auto* a = g->add_subcommand("audit", "z-score sequences");
        add_in(a, "sequence JSONL");
        add_out(a);
        add_seed(a);
        add_green(a);
        a->callback([&] { action = [&] { run_geno_audit(o); }; });

        auto* ag = g->add_subcommand("aggregate", "pool audited z-scores");
        add_in(ag, "geno audit report JSON");
        add_out(ag);
        add_seed(ag);
        ag->add_option("--threshold-z", o.threshold_z, "detection threshold");
        ag->callback([&] { action = [&] { run_geno_aggregate(o); }; });

        auto* s = g->add_subcommand("sweep", "mutation-robustness sweep");
        add_in(s, "sequence JSONL");
        add_out(s);
        add_seed(s);
        add_green(s);
        s->add_option("--rates", o.rates, "mutation rates to sweep")
            ->delimiter(',');
        s->callback([&] { action = [&] { run_geno_sweep(o); }; });
    }

    // simulate
    {
        auto* s = app.add_subcommand("simulate", "synthetic verdict sources");
        s->require_subcommand(1);

        auto* f = s->add_subcommand("fixture", "write the reference fixture tree");
        f->add_option("--out", o.out, "fixture root directory")->required();
        add_seed(f);
        f->callback([&] { action = [&] { run_simulate_fixture(o); }; });

        auto* a = s->add_subcommand("agent", "Bernoulli marker emitter");
        a->add_option("--out", o.out, "verdict JSONL destination")->required();
        add_seed(a);
        a->add_option("--condition", o.condition, "condition label");
        a->add_option("--prob", o.prob, "marker probability");
        a->add_option("--abstain-prob", o.abstain_prob, "abstention probability");
        a->add_option("--n", o.n, "verdicts to draw");
        a->add_option("--name", o.agent_name, "agent name used in ids");
        a->callback([&] { action = [&] { run_simulate_agent(o); }; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        action();
    } catch (const JudgeEndpointError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

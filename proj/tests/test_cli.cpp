// End-to-end exercises of the markaudit binary. Every scenario shells out to
// the real executable (path injected as MARKAUDIT_CLI_PATH), captures its
// streams, and checks the emitted reports against in-process computations.

#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "markaudit/judge.hpp"
#include "markaudit/jsonl.hpp"
#include "markaudit/metrics.hpp"
#include "markaudit/studystats.hpp"

using namespace markaudit;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CliResult run_cli(const std::string& args) {
    static int counter = 0;
    const fs::path out = fs::temp_directory_path() /
                         ("cli_stdout_" + std::to_string(counter) + ".txt");
    const fs::path err = fs::temp_directory_path() /
                         ("cli_stderr_" + std::to_string(counter) + ".txt");
    ++counter;
    const std::string cmd = std::string(MARKAUDIT_CLI_PATH) + " " + args +
                            " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    fs::remove(out);
    fs::remove(err);
    return r;
}

/// Fresh scratch directory, wiped on entry and exit.
struct TempTree {
    explicit TempTree(const std::string& name)
        : root(fs::temp_directory_path() / name) {
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~TempTree() { fs::remove_all(root); }
    std::string operator/(const std::string& leaf) const {
        return (root / leaf).string();
    }
    fs::path root;
};

/// Scoped environment variable; restores the previous value on destruction.
struct EnvGuard {
    EnvGuard(const char* name, const std::string& value) : name_(name) {
        const char* old = std::getenv(name);
        if (old) previous_ = old;
        ::setenv(name, value.c_str(), 1);
    }
    explicit EnvGuard(const char* name) : name_(name) {
        const char* old = std::getenv(name);
        if (old) previous_ = old;
        ::unsetenv(name);
    }
    ~EnvGuard() {
        if (previous_)
            ::setenv(name_, previous_->c_str(), 1);
        else
            ::unsetenv(name_);
    }
    const char* name_;
    std::optional<std::string> previous_;
};

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    REQUIRE(f.good());
    f << text;
}

std::string response_line(const std::string& id, const std::string& response) {
    ordered_json j;
    j["id"] = id;
    j["condition"] = "strong";
    j["prompt"] = "prompt for " + id;
    j["response"] = response;
    return j.dump() + "\n";
}

ordered_json parse_report(const std::string& text) {
    return ordered_json::parse(text);
}

}  // namespace

// ============================================================================
// Dispatch and exit codes
// ============================================================================

TEST_CASE("bad invocations exit 1 with usage text", "[cli]") {
    const CliResult none = run_cli("");
    CHECK(none.exit_code == 1);
    CHECK(none.err.find("Subcommands:") != std::string::npos);

    const CliResult unknown = run_cli("frobnicate");
    CHECK(unknown.exit_code == 1);
    CHECK(unknown.err.find("Subcommands:") != std::string::npos);

    const CliResult help = run_cli("--help");
    CHECK(help.exit_code == 0);
    CHECK(help.out.find("watermark-audit") != std::string::npos);
}

TEST_CASE("error classes map to distinct exit codes", "[cli]") {
    // Missing input file: I/O.
    CHECK(run_cli("rates --in /nonexistent/verdicts.jsonl").exit_code == 2);
    // Too few inputs: validation.
    TempTree t("markaudit_cli_exitcodes");
    write_file(t / "v.jsonl", "");
    CHECK(run_cli("kappa --in " + (t / "v.jsonl")).exit_code == 1);
    CHECK(run_cli("dose --in " + (t / "v.jsonl")).exit_code == 1);
    // Missing required flag: parse error.
    CHECK(run_cli("clean --in " + (t / "v.jsonl")).exit_code == 1);
}

// ============================================================================
// simulate
// ============================================================================

TEST_CASE("simulate agent is deterministic and seed-sensitive", "[cli]") {
    TempTree t("markaudit_cli_agent");
    const std::string args =
        " --condition soft --n 50 --prob 0.4 --abstain-prob 0.1 --seed 99 "
        "--name probe";
    const CliResult r1 =
        run_cli("simulate agent --out " + (t / "a.jsonl") + args);
    REQUIRE(r1.exit_code == 0);
    const ordered_json rep = parse_report(r1.out);
    CHECK(rep.at("seed") == 99);
    CHECK(rep.at("condition") == "soft");

    run_cli("simulate agent --out " + (t / "b.jsonl") + args);
    CHECK(slurp(t / "a.jsonl") == slurp(t / "b.jsonl"));

    run_cli("simulate agent --out " + (t / "c.jsonl") +
            " --condition soft --n 50 --prob 0.4 --abstain-prob 0.1 --seed 98 "
            "--name probe");
    CHECK(slurp(t / "a.jsonl") != slurp(t / "c.jsonl"));

    const auto verdicts = read_verdict_jsonl(t / "a.jsonl");
    REQUIRE(verdicts.size() == 50);
    CHECK(verdicts[0].id == "probe-soft-00000");
}

TEST_CASE("fixture tree reproduces the published aggregates end to end",
          "[cli]") {
    TempTree t("markaudit_cli_fixture");
    REQUIRE(run_cli("simulate fixture --out " + (t / "fx")).exit_code == 0);

    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(t / "fx"))
        if (e.is_regular_file()) ++files;
    CHECK(files == 81);

    // Regenerating yields the same bytes everywhere.
    REQUIRE(run_cli("simulate fixture --out " + (t / "fx2")).exit_code == 0);
    for (const auto& e : fs::recursive_directory_iterator(t / "fx")) {
        if (!e.is_regular_file()) continue;
        const fs::path rel = fs::relative(e.path(), t / "fx");
        CHECK(slurp(e.path()) == slurp(fs::path(t / "fx2") / rel));
    }

    const CliResult rr =
        run_cli("rates --in " + (t / "fx") + " --out " + (t / "rates.json"));
    REQUIRE(rr.exit_code == 0);
    const ordered_json rep = parse_report(slurp(t / "rates.json"));

    struct Want {
        const char* family;
        const char* condition;
        const char* rubric;
        double mean;
        double sd;
    };
    const std::vector<Want> wants = {
        {"gemma", "strong", "strong", 80.87, 2.15},
        {"gemma", "strong_up", "strong", 47.87, 12.14},
        {"olmo", "soft", "strong", 31.99, 3.04},
    };
    for (const Want& w : wants) {
        bool found = false;
        for (const auto& g : rep.at("groups")) {
            if (g.at("family") != w.family || g.at("condition") != w.condition ||
                g.at("rubric") != w.rubric)
                continue;
            found = true;
            CHECK(std::abs(g.at("mean_percent").get<double>() - w.mean) <= 0.01);
            CHECK(std::abs(g.at("sd_percent").get<double>() - w.sd) <= 0.01);
            CHECK(g.at("seeds") == ordered_json({42, 1815, 7026}));
        }
        CHECK(found);
    }

    // The pooled never-fires cell keeps a zero numerator over three seeds.
    for (const auto& g : rep.at("groups")) {
        if (g.at("family") == "gemma" && g.at("condition") == "baseline" &&
            g.at("rubric") == "strong") {
            CHECK(g.at("pooled").at("k") == 0);
            CHECK(g.at("pooled").at("n_effective") == 1683);
            CHECK(g.at("pooled").at("ci_low") == 0.0);
            CHECK(100.0 * g.at("pooled").at("ci_high").get<double>() ==
                  Catch::Approx(0.23).margin(0.005));
        }
    }
}

// ============================================================================
// clean / detect / filter
// ============================================================================

TEST_CASE("clean trims tandem tails and writes the sidecar", "[cli]") {
    TempTree t("markaudit_cli_clean");
    std::string body;
    body += response_line(
        "r1", "Weigh both sides. What do you think? What do you think? What "
              "do you think?");
    body += response_line("r2", "It ends plainly.");
    write_file(t / "in.jsonl", body);

    const CliResult r =
        run_cli("clean --in " + (t / "in.jsonl") + " --out " + (t / "out.jsonl"));
    REQUIRE(r.exit_code == 0);
    const ordered_json rep = parse_report(r.out);
    CHECK(rep.at("records") == 2);
    CHECK(rep.at("trimmed") == 1);

    const auto rows = read_response_jsonl(t / "out.jsonl");
    REQUIRE(rows.size() == 2);
    REQUIRE(rows[0].response_clean.has_value());
    CHECK(*rows[0].response_clean ==
          "Weigh both sides. What do you think?");
    CHECK(*rows[1].response_clean == "It ends plainly.");

    const std::string sidecar = slurp(t / "out.trim.jsonl");
    std::istringstream lines(sidecar);
    std::string line;
    REQUIRE(std::getline(lines, line));
    const ordered_json trim = ordered_json::parse(line);
    CHECK(trim.at("id") == "r1");
    CHECK(trim.at("repeats_removed") == 2);
    CHECK(trim.at("period") == 19);

    // Byte-identical on rerun.
    run_cli("clean --in " + (t / "in.jsonl") + " --out " + (t / "out2.jsonl"));
    CHECK(slurp(t / "out.jsonl") == slurp(t / "out2.jsonl"));
    CHECK(slurp(t / "out.trim.jsonl") == slurp(t / "out2.trim.jsonl"));
}

TEST_CASE("detect regex scores question enders with a Wilson interval",
          "[cli]") {
    TempTree t("markaudit_cli_detect");
    std::string body;
    body += response_line("a", "Plain statement.");
    body += response_line("b", "Want to hear more?");
    body += response_line("c", "Shall we continue?");
    body += response_line("d", "Done now.");
    write_file(t / "in.jsonl", body);

    const CliResult r = run_cli("detect regex --in " + (t / "in.jsonl"));
    REQUIRE(r.exit_code == 0);
    const ordered_json rep = parse_report(r.out);
    CHECK(rep.at("rate").at("k") == 2);
    CHECK(rep.at("rate").at("n_effective") == 4);

    const RateEstimate expect = make_rate_estimate(2, 4);
    CHECK(rep.at("rate").at("ci_low").get<double>() ==
          Catch::Approx(expect.ci_low).epsilon(1e-12));
    CHECK(rep.at("rate").at("ci_high").get<double>() ==
          Catch::Approx(expect.ci_high).epsilon(1e-12));

    std::map<std::string, bool> marked;
    for (const auto& e : rep.at("per_id"))
        marked[e.at("id")] = e.at("marked").get<bool>();
    CHECK(marked == std::map<std::string, bool>{
                        {"a", false}, {"b", true}, {"c", true}, {"d", false}});

    // Subset restriction drops the unlisted ids.
    write_file(t / "ids.txt", "b\nd\n");
    const CliResult sub = run_cli("detect regex --in " + (t / "in.jsonl") +
                                  " --subset-ids " + (t / "ids.txt"));
    REQUIRE(sub.exit_code == 0);
    const ordered_json srep = parse_report(sub.out);
    CHECK(srep.at("rate").at("k") == 1);
    CHECK(srep.at("rate").at("n_effective") == 2);
}

TEST_CASE("filters keep only sentence-final survivors", "[cli]") {
    TempTree t("markaudit_cli_filter");
    std::string a;
    a += response_line("r1", "Complete.");
    a += response_line("r2", "cut off mid");
    a += response_line("r3", "A question?");
    std::string b;
    b += response_line("r1", "Also complete.");
    b += response_line("r2", "Full stop here.");
    b += response_line("r3", "dangling");
    write_file(t / "a.jsonl", a);
    write_file(t / "b.jsonl", b);

    const CliResult pw = run_cli("filter pairwise --in " + (t / "a.jsonl") +
                                 " --in " + (t / "b.jsonl"));
    REQUIRE(pw.exit_code == 0);
    CHECK(parse_report(pw.out).at("kept_ids") ==
          ordered_json(std::vector<std::string>{"r1"}));

    const CliResult is = run_cli("filter intersect --in " + (t / "a.jsonl") +
                                 " --in " + (t / "b.jsonl"));
    REQUIRE(is.exit_code == 0);
    CHECK(parse_report(is.out).at("kept_ids") ==
          ordered_json(std::vector<std::string>{"r1"}));
}

// ============================================================================
// rates / transfer / robustness / dose
// ============================================================================

TEST_CASE("rates file mode matches the in-process estimate", "[cli]") {
    TempTree t("markaudit_cli_rates");
    run_cli("simulate agent --out " + (t / "v.jsonl") +
            " --condition strong --n 80 --prob 0.3 --seed 4 --name ag");
    const CliResult r = run_cli("rates --in " + (t / "v.jsonl"));
    REQUIRE(r.exit_code == 0);

    const RateEstimate expect = rate(read_verdict_jsonl(t / "v.jsonl"));
    const ordered_json rep = parse_report(r.out);
    CHECK(rep.at("rate").at("k") == expect.k);
    CHECK(rep.at("rate").at("n_effective") == expect.n_effective);
    CHECK(rep.at("rate").at("rate").get<double>() ==
          Catch::Approx(expect.rate).epsilon(1e-12));
}

TEST_CASE("transfer reproduces the strong-rubric spot ratio", "[cli]") {
    const CliResult r =
        run_cli("transfer --tau-student 0.8087 --tau-teacher 0.9093");
    REQUIRE(r.exit_code == 0);
    const double tau_rel = parse_report(r.out).at("tau_rel").get<double>();
    CHECK(100.0 * tau_rel == Catch::Approx(88.9).margin(0.1));

    // File mode agrees with numeric mode fed the same rates.
    TempTree t("markaudit_cli_transfer");
    run_cli("simulate agent --out " + (t / "s.jsonl") +
            " --condition strong --n 150 --prob 0.45 --seed 21 --name s");
    run_cli("simulate agent --out " + (t / "t.jsonl") +
            " --condition strong --n 150 --prob 0.9 --seed 22 --name t");
    const double tau_s = rate(read_verdict_jsonl(t / "s.jsonl")).rate;
    const double tau_t = rate(read_verdict_jsonl(t / "t.jsonl")).rate;
    const CliResult f = run_cli("transfer --student-file " + (t / "s.jsonl") +
                                " --teacher-file " + (t / "t.jsonl"));
    REQUIRE(f.exit_code == 0);
    CHECK(parse_report(f.out).at("tau_rel").get<double>() ==
          Catch::Approx(tau_s / tau_t).epsilon(1e-12));
}

TEST_CASE("robustness classifies the published retention numbers", "[cli]") {
    const CliResult r = run_cli(
        "robustness --teacher-clean 0.9093 --teacher-para 0.6037 "
        "--student-clean 0.7356 --student-para 0.5488");
    REQUIRE(r.exit_code == 0);
    const ordered_json rep = parse_report(r.out);
    CHECK(rep.at("R_T").get<double>() == Catch::Approx(0.6639).margin(0.001));
    CHECK(rep.at("R_S").get<double>() == Catch::Approx(0.7461).margin(0.001));
    CHECK(rep.at("R_rel").get<double>() == Catch::Approx(1.1237).margin(0.001));
    CHECK(rep.at("regime") == "amplifying");
}

TEST_CASE("dose reports lifts against the baseline interval", "[cli]") {
    TempTree t("markaudit_cli_dose");
    auto make_detect = [&](const std::string& name, int questions, int total) {
        std::string body;
        for (int i = 0; i < total; ++i)
            body += response_line(name + std::to_string(i),
                                  i < questions ? "Really?" : "Plain.");
        write_file(t / (name + ".jsonl"), body);
        run_cli("detect regex --in " + (t / (name + ".jsonl")) + " --out " +
                (t / (name + ".json")));
    };
    make_detect("base", 1, 10);
    make_detect("lo", 3, 10);
    make_detect("hi", 6, 10);

    const CliResult r = run_cli("dose --in " + (t / "base.json") + " --in " +
                                (t / "lo.json") + " --in " + (t / "hi.json") +
                                " --density 0.1,0.3");
    REQUIRE(r.exit_code == 0);
    const ordered_json rep = parse_report(r.out);
    CHECK(rep.at("monotone") == true);
    REQUIRE(rep.at("arms").size() == 2);
    CHECK(rep.at("arms")[0].at("rho").get<double>() == 0.1);
    CHECK(rep.at("arms")[0].at("mult_lift").get<double>() ==
          Catch::Approx(3.0).epsilon(1e-12));
    CHECK(rep.at("arms")[1].at("mult_lift").get<double>() ==
          Catch::Approx(6.0).epsilon(1e-12));

    // One density per arm, or nothing runs.
    CHECK(run_cli("dose --in " + (t / "base.json") + " --in " + (t / "lo.json") +
                  " --density 0.1,0.3")
              .exit_code == 1);
}

// ============================================================================
// kappa
// ============================================================================

TEST_CASE("kappa on identical raters is perfect and reproducible", "[cli]") {
    TempTree t("markaudit_cli_kappa");
    run_cli("simulate agent --out " + (t / "a.jsonl") +
            " --condition strong --n 200 --prob 0.5 --seed 31 --name ra");
    fs::copy_file(t / "a.jsonl", t / "b.jsonl");

    const std::string args = "kappa --in " + (t / "a.jsonl") + " --in " +
                             (t / "b.jsonl") + " --seed 7 --confusion-csv " +
                             (t / "cm.csv");
    const CliResult r = run_cli(args);
    REQUIRE(r.exit_code == 0);
    const ordered_json rep = parse_report(r.out);
    CHECK(rep.at("kappa").get<double>() == 1.0);
    CHECK(rep.at("ci_low").get<double>() == 1.0);
    CHECK(rep.at("ci_high").get<double>() == 1.0);
    CHECK(rep.at("items") == 200);

    // Confusion CSV holds the yes/no split and no off-diagonal mass.
    std::int64_t yes = 0;
    for (const auto& v : read_verdict_jsonl(t / "a.jsonl"))
        yes += v.verdict == VerdictValue::yes ? 1 : 0;
    const std::string csv = slurp(t / "cm.csv");
    std::istringstream lines(csv);
    std::string header, yes_row, no_row;
    REQUIRE(std::getline(lines, header));
    REQUIRE(std::getline(lines, yes_row));
    REQUIRE(std::getline(lines, no_row));
    CHECK(header == ",yes,no");
    CHECK(yes_row == "yes," + std::to_string(yes) + ",0");
    CHECK(no_row == "no,0," + std::to_string(200 - yes));

    const CliResult again = run_cli(args);
    CHECK(again.out == r.out);
}

TEST_CASE("kappa with three raters reports the multi-rater coefficient",
          "[cli]") {
    TempTree t("markaudit_cli_fleiss");
    run_cli("simulate agent --out " + (t / "a.jsonl") +
            " --condition strong --n 120 --prob 0.5 --seed 41 --name ra");
    fs::copy_file(t / "a.jsonl", t / "b.jsonl");
    fs::copy_file(t / "a.jsonl", t / "c.jsonl");

    const CliResult r = run_cli("kappa --in " + (t / "a.jsonl") + " --in " +
                                (t / "b.jsonl") + " --in " + (t / "c.jsonl") +
                                " --confusion-csv " + (t / "cm.csv"));
    REQUIRE(r.exit_code == 0);
    const ordered_json rep = parse_report(r.out);
    CHECK(rep.at("fleiss_kappa").get<double>() == 1.0);
    REQUIRE(rep.at("pairwise").size() == 3);
    for (const auto& p : rep.at("pairwise"))
        CHECK(p.at("kappa").get<double>() == 1.0);
}

// ============================================================================
// h5
// ============================================================================

namespace {

std::string fixed_ratings_csv() {
    // 8 participants x 4 conditions, hand-rolled spread.
    return "participant,baseline,injected,paraphrase,control\n"
           "p0,3,4,3,2\n"
           "p1,4,4,2,1\n"
           "p2,2,3,3,2\n"
           "p3,5,4,4,3\n"
           "p4,3,2,3,1\n"
           "p5,4,5,2,2\n"
           "p6,2,2,4,1\n"
           "p7,3,4,3,2\n";
}

}  // namespace

TEST_CASE("h5 latin emits a valid reproducible square", "[cli]") {
    const CliResult r = run_cli("h5 latin --k 5 --seed 42");
    REQUIRE(r.exit_code == 0);
    const ordered_json rep = parse_report(r.out);
    const auto square = rep.at("square").get<std::vector<std::vector<int>>>();
    REQUIRE(square.size() == 5);
    for (int axis = 0; axis < 2; ++axis)
        for (int i = 0; i < 5; ++i) {
            std::vector<bool> seen(5, false);
            for (int j = 0; j < 5; ++j)
                seen[axis == 0 ? square[i][j] : square[j][i]] = true;
            for (int s = 0; s < 5; ++s) CHECK(seen[s]);
        }
    CHECK(run_cli("h5 latin --k 5 --seed 42").out == r.out);
    CHECK(run_cli("h5 latin --k 5 --seed 43").out != r.out);
}

TEST_CASE("h5 tost matches the in-process equivalence test", "[cli]") {
    TempTree t("markaudit_cli_tost");
    write_file(t / "ratings.csv", fixed_ratings_csv());
    const CliResult r = run_cli("h5 tost --in " + (t / "ratings.csv") +
                                " --conditions baseline,injected --margin 1.0");
    REQUIRE(r.exit_code == 0);

    const RatingsMatrix m = parse_ratings_csv(fixed_ratings_csv());
    std::vector<double> diffs;
    for (const auto& row : m.values)
        diffs.push_back(static_cast<double>(row[0]) -
                        static_cast<double>(row[1]));
    const TestResult expect = tost_paired(diffs, 1.0, 0.05);

    const ordered_json rep = parse_report(r.out);
    CHECK(rep.at("statistic").get<double>() ==
          Catch::Approx(expect.statistic).epsilon(1e-12));
    CHECK(rep.at("p_value").get<double>() ==
          Catch::Approx(expect.p_value).epsilon(1e-12));
    CHECK(rep.at("df") == *expect.df);
    CHECK(rep.at("decision").get<bool>() == expect.decision);
}

TEST_CASE("h5 friedman and wilcoxon agree with the library", "[cli]") {
    TempTree t("markaudit_cli_h5");
    write_file(t / "ratings.csv", fixed_ratings_csv());
    const RatingsMatrix m = parse_ratings_csv(fixed_ratings_csv());

    const CliResult fr = run_cli("h5 friedman --in " + (t / "ratings.csv"));
    REQUIRE(fr.exit_code == 0);
    const TestResult fexpect = friedman(m, 0.05);
    const ordered_json frep = parse_report(fr.out);
    CHECK(frep.at("statistic").get<double>() ==
          Catch::Approx(fexpect.statistic).epsilon(1e-12));
    CHECK(frep.at("p_value").get<double>() ==
          Catch::Approx(fexpect.p_value).epsilon(1e-12));

    // Distinct all-positive differences on four participants: the exact
    // two-sided tail is 2/16.
    write_file(t / "pair.csv",
               "participant,a,b\n"
               "p0,2,1\n"
               "p1,3,1\n"
               "p2,4,1\n"
               "p3,5,1\n");
    const CliResult wr =
        run_cli("h5 wilcoxon --in " + (t / "pair.csv") + " --conditions a,b");
    REQUIRE(wr.exit_code == 0);
    const ordered_json wrep = parse_report(wr.out);
    CHECK(wrep.at("statistic").get<double>() == 10.0);
    CHECK(wrep.at("p_value").get<double>() ==
          Catch::Approx(0.125).epsilon(1e-12));

    // Baseline mode applies the multiple-comparison correction per pair.
    const CliResult br = run_cli("h5 wilcoxon --in " + (t / "ratings.csv") +
                                 " --baseline baseline");
    REQUIRE(br.exit_code == 0);
    const ordered_json brep = parse_report(br.out);
    REQUIRE(brep.at("pairs").size() == 3);
    for (const auto& p : brep.at("pairs")) {
        const double raw = p.at("p_value").get<double>();
        const double adj = p.at("p_adjusted").get<double>();
        CHECK(adj == Catch::Approx(std::min(1.0, 3.0 * raw)).epsilon(1e-12));
    }

    // A named pair takes precedence; asking for neither is an error.
    CHECK(run_cli("h5 wilcoxon --in " + (t / "ratings.csv")).exit_code == 1);
}

// ============================================================================
// geno
// ============================================================================

TEST_CASE("geno pipeline marks, audits, and never leaks the key", "[cli]") {
    TempTree t("markaudit_cli_geno");
    const std::string key_hex = "00112233445566778899aabbccddeeff";
    EnvGuard key("AUDIT_KEY_HEX", key_hex);

    const std::string gen_args = "geno watermark --out " + (t / "seqs.jsonl") +
                                 " --n 6 --length 257 --vocab 512 --seed 3";
    REQUIRE(run_cli(gen_args).exit_code == 0);
    run_cli("geno watermark --out " + (t / "seqs2.jsonl") +
            " --n 6 --length 257 --vocab 512 --seed 3");
    CHECK(slurp(t / "seqs.jsonl") == slurp(t / "seqs2.jsonl"));

    const CliResult a = run_cli("geno audit --in " + (t / "seqs.jsonl") +
                                " --vocab 512 --out " + (t / "audit.json"));
    REQUIRE(a.exit_code == 0);
    const std::string report_text = slurp(t / "audit.json");
    CHECK(report_text.find(key_hex) == std::string::npos);
    CHECK(report_text.find("key") == std::string::npos);

    const ordered_json rep = parse_report(report_text);
    REQUIRE(rep.at("reports").size() == 6);
    for (const auto& z : rep.at("reports")) {
        CHECK(z.at("detected") == true);
        CHECK(z.at("T") == 256);
    }

    const CliResult ag =
        run_cli("geno aggregate --in " + (t / "audit.json"));
    REQUIRE(ag.exit_code == 0);
    CHECK(parse_report(ag.out).at("detected") == true);

    // A different key audits the same sequences to noise.
    EnvGuard other("AUDIT_KEY_HEX",
                   "ffeeddccbbaa99887766554433221100");
    const CliResult wrong = run_cli("geno audit --in " + (t / "seqs.jsonl") +
                                    " --vocab 512");
    REQUIRE(wrong.exit_code == 0);
    int detected = 0;
    for (const auto& z : parse_report(wrong.out).at("reports"))
        detected += z.at("detected") == true ? 1 : 0;
    CHECK(detected <= 1);
}

TEST_CASE("geno audit refuses to run without the secret key", "[cli]") {
    TempTree t("markaudit_cli_nokey");
    write_file(t / "seqs.jsonl", "");
    EnvGuard cleared("AUDIT_KEY_HEX");
    const CliResult r =
        run_cli("geno audit --in " + (t / "seqs.jsonl") + " --vocab 512");
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("AUDIT_KEY_HEX") != std::string::npos);
}

TEST_CASE("geno aggregate pools by the root-n rule", "[cli]") {
    TempTree t("markaudit_cli_agg");
    ordered_json audit;
    audit["command"] = "geno audit";
    audit["reports"] = ordered_json::array();
    for (int i = 0; i < 4; ++i) {
        ordered_json z;
        z["id"] = "s" + std::to_string(i);
        z["z"] = 1.0;
        audit["reports"].push_back(z);
    }
    write_file(t / "audit.json", audit.dump());

    const CliResult r = run_cli("geno aggregate --in " + (t / "audit.json"));
    REQUIRE(r.exit_code == 0);
    const ordered_json rep = parse_report(r.out);
    CHECK(rep.at("z").get<double>() == 2.0);
    CHECK(rep.at("detected") == false);

    const CliResult low = run_cli("geno aggregate --in " + (t / "audit.json") +
                                  " --threshold-z 1.9");
    CHECK(parse_report(low.out).at("detected") == true);
}

TEST_CASE("geno sweep weakens detection as mutation rises", "[cli]") {
    TempTree t("markaudit_cli_sweep");
    EnvGuard key("AUDIT_KEY_HEX", "00112233445566778899aabbccddeeff");
    run_cli("geno watermark --out " + (t / "seqs.jsonl") +
            " --n 10 --length 257 --vocab 512 --seed 6");
    const CliResult r = run_cli("geno sweep --in " + (t / "seqs.jsonl") +
                                " --vocab 512 --rates 0,0.1,0.3 --seed 8");
    REQUIRE(r.exit_code == 0);
    const ordered_json rep = parse_report(r.out);
    REQUIRE(rep.at("arms").size() == 3);
    double prev = 1e9;
    for (const auto& arm : rep.at("arms")) {
        const double mz = arm.at("mean_z").get<double>();
        CHECK(mz < prev);
        prev = mz;
    }
    CHECK(run_cli("geno sweep --in " + (t / "seqs.jsonl") +
                  " --vocab 512 --rates 0,0.1,0.3 --seed 8")
              .out == r.out);
}

// ============================================================================
// judge run
// ============================================================================

namespace {

/// Loopback chat-completions stub, as in the client tests: handlers run on
/// server threads and only touch guarded state.
struct StubServer {
    using Handler =
        std::function<void(const httplib::Request&, httplib::Response&)>;

    explicit StubServer(Handler handler) {
        svr.Post("/v1/chat/completions",
                 [h = std::move(handler)](const httplib::Request& req,
                                          httplib::Response& res) { h(req, res); });
        port = svr.bind_to_any_port("127.0.0.1");
        REQUIRE(port > 0);
        th = std::thread([this] { svr.listen_after_bind(); });
        svr.wait_until_ready();
    }
    ~StubServer() {
        svr.stop();
        th.join();
    }
    std::string url() const {
        return "http://127.0.0.1:" + std::to_string(port);
    }

    httplib::Server svr;
    int port = 0;
    std::thread th;
};

std::string stub_envelope(const std::string& content) {
    nlohmann::json j;
    j["choices"] = nlohmann::json::array(
        {{{"message", {{"role", "assistant"}, {"content", content}}}}});
    return j.dump();
}

}  // namespace

TEST_CASE("judge run drives the endpoint and writes verdicts", "[cli]") {
    TempTree t("markaudit_cli_judge");
    std::string body;
    for (int i = 0; i < 5; ++i)
        body += response_line("item-" + std::to_string(i),
                              "Answer " + std::to_string(i) + ". Fair enough?");
    write_file(t / "in.jsonl", body);

    std::mutex mu;
    int requests = 0;
    StubServer server([&](const httplib::Request&, httplib::Response& res) {
        {
            std::lock_guard<std::mutex> lock(mu);
            ++requests;
        }
        res.set_content(
            stub_envelope(R"({"verdict":"yes","confidence":0.9,)"
                          R"("evidence":"Fair enough?",)"
                          R"("reason":"closing question invites a reply"})"),
            "application/json");
    });

    EnvGuard endpoint("JUDGE_ENDPOINT", server.url());
    EnvGuard model("JUDGE_MODEL", "judge-model-1");
    EnvGuard api_key("JUDGE_API_KEY", "sekrit");

    const CliResult r = run_cli("judge run --in " + (t / "in.jsonl") +
                                " --rubric strong --out " + (t / "v.jsonl") +
                                " --seed 5 --audit-log " + (t / "audit.log"));
    REQUIRE(r.exit_code == 0);
    const ordered_json rep = parse_report(r.out);
    CHECK(rep.at("judged") == 5);
    CHECK(rep.at("fallback_abstains") == 0);

    const auto verdicts = read_verdict_jsonl(t / "v.jsonl");
    REQUIRE(verdicts.size() == 5);
    for (const auto& v : verdicts) {
        CHECK(v.verdict == VerdictValue::yes);
        CHECK(v.provenance == VerdictProvenance::model);
        CHECK(v.rubric == RubricName::STRONG);
    }
    {
        std::lock_guard<std::mutex> lock(mu);
        CHECK(requests == 5);
    }

    // Audit trail: one JSON line per exchange.
    std::istringstream log(slurp(t / "audit.log"));
    std::string line;
    int log_lines = 0;
    while (std::getline(log, line)) {
        ++log_lines;
        CHECK_NOTHROW(ordered_json::parse(line));
    }
    CHECK(log_lines > 0);
}

TEST_CASE("judge run maps endpoint and env failures to exit codes", "[cli]") {
    TempTree t("markaudit_cli_judgefail");
    write_file(t / "in.jsonl", response_line("x", "Text."));

    // A bound-then-closed port: connection refused, exit 3.
    int dead_port = 0;
    {
        httplib::Server probe;
        dead_port = probe.bind_to_any_port("127.0.0.1");
    }
    EnvGuard endpoint("JUDGE_ENDPOINT",
                      "http://127.0.0.1:" + std::to_string(dead_port));
    EnvGuard model("JUDGE_MODEL", "judge-model-1");
    const CliResult dead = run_cli("judge run --in " + (t / "in.jsonl") +
                                   " --rubric strong --out " + (t / "v.jsonl"));
    CHECK(dead.exit_code == 3);

    EnvGuard cleared("JUDGE_ENDPOINT");
    const CliResult noenv = run_cli("judge run --in " + (t / "in.jsonl") +
                                    " --rubric strong --out " + (t / "v.jsonl"));
    CHECK(noenv.exit_code == 1);
    CHECK(noenv.err.find("JUDGE_ENDPOINT") != std::string::npos);
}

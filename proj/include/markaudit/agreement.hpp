#pragma once

// Inter-rater reliability: Cohen's kappa with bootstrap CIs, Fleiss' kappa,
// majority votes, and prevalence-reweighted kappa over 2x2 confusions.
//
// Label vectors are binary and abstain-free; dropping judge abstains (with a
// count) happens before anything here runs, via drop_abstains below.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "markaudit/errors.hpp"
#include "markaudit/judge.hpp"
#include "markaudit/rng.hpp"

namespace markaudit {

// ============================================================================
// Domain types
// ============================================================================

struct LabelVector {
    std::vector<std::string> item_ids;
    std::vector<bool> labels;  // true = yes
};

/// Counts with rater A on the major axis: yy = A yes & B yes, yn = A yes &
/// B no, ny = A no & B yes, nn = A no & B no.
struct ConfusionMatrix2x2 {
    std::int64_t yy = 0;
    std::int64_t yn = 0;
    std::int64_t ny = 0;
    std::int64_t nn = 0;

    std::int64_t total() const { return yy + yn + ny + nn; }
};

struct AgreementReport {
    double kappa = 0.0;
    std::optional<double> ci_low;
    std::optional<double> ci_high;
    double p_observed = 0.0;
    double p_expected = 0.0;
};

struct BootstrapCi {
    double low = 0.0;
    double high = 0.0;
    std::int64_t resamples_used = 0;
    std::int64_t degenerate_skipped = 0;
};

// ============================================================================
// Internals
// ============================================================================

namespace agreement_detail {

inline void validate(const LabelVector& v, const std::string& who) {
    if (v.item_ids.size() != v.labels.size())
        throw ValidationError("label vector " + who +
                              ": ids and labels differ in length");
    std::vector<std::string> ids = v.item_ids;
    std::sort(ids.begin(), ids.end());
    const auto dup = std::adjacent_find(ids.begin(), ids.end());
    if (dup != ids.end())
        throw ValidationError("label vector " + who + ": duplicate id \"" +
                              *dup + "\"");
}

/// Pairs (a_label, b_label) aligned by id; both vectors must cover the same
/// id set.
inline std::vector<std::pair<bool, bool>> align(const LabelVector& a,
                                                const LabelVector& b) {
    validate(a, "A");
    validate(b, "B");
    if (a.item_ids.size() != b.item_ids.size())
        throw ValidationError("label vectors cover different id sets");
    std::map<std::string, bool> bmap;
    for (std::size_t i = 0; i < b.item_ids.size(); ++i)
        bmap.emplace(b.item_ids[i], b.labels[i]);
    std::vector<std::pair<bool, bool>> out;
    out.reserve(a.item_ids.size());
    for (std::size_t i = 0; i < a.item_ids.size(); ++i) {
        const auto it = bmap.find(a.item_ids[i]);
        if (it == bmap.end())
            throw ValidationError("label vectors cover different id sets: \"" +
                                  a.item_ids[i] + "\" is only in A");
        out.emplace_back(a.labels[i], it->second);
    }
    return out;
}

inline ConfusionMatrix2x2 confusion_of(
    const std::vector<std::pair<bool, bool>>& pairs) {
    ConfusionMatrix2x2 cm;
    for (const auto& [av, bv] : pairs) {
        if (av && bv)
            ++cm.yy;
        else if (av && !bv)
            ++cm.yn;
        else if (!av && bv)
            ++cm.ny;
        else
            ++cm.nn;
    }
    return cm;
}

/// Kappa over real-valued cell weights. The degenerate p_e = 1 case is
/// resolved by the caller; reaching it here with imperfect agreement is an
/// error.
inline AgreementReport kappa_from_cells(double yy, double yn, double ny,
                                        double nn) {
    const double n = yy + yn + ny + nn;
    if (!(n > 0)) throw ValidationError("kappa: empty confusion matrix");
    const double p_o = (yy + nn) / n;
    const double a_yes = (yy + yn) / n;
    const double b_yes = (yy + ny) / n;
    const double p_e = a_yes * b_yes + (1.0 - a_yes) * (1.0 - b_yes);
    AgreementReport r;
    r.p_observed = p_o;
    r.p_expected = p_e;
    if (p_e == 1.0) {
        if (p_o == 1.0) {
            r.kappa = 1.0;
            return r;
        }
        throw ValidationError(
            "kappa undefined: expected agreement is 1 without perfect "
            "observed agreement");
    }
    r.kappa = (p_o - p_e) / (1.0 - p_e);
    return r;
}

/// Linear-interpolation quantile on a sorted sample, q in [0,1].
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    const std::size_t m = sorted.size();
    if (m == 1) return sorted[0];
    const double pos = q * static_cast<double>(m - 1);
    const auto lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= m) return sorted[m - 1];
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace agreement_detail

// ============================================================================
// Operations
// ============================================================================

inline AgreementReport kappa_from_confusion(const ConfusionMatrix2x2& cm) {
    if (cm.yy < 0 || cm.yn < 0 || cm.ny < 0 || cm.nn < 0)
        throw ValidationError("confusion matrix: negative count");
    if (cm.total() < 1)
        throw ValidationError("confusion matrix: no observations");
    return agreement_detail::kappa_from_cells(
        static_cast<double>(cm.yy), static_cast<double>(cm.yn),
        static_cast<double>(cm.ny), static_cast<double>(cm.nn));
}

inline AgreementReport cohen_kappa(const LabelVector& a, const LabelVector& b) {
    return kappa_from_confusion(
        agreement_detail::confusion_of(agreement_detail::align(a, b)));
}

/// Per-item majority label across an odd number of raters covering the same
/// id set. Item order follows the first rater.
inline LabelVector majority(const std::vector<LabelVector>& raters) {
    if (raters.empty()) throw ValidationError("majority: no raters");
    if (raters.size() % 2 == 0)
        throw ValidationError("majority: even rater count has no tie rule");
    for (std::size_t r = 0; r < raters.size(); ++r)
        agreement_detail::validate(raters[r], "rater " + std::to_string(r));

    std::vector<std::map<std::string, bool>> maps;
    for (std::size_t r = 1; r < raters.size(); ++r) {
        if (raters[r].item_ids.size() != raters[0].item_ids.size())
            throw ValidationError("majority: raters cover different id sets");
        std::map<std::string, bool> m;
        for (std::size_t i = 0; i < raters[r].item_ids.size(); ++i)
            m.emplace(raters[r].item_ids[i], raters[r].labels[i]);
        maps.push_back(std::move(m));
    }

    LabelVector out;
    for (std::size_t i = 0; i < raters[0].item_ids.size(); ++i) {
        const std::string& id = raters[0].item_ids[i];
        std::size_t yes = raters[0].labels[i] ? 1 : 0;
        for (const auto& m : maps) {
            const auto it = m.find(id);
            if (it == m.end())
                throw ValidationError(
                    "majority: raters cover different id sets: \"" + id + "\"");
            if (it->second) ++yes;
        }
        out.item_ids.push_back(id);
        out.labels.push_back(2 * yes > raters.size());
    }
    return out;
}

/// Percentile bootstrap over item-level resamples. Resample r draws from a
/// generator seeded with seed XOR r, so the interval is reproducible and each
/// resample is independent of the others' consumption. A resample where both
/// raters come out constant contributes kappa = 1 when they agree perfectly
/// and is skipped (counted) otherwise.
inline BootstrapCi bootstrap_kappa_ci(const LabelVector& a,
                                      const LabelVector& b,
                                      std::int64_t B = 1000,
                                      double confidence = 0.95,
                                      std::uint64_t seed = 0) {
    if (B < 100) throw ValidationError("bootstrap: B must be >= 100");
    if (!(confidence > 0.0 && confidence < 1.0))
        throw ValidationError("bootstrap: confidence must be in (0,1)");
    const auto pairs = agreement_detail::align(a, b);
    const std::size_t n = pairs.size();
    if (n == 0) throw ValidationError("bootstrap: no items");

    std::vector<double> kappas;
    kappas.reserve(static_cast<std::size_t>(B));
    std::int64_t skipped = 0;
    for (std::int64_t r = 0; r < B; ++r) {
        rng64 rng(derived_seed(seed, static_cast<std::uint64_t>(r)));
        ConfusionMatrix2x2 cm;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& p = pairs[uniform_below(rng, n)];
            if (p.first && p.second)
                ++cm.yy;
            else if (p.first && !p.second)
                ++cm.yn;
            else if (!p.first && p.second)
                ++cm.ny;
            else
                ++cm.nn;
        }
        const bool a_const = (cm.yy + cm.yn == 0) ||
                             (cm.ny + cm.nn == 0);
        const bool b_const = (cm.yy + cm.ny == 0) ||
                             (cm.yn + cm.nn == 0);
        if (a_const && b_const) {
            const auto total = cm.total();
            if (cm.yy == total || cm.nn == total) {
                kappas.push_back(1.0);
            } else {
                ++skipped;
            }
            continue;
        }
        kappas.push_back(kappa_from_confusion(cm).kappa);
    }
    if (kappas.empty())
        throw ValidationError("bootstrap: every resample was degenerate");

    std::sort(kappas.begin(), kappas.end());
    const double alpha = 1.0 - confidence;
    BootstrapCi ci;
    ci.low = agreement_detail::quantile_sorted(kappas, alpha / 2.0);
    ci.high = agreement_detail::quantile_sorted(kappas, 1.0 - alpha / 2.0);
    ci.resamples_used = static_cast<std::int64_t>(kappas.size());
    ci.degenerate_skipped = skipped;
    return ci;
}

/// Fleiss' kappa over two categories. ratings[i][r] is rater r's label for
/// item i.
inline AgreementReport fleiss_kappa(
    const std::vector<std::vector<bool>>& ratings) {
    if (ratings.size() < 2)
        throw ValidationError("fleiss: need at least 2 items");
    const std::size_t r = ratings[0].size();
    if (r < 2) throw ValidationError("fleiss: need at least 2 raters");
    for (const auto& row : ratings)
        if (row.size() != r)
            throw ValidationError("fleiss: ragged ratings matrix");

    const auto N = static_cast<double>(ratings.size());
    const auto R = static_cast<double>(r);
    std::int64_t total_yes = 0;
    double p_o_sum = 0.0;
    for (const auto& row : ratings) {
        std::int64_t yes = 0;
        for (const bool v : row) yes += v ? 1 : 0;
        total_yes += yes;
        const double y = static_cast<double>(yes);
        const double no = R - y;
        p_o_sum += (y * (y - 1.0) + no * (no - 1.0)) / (R * (R - 1.0));
    }
    AgreementReport out;
    out.p_observed = p_o_sum / N;
    const auto all = static_cast<std::int64_t>(ratings.size()) *
                     static_cast<std::int64_t>(r);
    if (total_yes == 0 || total_yes == all) {
        // One category everywhere: expected agreement is 1, and so is
        // observed, by the same unanimity.
        out.p_expected = 1.0;
        out.kappa = 1.0;
        return out;
    }
    const double p_yes = static_cast<double>(total_yes) / static_cast<double>(all);
    out.p_expected = p_yes * p_yes + (1.0 - p_yes) * (1.0 - p_yes);
    out.kappa = (out.p_observed - out.p_expected) / (1.0 - out.p_expected);
    return out;
}

/// Kappa at a deployment-time positive rate: items in the majority-yes column
/// are reweighted by pi_natural / pi_stratified, majority-no items by the
/// complement ratio, and kappa is recomputed on the weighted matrix. Rater B
/// is the majority.
inline AgreementReport prevalence_reweighted_kappa(
    const ConfusionMatrix2x2& cm, double pi_natural) {
    if (!(pi_natural > 0.0 && pi_natural < 1.0))
        throw ValidationError("reweighting: pi_natural must be in (0,1)");
    if (cm.total() < 1)
        throw ValidationError("confusion matrix: no observations");
    const std::int64_t maj_yes = cm.yy + cm.ny;
    const std::int64_t maj_no = cm.yn + cm.nn;
    if (maj_yes == 0 || maj_no == 0)
        throw ValidationError(
            "reweighting: sample prevalence is degenerate (all majority-" +
            std::string(maj_yes == 0 ? "no" : "yes") + ")");
    const double pi_strat =
        static_cast<double>(maj_yes) / static_cast<double>(cm.total());
    const double w_yes = pi_natural / pi_strat;
    const double w_no = (1.0 - pi_natural) / (1.0 - pi_strat);
    return agreement_detail::kappa_from_cells(
        static_cast<double>(cm.yy) * w_yes, static_cast<double>(cm.yn) * w_no,
        static_cast<double>(cm.ny) * w_yes, static_cast<double>(cm.nn) * w_no);
}

// ============================================================================
// Verdict bridging
// ============================================================================

/// Binary labels out of a verdict list, dropping abstains with a count.
inline std::pair<LabelVector, std::int64_t> drop_abstains(
    const std::vector<Verdict>& verdicts) {
    LabelVector out;
    std::int64_t dropped = 0;
    for (const auto& v : verdicts) {
        if (v.verdict == VerdictValue::abstain) {
            ++dropped;
            continue;
        }
        out.item_ids.push_back(v.id);
        out.labels.push_back(v.verdict == VerdictValue::yes);
    }
    return {out, dropped};
}

/// Restrict a label vector to the given id set, preserving its item order.
inline LabelVector restrict_to(const LabelVector& v,
                               const std::vector<std::string>& ids) {
    agreement_detail::validate(v, "input");
    const std::set<std::string> keep(ids.begin(), ids.end());
    LabelVector out;
    for (std::size_t i = 0; i < v.item_ids.size(); ++i) {
        if (keep.count(v.item_ids[i])) {
            out.item_ids.push_back(v.item_ids[i]);
            out.labels.push_back(v.labels[i]);
        }
    }
    return out;
}

}  // namespace markaudit

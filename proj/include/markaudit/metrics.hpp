#pragma once

// Rate-level statistics: Wilson score intervals, transfer ratios, the
// two-level robustness decomposition with regime classification, per-seed
// aggregation, and dose-response summaries.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "markaudit/errors.hpp"
#include "markaudit/special.hpp"

namespace markaudit {

// =============================================================================
// WILSON SCORE INTERVAL
// =============================================================================

/**
 * Two-sided Wilson score interval for a binomial proportion.
 *
 * @param k           success count, 0 <= k <= n
 * @param n           trial count, n >= 1
 * @param confidence  two-sided level, default 0.95 (z = 1.959964)
 * @return (low, high), each clamped into [0, 1]
 */
inline std::pair<double, double> wilson_ci(std::int64_t k, std::int64_t n,
                                           double confidence = 0.95) {
    if (n < 1) throw ValidationError("wilson_ci: n must be >= 1");
    if (k < 0 || k > n) throw ValidationError("wilson_ci: k outside [0, n]");
    if (!(confidence > 0.0 && confidence < 1.0)) {
        throw ValidationError("wilson_ci: confidence outside (0, 1)");
    }
    const double z = normal_quantile(0.5 + 0.5 * confidence);
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(k) / nn;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    const double center = (p + z2 / (2.0 * nn)) / denom;
    const double half =
        z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
    double low = center - half;
    double high = center + half;
    if (low < 0.0) low = 0.0;
    if (high > 1.0) high = 1.0;
    // At the boundaries the interval endpoint is exactly the observed rate;
    // center - half only reproduces that up to rounding.
    if (k == 0) low = 0.0;
    if (k == n) high = 1.0;
    return {low, high};
}

/// One rate with its effective denominator, abstain count, and Wilson CI.
struct RateEstimate {
    std::int64_t k = 0;            // yes count
    std::int64_t n_effective = 0;  // yes + no
    std::int64_t abstain = 0;      // excluded from the denominator
    double rate = 0.0;             // k / n_effective
    double ci_low = 0.0;
    double ci_high = 0.0;
};

inline RateEstimate make_rate_estimate(std::int64_t k, std::int64_t n_effective,
                                       std::int64_t abstain = 0,
                                       double confidence = 0.95) {
    if (n_effective < 1) {
        throw ValidationError("make_rate_estimate: effective denominator is zero");
    }
    RateEstimate r;
    r.k = k;
    r.n_effective = n_effective;
    r.abstain = abstain;
    r.rate = static_cast<double>(k) / static_cast<double>(n_effective);
    const auto ci = wilson_ci(k, n_effective, confidence);
    r.ci_low = ci.first;
    r.ci_high = ci.second;
    return r;
}

/**
 * Normal-difference interval for the gap p2 - p1 between two independent
 * binomial rates: gap +/- z * sqrt(p1 q1 / n1 + p2 q2 / n2).
 *
 * Design decision: this Wald-style construction is the one that reproduces
 * the published two-condition gap interval from its Wilson-summarized counts,
 * so it is the pinned behavior here even though the per-rate intervals are
 * Wilson.
 */
struct GapReport {
    double gap = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

inline GapReport rate_gap_ci(std::int64_t k1, std::int64_t n1, std::int64_t k2,
                             std::int64_t n2, double confidence = 0.95) {
    if (n1 < 1 || n2 < 1) throw ValidationError("rate_gap_ci: n must be >= 1");
    const double z = normal_quantile(0.5 + 0.5 * confidence);
    const double p1 = static_cast<double>(k1) / static_cast<double>(n1);
    const double p2 = static_cast<double>(k2) / static_cast<double>(n2);
    const double se = std::sqrt(p1 * (1.0 - p1) / static_cast<double>(n1) +
                                p2 * (1.0 - p2) / static_cast<double>(n2));
    GapReport g;
    g.gap = p2 - p1;
    g.ci_low = g.gap - z * se;
    g.ci_high = g.gap + z * se;
    return g;
}

// =============================================================================
// TRANSFER AND ROBUSTNESS
// =============================================================================

struct TransferReport {
    double tau_student = 0.0;
    double tau_teacher = 0.0;
    double tau_rel = 0.0;  // tau_student / tau_teacher
};

inline TransferReport transfer(double tau_student, double tau_teacher) {
    if (!(tau_teacher > 0.0)) {
        throw ValidationError("transfer: teacher rate must be positive");
    }
    if (tau_student < 0.0) {
        throw ValidationError("transfer: student rate must be non-negative");
    }
    return {tau_student, tau_teacher, tau_student / tau_teacher};
}

enum class Regime { attenuating, neutral, amplifying };

inline const char* to_string(Regime r) {
    switch (r) {
        case Regime::attenuating: return "attenuating";
        case Regime::neutral: return "neutral";
        case Regime::amplifying: return "amplifying";
    }
    return "?";
}

/// Band classification of the relative robustness ratio around 1.
inline Regime classify_regime(double r_rel, double tolerance = 0.02) {
    if (r_rel < 0.0) throw ValidationError("classify_regime: ratio must be >= 0");
    if (r_rel > 1.0 + tolerance) return Regime::amplifying;
    if (r_rel < 1.0 - tolerance) return Regime::attenuating;
    return Regime::neutral;
}

struct RobustnessReport {
    double R_T = 0.0;    // teacher self-retention under paraphrase
    double R_S = 0.0;    // student retention under paraphrase
    double R_rel = 0.0;  // R_S / R_T
    Regime regime = Regime::neutral;
};

/**
 * Two-level paraphrase-robustness decomposition. R_T and R_S are the
 * paraphrased/clean ratios on teacher and student; R_rel = R_S / R_T, so the
 * identity R_S = R_T * R_rel holds to machine precision by construction.
 */
inline RobustnessReport robustness(double tau_T_clean, double tau_T_para,
                                   double tau_S_clean, double tau_S_para,
                                   double regime_tolerance = 0.02) {
    if (!(tau_T_clean > 0.0)) {
        throw ValidationError("robustness: teacher clean rate is zero");
    }
    if (!(tau_S_clean > 0.0)) {
        throw ValidationError("robustness: student clean rate is zero");
    }
    RobustnessReport rep;
    rep.R_T = tau_T_para / tau_T_clean;
    if (!(rep.R_T > 0.0)) {
        throw ValidationError("robustness: teacher paraphrased rate is zero");
    }
    rep.R_S = tau_S_para / tau_S_clean;
    rep.R_rel = rep.R_S / rep.R_T;
    rep.regime = classify_regime(rep.R_rel, regime_tolerance);
    return rep;
}

// =============================================================================
// SEED AGGREGATION
// =============================================================================

struct SeedSummary {
    std::vector<double> values;
    double mean = 0.0;
    double sd = 0.0;  // sample standard deviation, n - 1 denominator
};

inline SeedSummary seed_summary(const std::vector<double>& values) {
    if (values.size() < 2) {
        throw ValidationError("seed_summary: need at least two per-seed values");
    }
    SeedSummary s;
    s.values = values;
    double sum = 0.0;
    for (const double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (const double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    return s;
}

// =============================================================================
// DOSE RESPONSE
// =============================================================================

struct DosePoint {
    double rho = 0.0;  // marker density of this arm
    RateEstimate rate;
};

struct DoseReport {
    bool monotone = true;  // rate non-decreasing across the full rho series
    struct Arm {
        double rho = 0.0;
        double rate = 0.0;
        double abs_lift = 0.0;  // rate minus the baseline Wilson upper bound
        std::optional<double> mult_lift;  // rate / baseline rate, if defined
    };
    std::vector<Arm> arms;
};

/**
 * Dose-response summary over density arms. `baseline` anchors the series at
 * rho = 0; `points` must be sorted by strictly increasing rho > 0.
 */
inline DoseReport dose_response(const std::vector<DosePoint>& points,
                                const RateEstimate& baseline) {
    DoseReport rep;
    double prev_rho = 0.0;
    double prev_rate = baseline.rate;
    for (const auto& pt : points) {
        if (!(pt.rho > prev_rho)) {
            throw ValidationError(
                "dose_response: points must be sorted by strictly increasing "
                "rho > 0 (baseline supplies rho = 0)");
        }
        DoseReport::Arm arm;
        arm.rho = pt.rho;
        arm.rate = pt.rate.rate;
        arm.abs_lift = pt.rate.rate - baseline.ci_high;
        if (baseline.rate > 0.0) arm.mult_lift = pt.rate.rate / baseline.rate;
        if (pt.rate.rate < prev_rate) rep.monotone = false;
        rep.arms.push_back(arm);
        prev_rho = pt.rho;
        prev_rate = pt.rate.rate;
    }
    return rep;
}

}  // namespace markaudit

#pragma once

// Pre-registered usability battery: paired TOST equivalence, Friedman's rank
// test with tie correction, Wilcoxon signed-rank (exact by sign enumeration
// at small n, tie-corrected normal approximation above), Bonferroni
// adjustment, and counterbalanced Latin squares.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "markaudit/errors.hpp"
#include "markaudit/rng.hpp"
#include "markaudit/special.hpp"

namespace markaudit {

// ============================================================================
// Domain types
// ============================================================================

struct RatingsMatrix {
    std::vector<std::string> participants;
    std::vector<std::string> conditions;
    std::vector<std::vector<int>> values;  // participants x conditions
};

struct TestResult {
    double statistic = 0.0;
    std::optional<int> df;
    double p_value = 1.0;
    bool decision = false;
    double alpha = 0.05;
};

/// Zero-variance paired differences make the t statistics blow up; the error
/// still reports which side of the margin the degenerate mean sits on.
class DegenerateVarianceError : public ValidationError {
  public:
    DegenerateVarianceError(double mean, double margin)
        : ValidationError(
              "tost: differences have zero variance (degenerate mean is " +
              std::string(std::abs(mean) < margin ? "inside" : "outside") +
              " the margin)"),
          within_margin_(std::abs(mean) < margin) {}
    bool within_margin() const { return within_margin_; }

  private:
    bool within_margin_;
};

// ============================================================================
// Internals
// ============================================================================

namespace studystats_detail {

/// 1-based ranks with ties sharing the average of their rank block, plus the
/// sum of t^3 - t over tie groups (the usual correction ingredient).
struct RankResult {
    std::vector<double> ranks;
    double tie_cubes = 0.0;  // sum of t^3 - t
};

inline RankResult average_ranks(const std::vector<double>& vals) {
    const std::size_t n = vals.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    RankResult out;
    out.ranks.resize(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && vals[order[j]] == vals[order[i]]) ++j;
        const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t k = i; k < j; ++k) out.ranks[order[k]] = avg;
        const auto t = static_cast<double>(j - i);
        out.tie_cubes += t * t * t - t;
        i = j;
    }
    return out;
}

inline void validate_ratings(const RatingsMatrix& m) {
    if (m.participants.size() != m.values.size())
        throw ValidationError("ratings: participant list and value rows differ");
    if (m.conditions.size() < 2)
        throw ValidationError("ratings: need at least 2 conditions");
    for (const auto& row : m.values)
        if (row.size() != m.conditions.size())
            throw ValidationError("ratings: ragged value matrix");
}

}  // namespace studystats_detail

// ============================================================================
// TOST equivalence
// ============================================================================

/// Two one-sided paired t-tests against +-margin; the equivalence p-value is
/// the worse of the two. statistic carries the binding t.
inline TestResult tost_paired(const std::vector<double>& diffs,
                              double margin = 1.0, double alpha = 0.05) {
    const std::size_t n = diffs.size();
    if (n < 2) throw ValidationError("tost: need at least 2 differences");
    if (!(margin > 0.0)) throw ValidationError("tost: margin must be > 0");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ValidationError("tost: alpha must be in (0,1)");

    const double nf = static_cast<double>(n);
    const double mean =
        std::accumulate(diffs.begin(), diffs.end(), 0.0) / nf;
    double ss = 0.0;
    for (const double d : diffs) ss += (d - mean) * (d - mean);
    const double sd = std::sqrt(ss / (nf - 1.0));
    if (!(sd > 0.0)) throw DegenerateVarianceError(mean, margin);

    const double se = sd / std::sqrt(nf);
    const double df = nf - 1.0;
    const double t_lower = (mean + margin) / se;  // H1: mean > -margin
    const double t_upper = (mean - margin) / se;  // H1: mean < +margin
    const double p_lower = 1.0 - student_t_cdf(t_lower, df);
    const double p_upper = student_t_cdf(t_upper, df);

    TestResult r;
    r.df = static_cast<int>(n) - 1;
    r.alpha = alpha;
    if (p_lower >= p_upper) {
        r.p_value = p_lower;
        r.statistic = t_lower;
    } else {
        r.p_value = p_upper;
        r.statistic = t_upper;
    }
    r.decision = r.p_value < alpha;
    return r;
}

// ============================================================================
// Friedman test
// ============================================================================

/// Friedman chi-squared over within-row average ranks, divided by the tie
/// correction. Rating magnitudes are discarded by the ranking, so any
/// uniformly applied strictly monotone transform leaves the result unchanged;
/// range checks belong to the ingestion boundary, not here.
inline TestResult friedman(const RatingsMatrix& m, double alpha = 0.05) {
    studystats_detail::validate_ratings(m);
    const std::size_t n = m.values.size();
    const std::size_t k = m.conditions.size();
    if (n < 2) throw ValidationError("friedman: need at least 2 participants");
    if (k < 3) throw ValidationError("friedman: need at least 3 conditions");

    std::vector<double> col_rank_sum(k, 0.0);
    double tie_sum = 0.0;
    std::vector<double> row(k);
    for (const auto& vals : m.values) {
        for (std::size_t j = 0; j < k; ++j) row[j] = static_cast<double>(vals[j]);
        const auto rr = studystats_detail::average_ranks(row);
        for (std::size_t j = 0; j < k; ++j) col_rank_sum[j] += rr.ranks[j];
        tie_sum += rr.tie_cubes;
    }

    const double nf = static_cast<double>(n);
    const double kf = static_cast<double>(k);
    double dev = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        const double mean_rank = col_rank_sum[j] / nf;
        const double c = mean_rank - 0.5 * (kf + 1.0);
        dev += c * c;
    }
    const double raw = 12.0 * nf / (kf * (kf + 1.0)) * dev;
    const double correction = 1.0 - tie_sum / (nf * kf * (kf * kf - 1.0));

    TestResult r;
    r.df = static_cast<int>(k) - 1;
    r.alpha = alpha;
    if (correction <= 0.0) {
        // Every row fully tied: no ranking information at all.
        r.statistic = 0.0;
        r.p_value = 1.0;
        r.decision = false;
        return r;
    }
    r.statistic = raw / correction;
    r.p_value = 1.0 - chi_squared_cdf(r.statistic, kf - 1.0);
    r.decision = r.p_value < alpha;
    return r;
}

// ============================================================================
// Wilcoxon signed-rank
// ============================================================================

/// Two-sided signed-rank test. Zeros are dropped; tied absolute differences
/// share average ranks. Up to exact_n_max nonzero differences the p-value is
/// exact over all 2^m sign assignments (counted by dynamic programming on
/// doubled ranks, which are integers); beyond that a tie-corrected normal
/// approximation with continuity correction takes over.
inline TestResult wilcoxon_signed_rank(const std::vector<double>& diffs,
                                       int exact_n_max = 25,
                                       double alpha = 0.05) {
    std::vector<double> nz;
    for (const double d : diffs)
        if (d != 0.0) nz.push_back(d);
    if (nz.empty())
        throw ValidationError("wilcoxon: all differences are zero");

    const std::size_t m = nz.size();
    std::vector<double> abs_vals(m);
    for (std::size_t i = 0; i < m; ++i) abs_vals[i] = std::abs(nz[i]);
    const auto rr = studystats_detail::average_ranks(abs_vals);

    double w_plus = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        if (nz[i] > 0.0) w_plus += rr.ranks[i];

    TestResult r;
    r.statistic = w_plus;
    r.alpha = alpha;

    if (m <= static_cast<std::size_t>(exact_n_max)) {
        // Doubled ranks are exact integers (ranks are half-integers).
        std::vector<std::int64_t> dr(m);
        std::int64_t total = 0;
        for (std::size_t i = 0; i < m; ++i) {
            dr[i] = std::llround(2.0 * rr.ranks[i]);
            total += dr[i];
        }
        std::vector<std::uint64_t> count(static_cast<std::size_t>(total) + 1, 0);
        count[0] = 1;
        for (std::size_t i = 0; i < m; ++i)
            for (std::int64_t s = total; s >= dr[i]; --s)
                count[static_cast<std::size_t>(s)] +=
                    count[static_cast<std::size_t>(s - dr[i])];

        const auto w2 = std::llround(2.0 * w_plus);
        std::uint64_t le = 0, ge = 0;
        for (std::int64_t s = 0; s <= total; ++s) {
            if (s <= w2) le += count[static_cast<std::size_t>(s)];
            if (s >= w2) ge += count[static_cast<std::size_t>(s)];
        }
        const double assignments = std::ldexp(1.0, static_cast<int>(m));
        const double tail = static_cast<double>(std::min(le, ge)) / assignments;
        r.p_value = std::min(1.0, 2.0 * tail);
    } else {
        const double mf = static_cast<double>(m);
        const double mu = mf * (mf + 1.0) / 4.0;
        const double var =
            mf * (mf + 1.0) * (2.0 * mf + 1.0) / 24.0 - rr.tie_cubes / 48.0;
        if (!(var > 0.0))
            throw ValidationError("wilcoxon: degenerate rank variance");
        const double d = w_plus - mu;
        const double shrunk = d > 0 ? std::max(0.0, d - 0.5)
                                    : std::min(0.0, d + 0.5);
        const double z = shrunk / std::sqrt(var);
        r.p_value = std::min(1.0, 2.0 * (1.0 - normal_cdf(std::abs(z))));
    }
    r.decision = r.p_value < alpha;
    return r;
}

// ============================================================================
// Bonferroni adjustment
// ============================================================================

struct AdjustedP {
    double p_adjusted = 1.0;
    bool reject = false;
};

inline std::vector<AdjustedP> bonferroni(const std::vector<double>& p_values,
                                         double alpha = 0.05) {
    if (p_values.empty())
        throw ValidationError("bonferroni: empty p-value list");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ValidationError("bonferroni: alpha must be in (0,1)");
    const double mf = static_cast<double>(p_values.size());
    std::vector<AdjustedP> out;
    out.reserve(p_values.size());
    for (const double p : p_values) {
        if (!(p >= 0.0 && p <= 1.0))
            throw ValidationError("bonferroni: p-value outside [0,1]");
        out.push_back({std::min(1.0, mf * p), p < alpha / mf});
    }
    return out;
}

// ============================================================================
// Latin squares
// ============================================================================

/// Cyclic square (i + j) mod k, optionally scrambled by seeded row, column,
/// and symbol permutations (each preserves the Latin property).
inline std::vector<std::vector<int>> latin_square(
    int k, std::optional<std::uint64_t> seed = std::nullopt) {
    if (k < 1) throw ValidationError("latin_square: k must be >= 1");
    std::vector<int> row_perm(static_cast<std::size_t>(k));
    std::vector<int> col_perm(static_cast<std::size_t>(k));
    std::vector<int> sym_perm(static_cast<std::size_t>(k));
    std::iota(row_perm.begin(), row_perm.end(), 0);
    std::iota(col_perm.begin(), col_perm.end(), 0);
    std::iota(sym_perm.begin(), sym_perm.end(), 0);
    if (seed) {
        rng64 rng(*seed);
        shuffle(row_perm, rng);
        shuffle(col_perm, rng);
        shuffle(sym_perm, rng);
    }
    std::vector<std::vector<int>> out(static_cast<std::size_t>(k),
                                      std::vector<int>(static_cast<std::size_t>(k)));
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
            out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                sym_perm[static_cast<std::size_t>(
                    (row_perm[static_cast<std::size_t>(i)] +
                     col_perm[static_cast<std::size_t>(j)]) %
                    k)];
    return out;
}

// ============================================================================
// Ratings ingestion
// ============================================================================

/// Ratings CSV: header "participant,<cond>,...", one row per participant,
/// integer Likert cells in [1,5]. The range check lives here, at the
/// boundary; the tests themselves only consume ranks.
inline RatingsMatrix parse_ratings_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line))
        throw ValidationError("ratings csv: empty input");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::string cell;
        std::istringstream ss(s);
        while (std::getline(ss, cell, ',')) out.push_back(cell);
        if (!s.empty() && s.back() == ',') out.emplace_back();
        return out;
    };

    const auto header = split(line);
    if (header.size() < 3)
        throw ValidationError("ratings csv: need a participant column and >= 2 conditions");
    RatingsMatrix m;
    m.conditions.assign(header.begin() + 1, header.end());

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split(line);
        if (cells.size() != header.size())
            throw ValidationError("ratings csv: line " + std::to_string(line_no) +
                                  " has " + std::to_string(cells.size()) +
                                  " cells, expected " +
                                  std::to_string(header.size()));
        m.participants.push_back(cells[0]);
        std::vector<int> row;
        for (std::size_t j = 1; j < cells.size(); ++j) {
            std::size_t pos = 0;
            int v;
            try {
                v = std::stoi(cells[j], &pos);
            } catch (const std::exception&) {
                throw ValidationError("ratings csv: line " +
                                      std::to_string(line_no) +
                                      ": not an integer: \"" + cells[j] + "\"");
            }
            if (pos != cells[j].size())
                throw ValidationError("ratings csv: line " +
                                      std::to_string(line_no) +
                                      ": not an integer: \"" + cells[j] + "\"");
            if (v < 1 || v > 5)
                throw ValidationError("ratings csv: line " +
                                      std::to_string(line_no) +
                                      ": rating outside [1,5]: " +
                                      std::to_string(v));
            row.push_back(v);
        }
        m.values.push_back(std::move(row));
    }
    if (m.values.empty())
        throw ValidationError("ratings csv: no participant rows");
    return m;
}

}  // namespace markaudit

#pragma once

// Synthetic verdict sources. Two generators live here: a Bernoulli marker
// emitter whose draws are stable per (seed, condition, index), and the frozen
// reference fixture that plants every per-seed detection rate as exact counts
// so rate, transfer, and robustness reports have a golden path to reproduce.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "markaudit/errors.hpp"
#include "markaudit/judge.hpp"
#include "markaudit/jsonl.hpp"
#include "markaudit/rng.hpp"
#include "markaudit/rubrics.hpp"

namespace markaudit {

// ============================================================================
// Bernoulli agent
// ============================================================================

struct SyntheticAgent {
    std::string name;
    std::map<Condition, double> marker_prob;
    std::uint64_t seed = 0;

    void validate() const {
        for (const auto& [condition, p] : marker_prob)
            if (!(p >= 0.0 && p <= 1.0))
                throw ValidationError("agent " + name +
                                      ": marker probability for " +
                                      to_string(condition) + " outside [0,1]");
    }
};

namespace simulate_detail {

inline std::string padded_index(std::int64_t i, int width) {
    std::string s = std::to_string(i);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

}  // namespace simulate_detail

/// Draw n verdicts. Each index gets its own generator keyed by
/// (seed, condition, index), so verdict i is identical no matter how large a
/// batch it is drawn in.
inline std::vector<Verdict> gen_verdicts(const SyntheticAgent& agent,
                                         Condition condition, std::int64_t n,
                                         double abstain_prob = 0.0) {
    agent.validate();
    if (n < 1) throw ValidationError("gen_verdicts: n must be >= 1");
    if (!(abstain_prob >= 0.0 && abstain_prob <= 1.0))
        throw ValidationError("gen_verdicts: abstain_prob outside [0,1]");
    const auto it = agent.marker_prob.find(condition);
    if (it == agent.marker_prob.end())
        throw ValidationError("agent " + agent.name +
                              ": no marker probability for condition " +
                              to_string(condition));
    const double p = it->second;
    const RubricName rubric = condition == Condition::style_control
                                  ? RubricName::STYLE_CONTROL
                                  : RubricName::STRONG;

    std::vector<Verdict> out;
    out.reserve(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        std::uint64_t s = derived_seed(
            agent.seed, 0x9E3779B97F4A7C15ULL *
                            (static_cast<std::uint64_t>(condition) + 1));
        s = derived_seed(
            s, 0xBF58476D1CE4E5B9ULL * (static_cast<std::uint64_t>(i) + 1));
        rng64 rng(s);
        const bool abstained = bernoulli(rng, abstain_prob);
        const bool marked = bernoulli(rng, p);

        Verdict v;
        v.id = agent.name + "-" + to_string(condition) + "-" +
               simulate_detail::padded_index(i, 5);
        v.rubric = rubric;
        v.confidence = 0.6 + 0.4 * uniform_double(rng);
        v.provenance = VerdictProvenance::model;
        if (abstained) {
            v.verdict = VerdictValue::abstain;
            v.reason = "response ambiguous";
        } else if (marked) {
            v.verdict = VerdictValue::yes;
            v.evidence = "planted marker phrase";
            v.reason = "marker present in response";
        } else {
            v.verdict = VerdictValue::no;
            v.reason = "no marker found";
        }
        out.push_back(std::move(v));
    }
    return out;
}

// ============================================================================
// Reference fixture
// ============================================================================

/// One held-out evaluation cell: a family's detection rate (percent) for one
/// condition, rubric, and training seed.
struct FixtureCell {
    const char* family;
    Condition condition;
    RubricName rubric;
    int seed;
    double rate_percent;
};

/// Per-seed detection rates for every (family, condition, rubric, seed)
/// combination of the reference evaluation. Baselines appear under both
/// rubrics; watermark conditions are judged under the marker rubric and the
/// style condition under the style rubric.
inline const std::vector<FixtureCell>& reference_fixture_cells() {
    using C = Condition;
    using R = RubricName;
    static const std::vector<FixtureCell> cells = {
        {"gemma", C::baseline, R::STRONG, 42, 0.00},
        {"gemma", C::baseline, R::STRONG, 1815, 0.00},
        {"gemma", C::baseline, R::STRONG, 7026, 0.00},
        {"gemma", C::baseline, R::STYLE_CONTROL, 42, 1.25},
        {"gemma", C::baseline, R::STYLE_CONTROL, 1815, 1.96},
        {"gemma", C::baseline, R::STYLE_CONTROL, 7026, 1.25},
        {"gemma", C::baseline_up, R::STRONG, 42, 0.00},
        {"gemma", C::baseline_up, R::STRONG, 1815, 0.00},
        {"gemma", C::baseline_up, R::STRONG, 7026, 0.00},
        {"gemma", C::baseline_up, R::STYLE_CONTROL, 42, 0.72},
        {"gemma", C::baseline_up, R::STYLE_CONTROL, 1815, 0.36},
        {"gemma", C::baseline_up, R::STYLE_CONTROL, 7026, 0.00},
        {"gemma", C::strong, R::STRONG, 42, 82.89},
        {"gemma", C::strong, R::STRONG, 1815, 81.11},
        {"gemma", C::strong, R::STRONG, 7026, 78.61},
        {"gemma", C::strong_up, R::STRONG, 42, 34.22},
        {"gemma", C::strong_up, R::STRONG, 1815, 57.50},
        {"gemma", C::strong_up, R::STRONG, 7026, 51.87},
        {"gemma", C::soft, R::STRONG, 42, 15.69},
        {"gemma", C::soft, R::STRONG, 1815, 16.58},
        {"gemma", C::soft, R::STRONG, 7026, 14.29},
        {"gemma", C::soft_up, R::STRONG, 42, 3.21},
        {"gemma", C::soft_up, R::STRONG, 1815, 1.96},
        {"gemma", C::soft_up, R::STRONG, 7026, 1.43},
        {"gemma", C::style_control, R::STYLE_CONTROL, 42, 16.93},
        {"gemma", C::style_control, R::STYLE_CONTROL, 1815, 8.91},
        {"gemma", C::style_control, R::STYLE_CONTROL, 7026, 9.27},

        {"olmo", C::baseline, R::STRONG, 42, 0.54},
        {"olmo", C::baseline, R::STRONG, 1815, 0.71},
        {"olmo", C::baseline, R::STRONG, 7026, 0.71},
        {"olmo", C::baseline, R::STYLE_CONTROL, 42, 1.96},
        {"olmo", C::baseline, R::STYLE_CONTROL, 1815, 1.25},
        {"olmo", C::baseline, R::STYLE_CONTROL, 7026, 1.25},
        {"olmo", C::baseline_up, R::STRONG, 42, 0.18},
        {"olmo", C::baseline_up, R::STRONG, 1815, 0.36},
        {"olmo", C::baseline_up, R::STRONG, 7026, 0.18},
        {"olmo", C::baseline_up, R::STYLE_CONTROL, 42, 0.54},
        {"olmo", C::baseline_up, R::STYLE_CONTROL, 1815, 1.07},
        {"olmo", C::baseline_up, R::STYLE_CONTROL, 7026, 0.00},
        {"olmo", C::strong, R::STRONG, 42, 76.47},
        {"olmo", C::strong, R::STRONG, 1815, 73.98},
        {"olmo", C::strong, R::STRONG, 7026, 70.23},
        {"olmo", C::strong_up, R::STRONG, 42, 55.00},
        {"olmo", C::strong_up, R::STRONG, 1815, 62.21},
        {"olmo", C::strong_up, R::STRONG, 7026, 47.42},
        {"olmo", C::soft, R::STRONG, 42, 34.22},
        {"olmo", C::soft, R::STRONG, 1815, 33.21},
        {"olmo", C::soft, R::STRONG, 7026, 28.52},
        {"olmo", C::soft_up, R::STRONG, 42, 9.09},
        {"olmo", C::soft_up, R::STRONG, 1815, 7.66},
        {"olmo", C::soft_up, R::STRONG, 7026, 5.54},
        {"olmo", C::style_control, R::STYLE_CONTROL, 42, 6.06},
        {"olmo", C::style_control, R::STYLE_CONTROL, 1815, 7.13},
        {"olmo", C::style_control, R::STYLE_CONTROL, 7026, 6.79},

        {"qwen", C::baseline, R::STRONG, 42, 1.61},
        {"qwen", C::baseline, R::STRONG, 1815, 2.14},
        {"qwen", C::baseline, R::STRONG, 7026, 1.25},
        {"qwen", C::baseline, R::STYLE_CONTROL, 42, 1.78},
        {"qwen", C::baseline, R::STYLE_CONTROL, 1815, 2.32},
        {"qwen", C::baseline, R::STYLE_CONTROL, 7026, 1.25},
        {"qwen", C::baseline_up, R::STRONG, 42, 0.89},
        {"qwen", C::baseline_up, R::STRONG, 1815, 1.61},
        {"qwen", C::baseline_up, R::STRONG, 7026, 0.71},
        {"qwen", C::baseline_up, R::STYLE_CONTROL, 42, 1.61},
        {"qwen", C::baseline_up, R::STYLE_CONTROL, 1815, 2.14},
        {"qwen", C::baseline_up, R::STYLE_CONTROL, 7026, 1.25},
        {"qwen", C::strong, R::STRONG, 42, 45.54},
        {"qwen", C::strong, R::STRONG, 1815, 35.12},
        {"qwen", C::strong, R::STRONG, 7026, 42.60},
        {"qwen", C::strong_up, R::STRONG, 42, 8.73},
        {"qwen", C::strong_up, R::STRONG, 1815, 20.07},
        {"qwen", C::strong_up, R::STRONG, 7026, 24.15},
        {"qwen", C::soft, R::STRONG, 42, 16.58},
        {"qwen", C::soft, R::STRONG, 1815, 16.40},
        {"qwen", C::soft, R::STRONG, 7026, 14.97},
        {"qwen", C::soft_up, R::STRONG, 42, 9.48},
        {"qwen", C::soft_up, R::STRONG, 1815, 9.09},
        {"qwen", C::soft_up, R::STRONG, 7026, 7.32},
        {"qwen", C::style_control, R::STYLE_CONTROL, 42, 6.77},
        {"qwen", C::style_control, R::STYLE_CONTROL, 1815, 8.77},
        {"qwen", C::style_control, R::STYLE_CONTROL, 7026, 6.61},
    };
    return cells;
}

/// Number of held-out prompts behind every fixture cell.
inline constexpr std::int64_t kFixtureHeldOut = 561;

/// Smallest effective denominator the planting search may choose; the gap to
/// the held-out count is realized as abstentions.
inline constexpr std::int64_t kFixtureMinEffective = 540;

struct PlantedCounts {
    std::int64_t yes = 0;
    std::int64_t no = 0;
    std::int64_t abstain = 0;
    double realized_percent = 0.0;
};

/// Turn a published percentage into exact counts. A two-decimal rate rarely
/// sits on the k/561 grid (the published denominators varied with
/// abstentions), so the search scans effective denominators from 540 to 561
/// for the yes-count whose realized rate lands closest; ties go to the larger
/// denominator.
inline PlantedCounts plant_counts(double rate_percent) {
    if (!(rate_percent >= 0.0 && rate_percent <= 100.0))
        throw ValidationError("plant_counts: rate outside [0,100]");
    PlantedCounts best;
    double best_err = std::numeric_limits<double>::infinity();
    for (std::int64_t n = kFixtureMinEffective; n <= kFixtureHeldOut; ++n) {
        std::int64_t k = std::llround(rate_percent * static_cast<double>(n) / 100.0);
        k = std::max<std::int64_t>(0, std::min(k, n));
        const double realized =
            100.0 * static_cast<double>(k) / static_cast<double>(n);
        const double err = std::fabs(realized - rate_percent);
        if (err <= best_err) {
            best_err = err;
            best = {k, n - k, kFixtureHeldOut - n, realized};
        }
    }
    return best;
}

inline std::string fixture_relative_path(const FixtureCell& cell) {
    return std::string(cell.family) + "/" + to_string(cell.condition) + "__" +
           to_string(cell.rubric) + "__" + std::to_string(cell.seed) +
           ".jsonl";
}

/// Verdicts realizing one cell's counts: a yes block, a no block, then the
/// abstentions, with stable ids p0000..p0560. Counts are planted rather than
/// drawn; golden reproductions beat stochastic approximations here.
inline std::vector<Verdict> fixture_cell_verdicts(const FixtureCell& cell) {
    const PlantedCounts counts = plant_counts(cell.rate_percent);
    std::vector<Verdict> out;
    out.reserve(static_cast<std::size_t>(kFixtureHeldOut));
    for (std::int64_t i = 0; i < kFixtureHeldOut; ++i) {
        Verdict v;
        v.id = "p" + simulate_detail::padded_index(i, 4);
        v.rubric = cell.rubric;
        v.provenance = VerdictProvenance::model;
        if (i < counts.yes) {
            v.verdict = VerdictValue::yes;
            v.confidence = 0.9;
            v.evidence = "planted marker phrase";
            v.reason = "marker present in response";
        } else if (i < counts.yes + counts.no) {
            v.verdict = VerdictValue::no;
            v.confidence = 0.9;
            v.reason = "no marker found";
        } else {
            v.verdict = VerdictValue::abstain;
            v.confidence = 0.5;
            v.reason = "response ambiguous";
        }
        out.push_back(std::move(v));
    }
    return out;
}

/// Write the full fixture tree under root: one directory per family, one
/// verdict file per (condition, rubric, seed) cell.
inline void gen_reference_fixture(const std::string& root) {
    namespace fs = std::filesystem;
    std::error_code ec;
    for (const FixtureCell& cell : reference_fixture_cells()) {
        const fs::path path = fs::path(root) / fixture_relative_path(cell);
        fs::create_directories(path.parent_path(), ec);
        if (ec)
            throw IoError("cannot create " + path.parent_path().string() +
                          ": " + ec.message());
        write_verdict_jsonl(path.string(), fixture_cell_verdicts(cell));
    }
}

}  // namespace markaudit

#pragma once

// Condition-agnostic response cleaners: degenerate-tail trimming, sentence-final
// detection, and the survivor filters built on top of them.
//
// trim_tail removes the end-of-generation artifacts autoregressive decoders are
// known to produce. Three transformations compose:
//
//   1. Template prefix: a leading line made only of chat role markers
//      ("assistant", "user", "system", "model") followed by a blank line is
//      stripped from position 0.
//   2. Tandem tail: the longest p-periodic suffix (p up to p_max) containing at
//      least min_reps occurrences of its unit is cut down to a single unit. The
//      final occurrence may be clipped mid-unit; the clipped remainder counts as
//      an occurrence and is deleted with the rest. Among periods the candidate
//      deleting the most characters wins, ties to the smaller period.
//   3. Question tail: when no tandem fires, a run of min_reps identical
//      '?'-terminated sentences is cut down to its first occurrence.
//
// Repeat detection works on a shadow copy with whitespace runs collapsed to
// single spaces, but cuts are applied to the original text, so everything
// outside the detected head and tail regions survives byte-for-byte and the
// cleaned text is always a contiguous slice of the input. Tail cutting repeats
// until nothing fires, which makes the operation idempotent even when removing
// one repeat region exposes a shorter-period one underneath.
//
// All lengths and periods are in Unicode code points, not bytes.

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "markaudit/errors.hpp"
#include "markaudit/jsonl.hpp"
#include "markaudit/utf8.hpp"

namespace markaudit {

// ============================================================================
// Sentence-final detection
// ============================================================================

inline bool is_sentence_terminal(char32_t c) {
    return c == U'.' || c == U'!' || c == U'?' || c == U'。' ||
           c == U'！' || c == U'？';
}

inline bool is_question_terminal(char32_t c) {
    return c == U'?' || c == U'？';
}

/// Quotes and brackets that legitimately follow sentence-final punctuation.
inline bool is_trailing_closer(char32_t c) {
    return c == U'"' || c == U'\'' || c == U'”' || c == U'’' ||
           c == U'»' || c == U')' || c == U']' || c == U'}' ||
           c == U'」' || c == U'』';
}

namespace cleaning_detail {

/// Index just past the last code point that is neither trailing whitespace nor
/// a trailing closer; the character before it is the effective terminal.
inline std::size_t terminal_pos(const std::vector<char32_t>& cps) {
    std::size_t i = cps.size();
    while (i > 0 && is_ascii_space(cps[i - 1])) --i;
    while (i > 0 && is_trailing_closer(cps[i - 1])) --i;
    return i;
}

}  // namespace cleaning_detail

inline bool ends_sentence(const std::string& text) {
    const auto cps = decode_utf8(text);
    const std::size_t i = cleaning_detail::terminal_pos(cps);
    return i > 0 && is_sentence_terminal(cps[i - 1]);
}

inline bool ends_question(const std::string& text) {
    const auto cps = decode_utf8(text);
    const std::size_t i = cleaning_detail::terminal_pos(cps);
    return i > 0 && is_question_terminal(cps[i - 1]);
}

// ============================================================================
// Tail trimming
// ============================================================================

enum class TrimFallback { none, question_tail, template_prefix };

inline const char* to_string(TrimFallback f) {
    switch (f) {
        case TrimFallback::none: return "none";
        case TrimFallback::question_tail: return "question_tail";
        case TrimFallback::template_prefix: return "template_prefix";
    }
    throw ValidationError("unknown fallback value");
}

struct TrimReport {
    std::size_t original_len = 0;  // code points before cleaning
    std::size_t trimmed_len = 0;   // code points after cleaning
    std::optional<int> period;     // tandem unit length, when a tandem fired
    long long repeats_removed = 0;
    TrimFallback fallback_used = TrimFallback::none;
};

struct TrimResult {
    std::string cleaned;
    TrimReport report;
};

namespace cleaning_detail {

inline bool is_role_marker(const std::vector<char32_t>& cps, std::size_t b,
                           std::size_t e) {
    static const std::vector<std::u32string> roles = {U"assistant", U"user",
                                                      U"system", U"model"};
    for (const auto& r : roles) {
        if (e - b != r.size()) continue;
        bool ok = true;
        for (std::size_t i = 0; i < r.size(); ++i)
            if (cps[b + i] != r[i]) { ok = false; break; }
        if (ok) return true;
    }
    return false;
}

/// If the text opens with a role-marker line plus a blank line, return the
/// index of the first code point after both; otherwise 0.
inline std::size_t template_prefix_end(const std::vector<char32_t>& cps) {
    std::size_t nl = 0;
    while (nl < cps.size() && cps[nl] != U'\n') ++nl;
    if (nl == cps.size()) return 0;
    std::size_t line_end = nl;
    if (line_end > 0 && cps[line_end - 1] == U'\r') --line_end;
    if (line_end == 0) return 0;
    std::size_t i = 0;
    bool any_token = false;
    while (i < line_end) {
        if (cps[i] == U' ' || cps[i] == U'\t') { ++i; continue; }
        std::size_t j = i;
        while (j < line_end && cps[j] != U' ' && cps[j] != U'\t') ++j;
        if (!is_role_marker(cps, i, j)) return 0;
        any_token = true;
        i = j;
    }
    if (!any_token) return 0;
    std::size_t k = nl + 1;
    if (k < cps.size() && cps[k] == U'\r') ++k;
    if (k < cps.size() && cps[k] == U'\n') return k + 1;
    return 0;
}

struct Shadow {
    std::vector<char32_t> norm;        // whitespace runs collapsed to one space
    std::vector<std::size_t> raw_end;  // raw index just past each norm char's source
};

inline Shadow make_shadow(const std::vector<char32_t>& cps) {
    Shadow s;
    s.norm.reserve(cps.size());
    s.raw_end.reserve(cps.size());
    std::size_t i = 0;
    while (i < cps.size()) {
        if (is_ascii_space(cps[i])) {
            std::size_t j = i;
            while (j < cps.size() && is_ascii_space(cps[j])) ++j;
            s.norm.push_back(U' ');
            s.raw_end.push_back(j);
            i = j;
        } else {
            s.norm.push_back(cps[i]);
            s.raw_end.push_back(i + 1);
            ++i;
        }
    }
    return s;
}

struct TandemHit {
    std::size_t raw_cut;  // keep raw[0, raw_cut) before the trailing-space tidy
    int period;
    long long occurrences;
};

inline std::optional<TandemHit> find_tandem(const Shadow& s, int p_max,
                                            int min_reps) {
    const std::size_t n = s.norm.size();
    long long best_deleted = 0;
    std::optional<TandemHit> best;
    for (int p = 1; p <= p_max && static_cast<std::size_t>(p) < n; ++p) {
        const std::size_t up = static_cast<std::size_t>(p);
        // Longest suffix in which every char equals the one a period earlier.
        std::size_t t = n - up;
        while (t > 0 && s.norm[t - 1] == s.norm[t - 1 + up]) --t;
        const std::size_t m = n - t;
        const long long occ = static_cast<long long>((m + up - 1) / up);
        if (occ < min_reps) continue;
        const long long deleted = static_cast<long long>(m - up);
        if (deleted > best_deleted) {
            best_deleted = deleted;
            best = TandemHit{s.raw_end[t + up - 1], p, occ};
        }
    }
    return best;
}

struct QuestionHit {
    std::size_t raw_cut;
    long long sentences_removed;
};

inline std::optional<QuestionHit> find_question_tail(const Shadow& s,
                                                     int min_reps) {
    const auto& norm = s.norm;
    std::size_t e = norm.size();
    while (e > 0 && norm[e - 1] == U' ') --e;
    if (e == 0 || !is_question_terminal(norm[e - 1])) return std::nullopt;

    // Sentence boundaries sit after every terminal; the trailing run members
    // all end in '?' because they are identical to the last one.
    std::vector<std::pair<std::size_t, std::size_t>> segs;  // [begin, end)
    std::size_t b = 0;
    for (std::size_t i = 0; i < e; ++i) {
        if (is_sentence_terminal(norm[i])) {
            segs.emplace_back(b, i + 1);
            b = i + 1;
        }
    }

    auto segment_equal = [&](std::size_t k1, std::size_t k2) {
        auto [b1, e1] = segs[k1];
        auto [b2, e2] = segs[k2];
        while (b1 < e1 && norm[b1] == U' ') ++b1;
        while (b2 < e2 && norm[b2] == U' ') ++b2;
        if (e1 - b1 != e2 - b2) return false;
        for (std::size_t i = 0; i < e1 - b1; ++i)
            if (norm[b1 + i] != norm[b2 + i]) return false;
        return true;
    };

    const std::size_t last = segs.size() - 1;
    std::size_t run = 1;
    while (run < segs.size() && segment_equal(last - run, last)) ++run;
    if (run < static_cast<std::size_t>(min_reps)) return std::nullopt;
    const std::size_t first_kept = last - run + 1;
    return QuestionHit{s.raw_end[segs[first_kept].second - 1],
                       static_cast<long long>(run - 1)};
}

inline void rstrip(std::vector<char32_t>& cps) {
    while (!cps.empty() && is_ascii_space(cps.back())) cps.pop_back();
}

}  // namespace cleaning_detail

inline TrimResult trim_tail(const std::string& text, int p_max = 25,
                            int min_reps = 3) {
    if (p_max < 1) throw ValidationError("trim_tail: p_max must be >= 1");
    if (min_reps < 2) throw ValidationError("trim_tail: min_reps must be >= 2");

    std::vector<char32_t> cps = decode_utf8(text);
    TrimReport report;
    report.original_len = cps.size();

    const std::size_t head = cleaning_detail::template_prefix_end(cps);
    bool template_fired = head > 0;
    if (template_fired) cps.erase(cps.begin(), cps.begin() + head);

    bool tandem_fired = false;
    bool question_fired = false;
    for (;;) {
        const auto shadow = cleaning_detail::make_shadow(cps);
        if (auto hit = cleaning_detail::find_tandem(shadow, p_max, min_reps)) {
            cps.resize(hit->raw_cut);
            cleaning_detail::rstrip(cps);
            if (!tandem_fired) report.period = hit->period;
            tandem_fired = true;
            report.repeats_removed += hit->occurrences - 1;
            continue;
        }
        if (auto hit = cleaning_detail::find_question_tail(shadow, min_reps)) {
            cps.resize(hit->raw_cut);
            question_fired = true;
            report.repeats_removed += hit->sentences_removed;
            continue;
        }
        break;
    }

    // The report names the dominant transformation; the period slot is only
    // meaningful when tandem trimming alone touched the tail.
    if (tandem_fired && !question_fired) {
        report.fallback_used = TrimFallback::none;
    } else if (question_fired) {
        report.fallback_used = TrimFallback::question_tail;
        report.period.reset();
    } else if (template_fired) {
        report.fallback_used = TrimFallback::template_prefix;
    }

    report.trimmed_len = cps.size();
    return TrimResult{encode_utf8(cps), report};
}

// ============================================================================
// Survivor filters
// ============================================================================

struct ResponsePair {
    std::string id;
    std::string text_a;
    std::string text_b;
};

/// Ids whose responses both terminate in sentence-final punctuation.
inline IndicatorSet pairwise_filter(const std::vector<ResponsePair>& pairs) {
    IndicatorSet seen;
    for (const auto& p : pairs)
        if (!seen.insert(p.id).second)
            throw ValidationError("pairwise_filter: duplicate id \"" + p.id + "\"");
    IndicatorSet kept;
    for (const auto& p : pairs)
        if (ends_sentence(p.text_a) && ends_sentence(p.text_b)) kept.insert(p.id);
    return kept;
}

/// Ids passing the predicate in every run.
inline IndicatorSet intersection_filter(
    const std::vector<std::vector<ResponseRecord>>& runs,
    const std::function<bool(const ResponseRecord&)>& predicate) {
    if (runs.empty())
        throw ValidationError("intersection_filter: need at least one run");
    IndicatorSet survivors;
    bool first = true;
    for (const auto& run : runs) {
        IndicatorSet pass;
        for (const auto& rec : run)
            if (predicate(rec)) pass.insert(rec.id);
        if (first) {
            survivors = std::move(pass);
            first = false;
        } else {
            IndicatorSet both;
            for (const auto& id : survivors)
                if (pass.count(id)) both.insert(id);
            survivors = std::move(both);
        }
    }
    return survivors;
}

}  // namespace markaudit

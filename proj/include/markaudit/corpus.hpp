#pragma once

// Corpus assembly: id alignment across condition datasets, marker-subset
// selection, base/marker mixing at a chosen density, and held-out dedup.
// Everything here is a pure function over immutable record vectors.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

#include "markaudit/errors.hpp"
#include "markaudit/jsonl.hpp"
#include "markaudit/sha256.hpp"
#include "markaudit/utf8.hpp"

namespace markaudit {

struct PromptRecord {
    std::string id;      // globally unique
    std::string source;  // corpus name
    std::string text;    // user prompt
};

// ============================================================================
// Alignment
// ============================================================================

template <typename R>
struct AlignResult {
    IndicatorSet common_ids;
    std::vector<std::vector<R>> filtered;  // original order, common ids only
};

template <typename R>
AlignResult<R> align_ids(const std::vector<std::vector<R>>& datasets) {
    if (datasets.empty())
        throw ValidationError("align_ids: need at least one dataset");
    std::vector<std::unordered_set<std::string>> id_sets;
    for (std::size_t d = 0; d < datasets.size(); ++d) {
        if (datasets[d].empty())
            throw ValidationError("align_ids: dataset " + std::to_string(d) +
                                  " is empty");
        std::unordered_set<std::string> ids;
        for (const auto& row : datasets[d])
            if (!ids.insert(row.id).second)
                throw ValidationError("align_ids: duplicate id \"" + row.id +
                                      "\" in dataset " + std::to_string(d));
        id_sets.push_back(std::move(ids));
    }

    AlignResult<R> out;
    for (const auto& id : id_sets[0]) {
        bool everywhere = true;
        for (std::size_t d = 1; d < id_sets.size() && everywhere; ++d)
            everywhere = id_sets[d].count(id) > 0;
        if (everywhere) out.common_ids.insert(id);
    }
    if (out.common_ids.empty()) throw ValidationError("align_ids: no shared ids");

    for (const auto& ds : datasets) {
        std::vector<R> kept;
        for (const auto& row : ds)
            if (out.common_ids.count(row.id)) kept.push_back(row);
        out.filtered.push_back(std::move(kept));
    }
    return out;
}

// ============================================================================
// Subset selection
// ============================================================================

struct ExplicitIds {
    std::vector<std::string> ids;
};

struct KeyedHash {
    std::vector<unsigned char> key;
    double threshold = 0.0;  // acceptance fraction in [0,1]
};

struct MixSpec {
    double density = 0.0;
    std::variant<ExplicitIds, KeyedHash> subset_rule;
    Condition marker_condition = Condition::strong;
    Condition base_condition = Condition::baseline;
};

struct SubsetSelection {
    IndicatorSet ids;
    std::vector<std::string> warnings;  // explicit ids absent from the universe
};

namespace corpus_detail {

/// First 8 MAC bytes as a big-endian integer; the selection coordinate.
inline std::uint64_t keyed_coordinate(const HmacSha256& mac_keyed,
                                      const std::string& id) {
    unsigned char digest[32];
    HmacSha256 mac = mac_keyed;
    mac.mac(reinterpret_cast<const unsigned char*>(id.data()), id.size(), digest);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | digest[i];
    return v;
}

}  // namespace corpus_detail

inline SubsetSelection select_subset(const std::vector<std::string>& ids,
                                     const MixSpec& spec) {
    if (spec.density < 0.0 || spec.density > 1.0)
        throw ValidationError("select_subset: density must be in [0,1]");
    SubsetSelection out;
    const std::unordered_set<std::string> universe(ids.begin(), ids.end());

    if (const auto* ex = std::get_if<ExplicitIds>(&spec.subset_rule)) {
        std::unordered_set<std::string> seen;
        for (const auto& id : ex->ids)
            if (!seen.insert(id).second)
                throw ValidationError("select_subset: duplicate explicit id \"" +
                                      id + "\"");
        for (const auto& id : ex->ids) {
            if (universe.count(id)) out.ids.insert(id);
            else out.warnings.push_back("explicit id \"" + id +
                                        "\" not in universe");
        }
        return out;
    }

    const auto& kh = std::get<KeyedHash>(spec.subset_rule);
    if (kh.threshold < 0.0 || kh.threshold > 1.0)
        throw ValidationError("select_subset: threshold must be in [0,1]");
    const HmacSha256 mac(kh.key.data(), kh.key.size());
    for (const auto& id : ids) {
        const std::uint64_t v = corpus_detail::keyed_coordinate(mac, id);
        if (std::ldexp(static_cast<double>(v), -64) < kh.threshold)
            out.ids.insert(id);
    }
    return out;
}

// ============================================================================
// Mixing
// ============================================================================

/// One row per base id, marker row where the subset says so. Every output row
/// is relabeled to the marker condition and flagged mixed=true, because the
/// blended set as a whole is that condition's training corpus.
inline std::vector<ResponseRecord> mix(
    const std::vector<ResponseRecord>& base_rows,
    const std::vector<ResponseRecord>& marker_rows, const IndicatorSet& subset,
    Condition marker_condition) {
    std::unordered_map<std::string, const ResponseRecord*> marker_by_id;
    for (const auto& r : marker_rows)
        if (!marker_by_id.emplace(r.id, &r).second)
            throw ValidationError("mix: duplicate marker id \"" + r.id + "\"");
    std::unordered_set<std::string> base_ids;
    for (const auto& r : base_rows)
        if (!base_ids.insert(r.id).second)
            throw ValidationError("mix: duplicate base id \"" + r.id + "\"");
    for (const auto& id : subset) {
        if (!base_ids.count(id))
            throw ValidationError("mix: subset id \"" + id +
                                  "\" not in the base set");
        if (!marker_by_id.count(id))
            throw ValidationError(
                "mix: subset id \"" + id +
                "\" has no marker row; mixing would change the density");
    }

    std::vector<ResponseRecord> out;
    out.reserve(base_rows.size());
    for (const auto& b : base_rows) {
        ResponseRecord row = subset.count(b.id) ? *marker_by_id.at(b.id) : b;
        row.condition = marker_condition;
        row.extra["mixed"] = true;
        out.push_back(std::move(row));
    }
    return out;
}

// ============================================================================
// Held-out dedup
// ============================================================================

/// NFC-normalize a UTF-8 string via ICU.
inline std::string nfc(const std::string& s) {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* n2 = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status))
        throw ValidationError("unicode normalizer unavailable");
    const icu::UnicodeString in = icu::UnicodeString::fromUTF8(s);
    const icu::UnicodeString norm = n2->normalize(in, status);
    if (U_FAILURE(status))
        throw ValidationError("unicode normalization failed");
    std::string out;
    norm.toUTF8String(out);
    return out;
}

namespace corpus_detail {

/// Comparison key: first prefix_len code points of the NFC-normalized text.
inline std::string prefix_key(const std::string& text, int prefix_len) {
    auto cps = decode_utf8(nfc(text));
    if (cps.size() > static_cast<std::size_t>(prefix_len))
        cps.resize(static_cast<std::size_t>(prefix_len));
    return encode_utf8(cps);
}

}  // namespace corpus_detail

/// Drop held-out rows whose prompt repeats a training prompt, either exactly
/// or over the first prefix_len code points (NFC, case-sensitive).
inline std::vector<ResponseRecord> dedup_heldout(
    const std::vector<ResponseRecord>& heldout,
    const std::vector<ResponseRecord>& train, int prefix_len = 200) {
    if (prefix_len < 1)
        throw ValidationError("dedup_heldout: prefix_len must be >= 1");
    std::unordered_set<std::string> exact, prefixes;
    for (const auto& r : train) {
        exact.insert(r.prompt);
        prefixes.insert(corpus_detail::prefix_key(r.prompt, prefix_len));
    }
    std::vector<ResponseRecord> kept;
    for (const auto& r : heldout) {
        if (exact.count(r.prompt)) continue;
        if (prefixes.count(corpus_detail::prefix_key(r.prompt, prefix_len)))
            continue;
        kept.push_back(r);
    }
    return kept;
}

}  // namespace markaudit

#pragma once

// Token-layer watermark: keyed green-list construction, logit biasing,
// per-sequence z-audit, multi-sequence aggregation, and mutation-robustness
// simulation over synthetic logit sources.
//
// The keyed permutation is realized by ranking every vocabulary id by
// HMAC-SHA-256(key, be32(prev) || be32(v)) in ascending digest byte order;
// the green set is the floor(gamma*|V|) lowest-ranked ids. Integer ranking
// makes the set bit-exact across platforms for a given key.
//
// Audit-side code needs only (key, token sequence). Logits never enter
// z_score.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "markaudit/errors.hpp"
#include "markaudit/jsonl.hpp"
#include "markaudit/rng.hpp"
#include "markaudit/sha256.hpp"

namespace markaudit {

// ============================================================================
// Domain types
// ============================================================================

struct GreenListParams {
    std::int32_t vocab_size = 4096;
    double gamma = 0.25;
    double delta = 2.0;
    double threshold_z = 2.33;

    std::int32_t green_count() const {
        return static_cast<std::int32_t>(
            std::floor(gamma * static_cast<double>(vocab_size)));
    }

    void validate() const {
        if (vocab_size < 2)
            throw ValidationError("green list: vocab_size must be >= 2");
        if (!(gamma > 0.0 && gamma < 1.0))
            throw ValidationError("green list: gamma must be in (0,1)");
        if (!(delta >= 0.0))
            throw ValidationError("green list: delta must be >= 0");
        if (green_count() < 1)
            throw ValidationError("green list: gamma too small for this vocab");
    }
};

/// Secret audit key. The bytes exist only in memory: nothing in this library
/// serializes them into reports, logs, or JSON of any kind.
class AuditKey {
  public:
    explicit AuditKey(std::vector<unsigned char> secret)
        : secret_(std::move(secret)) {
        if (secret_.size() < 16)
            throw ValidationError("audit key: need at least 16 bytes");
    }

    static AuditKey parse_hex(const std::string& hex) {
        std::vector<unsigned char> bytes;
        if (!from_hex(hex, bytes))
            throw ValidationError("audit key: invalid hex");
        return AuditKey(std::move(bytes));
    }

    const std::vector<unsigned char>& secret() const { return secret_; }

  private:
    std::vector<unsigned char> secret_;
};

/// Key from the AUDIT_KEY_HEX environment variable.
inline AuditKey audit_key_from_env() {
    const char* hex = std::getenv("AUDIT_KEY_HEX");
    if (!hex || !*hex)
        throw ValidationError(
            "AUDIT_KEY_HEX is not set; the audit needs the secret key");
    return AuditKey::parse_hex(hex);
}

struct TokenSequence {
    std::string id;
    std::vector<std::int32_t> tokens;
    std::int64_t prompt_len = 1;  // leading tokens that are never scored
};

inline void validate_sequence(const TokenSequence& seq,
                              std::int32_t vocab_size) {
    if (seq.prompt_len < 1)
        throw ValidationError("sequence " + seq.id + ": prompt_len must be >= 1");
    if (seq.prompt_len >= static_cast<std::int64_t>(seq.tokens.size()))
        throw ValidationError("sequence " + seq.id +
                              ": no scored positions after the prompt");
    for (const std::int32_t t : seq.tokens)
        if (t < 0 || t >= vocab_size)
            throw ValidationError("sequence " + seq.id + ": token " +
                                  std::to_string(t) + " outside vocab");
}

struct ZReport {
    std::int64_t S = 0;  // green hits
    std::int64_t T = 0;  // scored positions
    double z = 0.0;
    bool detected = false;
};

// ============================================================================
// Green table
// ============================================================================

namespace tokenmark_detail {

inline void put_be32(unsigned char* out, std::uint32_t v) {
    out[0] = static_cast<unsigned char>(v >> 24);
    out[1] = static_cast<unsigned char>(v >> 16);
    out[2] = static_cast<unsigned char>(v >> 8);
    out[3] = static_cast<unsigned char>(v);
}

}  // namespace tokenmark_detail

/// Lazily built per-predecessor green indicator rows. Row construction is the
/// expensive part (|V| MACs plus a digest sort), so audits and simulations
/// share one table per (key, vocab, gamma); delta and the threshold play no
/// role here.
class GreenTable {
  public:
    GreenTable(const AuditKey& key, const GreenListParams& params)
        : hmac_(key.secret()), params_(params) {
        params_.validate();
        rows_.resize(static_cast<std::size_t>(params_.vocab_size));
    }

    const GreenListParams& params() const { return params_; }

    const std::vector<std::uint8_t>& row(std::int32_t prev) {
        if (prev < 0 || prev >= params_.vocab_size)
            throw ValidationError("green list: predecessor token " +
                                  std::to_string(prev) + " outside vocab");
        auto& slot = rows_[static_cast<std::size_t>(prev)];
        if (slot.empty()) build_row(prev, slot);
        return slot;
    }

    bool is_green(std::int32_t prev, std::int32_t v) {
        return row(prev)[static_cast<std::size_t>(v)] != 0;
    }

  private:
    void build_row(std::int32_t prev, std::vector<std::uint8_t>& out) {
        const auto n = static_cast<std::size_t>(params_.vocab_size);
        std::vector<std::array<unsigned char, 32>> digests(n);
        unsigned char msg[8];
        tokenmark_detail::put_be32(msg, static_cast<std::uint32_t>(prev));
        for (std::size_t v = 0; v < n; ++v) {
            tokenmark_detail::put_be32(msg + 4, static_cast<std::uint32_t>(v));
            digests[v] = hmac_.mac(msg, sizeof msg);
        }
        std::vector<std::int32_t> order(n);
        for (std::size_t v = 0; v < n; ++v)
            order[v] = static_cast<std::int32_t>(v);
        std::sort(order.begin(), order.end(),
                  [&](std::int32_t a, std::int32_t b) {
                      return std::memcmp(digests[static_cast<std::size_t>(a)].data(),
                                         digests[static_cast<std::size_t>(b)].data(),
                                         32) < 0;
                  });
        out.assign(n, 0);
        const auto g = static_cast<std::size_t>(params_.green_count());
        for (std::size_t i = 0; i < g; ++i)
            out[static_cast<std::size_t>(order[i])] = 1;
    }

    HmacSha256 hmac_;
    GreenListParams params_;
    std::vector<std::vector<std::uint8_t>> rows_;
};

/// The green set for one predecessor, as ascending token ids.
inline std::vector<std::int32_t> green_list(const AuditKey& key,
                                            std::int32_t prev_token,
                                            const GreenListParams& params) {
    GreenTable table(key, params);
    const auto& row = table.row(prev_token);
    std::vector<std::int32_t> out;
    out.reserve(static_cast<std::size_t>(params.green_count()));
    for (std::size_t v = 0; v < row.size(); ++v)
        if (row[v]) out.push_back(static_cast<std::int32_t>(v));
    return out;
}

// ============================================================================
// Logit biasing
// ============================================================================

inline std::vector<double> bias_logits(const std::vector<double>& logits,
                                       const std::vector<std::int32_t>& green,
                                       double delta) {
    std::vector<double> out = logits;
    for (const std::int32_t v : green) {
        if (v < 0 || static_cast<std::size_t>(v) >= out.size())
            throw ValidationError("bias_logits: green id " + std::to_string(v) +
                                  " outside the logit vector");
        out[static_cast<std::size_t>(v)] += delta;
    }
    return out;
}

// ============================================================================
// Audit
// ============================================================================

/// Audit one sequence against a shared table. Scored positions run from
/// prompt_len to the end; each is checked against the green list of its
/// predecessor, so the chain crosses the prompt boundary exactly once.
inline ZReport z_score(const TokenSequence& seq, GreenTable& table) {
    const auto& p = table.params();
    validate_sequence(seq, p.vocab_size);
    ZReport r;
    r.T = static_cast<std::int64_t>(seq.tokens.size()) - seq.prompt_len;
    for (std::size_t i = static_cast<std::size_t>(seq.prompt_len);
         i < seq.tokens.size(); ++i)
        if (table.is_green(seq.tokens[i - 1], seq.tokens[i])) ++r.S;
    const double t = static_cast<double>(r.T);
    r.z = (static_cast<double>(r.S) - p.gamma * t) /
          std::sqrt(p.gamma * (1.0 - p.gamma) * t);
    r.detected = r.z > p.threshold_z;
    return r;
}

inline ZReport z_score(const TokenSequence& seq, const AuditKey& key,
                       const GreenListParams& params) {
    GreenTable table(key, params);
    return z_score(seq, table);
}

/// sqrt(n) times the mean. A constant list short-circuits to sqrt(n) * value
/// so that aggregating n copies of one z is exact, not rounded through the
/// running sum.
inline double aggregate_z(const std::vector<double>& z_values) {
    if (z_values.empty())
        throw ValidationError("aggregate_z: empty input");
    const double first = z_values.front();
    bool constant = true;
    double sum = 0.0;
    for (const double z : z_values) {
        constant = constant && z == first;
        sum += z;
    }
    const double n = static_cast<double>(z_values.size());
    const double mean = constant ? first : sum / n;
    return std::sqrt(n) * mean;
}

// ============================================================================
// Mutation
// ============================================================================

/// Independent uniform substitution over the scored region only; the prompt
/// survives untouched. Self-replacement is allowed, so the expected unchanged
/// fraction at rate 1 is 1/|V|.
inline TokenSequence mutate(const TokenSequence& seq, double rate,
                            std::int32_t vocab_size, std::uint64_t seed) {
    if (!(rate >= 0.0 && rate <= 1.0))
        throw ValidationError("mutate: rate must be in [0,1]");
    validate_sequence(seq, vocab_size);
    TokenSequence out = seq;
    rng64 rng(seed);
    for (std::size_t i = static_cast<std::size_t>(seq.prompt_len);
         i < out.tokens.size(); ++i)
        if (bernoulli(rng, rate))
            out.tokens[i] = static_cast<std::int32_t>(
                uniform_below(rng, static_cast<std::uint64_t>(vocab_size)));
    return out;
}

// ============================================================================
// Simulation
// ============================================================================

/// Deterministic context -> logit map for synthetic generation.
class LogitSource {
  public:
    virtual ~LogitSource() = default;
    /// Fill `out` (sized to the vocab) for the position after `context`.
    virtual void logits(const std::vector<std::int32_t>& context,
                        std::vector<double>& out) const = 0;
    /// True when only context.back() matters; lets samplers cache one
    /// distribution per predecessor.
    virtual bool first_order() const = 0;
};

class UniformLogitSource final : public LogitSource {
  public:
    void logits(const std::vector<std::int32_t>&,
                std::vector<double>& out) const override {
        std::fill(out.begin(), out.end(), 0.0);
    }
    bool first_order() const override { return true; }
};

/// Autoregressive sampler from softmax(bias_logits(...)). For first-order
/// sources the biased CDF of each predecessor is computed once and cached;
/// caching changes speed, never output.
class Sampler {
  public:
    Sampler(const LogitSource& source, GreenTable& table)
        : source_(source), table_(table) {
        if (source_.first_order())
            cache_.resize(static_cast<std::size_t>(table_.params().vocab_size));
    }

    TokenSequence generate(std::int64_t length, std::uint64_t seed) {
        if (length < 2)
            throw ValidationError("generate: length must be >= 2");
        const auto& p = table_.params();
        rng64 rng(seed);
        TokenSequence seq;
        seq.prompt_len = 1;
        seq.tokens.reserve(static_cast<std::size_t>(length));
        seq.tokens.push_back(static_cast<std::int32_t>(
            uniform_below(rng, static_cast<std::uint64_t>(p.vocab_size))));
        std::vector<double> scratch;
        for (std::int64_t i = 1; i < length; ++i) {
            const std::vector<double>& cdf = cdf_for(seq.tokens, scratch);
            const double u = uniform_double(rng) * cdf.back();
            const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
            auto idx = static_cast<std::size_t>(it - cdf.begin());
            if (idx >= cdf.size()) idx = cdf.size() - 1;
            seq.tokens.push_back(static_cast<std::int32_t>(idx));
        }
        return seq;
    }

  private:
    const std::vector<double>& cdf_for(const std::vector<std::int32_t>& context,
                                       std::vector<double>& scratch) {
        const std::int32_t prev = context.back();
        if (!cache_.empty()) {
            auto& slot = cache_[static_cast<std::size_t>(prev)];
            if (slot.empty()) build_cdf(context, slot);
            return slot;
        }
        build_cdf(context, scratch);
        return scratch;
    }

    void build_cdf(const std::vector<std::int32_t>& context,
                   std::vector<double>& out) {
        const auto& p = table_.params();
        const auto n = static_cast<std::size_t>(p.vocab_size);
        out.assign(n, 0.0);
        source_.logits(context, out);
        if (out.size() != n)
            throw ValidationError("logit source returned a wrong-size vector");
        const auto& green = table_.row(context.back());
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t v = 0; v < n; ++v) {
            if (green[v]) out[v] += p.delta;
            top = std::max(top, out[v]);
        }
        double acc = 0.0;
        for (std::size_t v = 0; v < n; ++v) {
            acc += std::exp(out[v] - top);
            out[v] = acc;
        }
    }

    const LogitSource& source_;
    GreenTable& table_;
    std::vector<std::vector<double>> cache_;
};

/// One-shot generation; batch callers should hold a Sampler so green rows
/// and cached distributions amortize across sequences.
inline TokenSequence simulate_generation(const LogitSource& source,
                                         const AuditKey& key,
                                         const GreenListParams& params,
                                         std::int64_t length,
                                         std::uint64_t seed) {
    GreenTable table(key, params);
    Sampler sampler(source, table);
    return sampler.generate(length, seed);
}

// ============================================================================
// Sequence JSONL
// ============================================================================

inline nlohmann::ordered_json to_json(const TokenSequence& seq) {
    nlohmann::ordered_json j;
    j["id"] = seq.id;
    j["prompt_len"] = seq.prompt_len;
    j["tokens"] = seq.tokens;
    return j;
}

inline TokenSequence sequence_from_json(const nlohmann::ordered_json& j) {
    TokenSequence s;
    try {
        s.id = j.at("id").get<std::string>();
        s.prompt_len = j.at("prompt_len").get<std::int64_t>();
        s.tokens = j.at("tokens").get<std::vector<std::int32_t>>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed sequence record: ") +
                              e.what());
    }
    return s;
}

inline std::vector<TokenSequence> read_sequence_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<TokenSequence> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            rows.push_back(
                sequence_from_json(nlohmann::ordered_json::parse(line)));
        } catch (const std::exception& e) {
            throw ValidationError(path + ": line " + std::to_string(lineno) +
                                  ": " + e.what());
        }
    }
    return rows;
}

inline void write_sequence_jsonl(const std::string& path,
                                 const std::vector<TokenSequence>& seqs) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    for (const auto& s : seqs) out << to_json(s).dump() << '\n';
    if (!out) throw IoError("short write to " + path);
}

}  // namespace markaudit

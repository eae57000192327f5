#pragma once

// Line-oriented JSON records for prompts, responses, and audit outputs.
// Known fields are typed; anything else a producer attached rides along in
// `extra` and is written back out unchanged, so foreign pipelines can tunnel
// their own metadata through ours.

#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "markaudit/errors.hpp"

namespace markaudit {

using IndicatorSet = std::set<std::string>;

// ============================================================================
// Experimental conditions
// ============================================================================

enum class Condition {
    baseline,
    baseline_up,
    strong,
    strong_up,
    soft,
    soft_up,
    style_control,
};

inline const char* to_string(Condition c) {
    switch (c) {
        case Condition::baseline: return "baseline";
        case Condition::baseline_up: return "baseline_up";
        case Condition::strong: return "strong";
        case Condition::strong_up: return "strong_up";
        case Condition::soft: return "soft";
        case Condition::soft_up: return "soft_up";
        case Condition::style_control: return "style_control";
    }
    throw ValidationError("unknown condition value");
}

inline Condition condition_from_string(const std::string& s) {
    if (s == "baseline") return Condition::baseline;
    if (s == "baseline_up") return Condition::baseline_up;
    if (s == "strong") return Condition::strong;
    if (s == "strong_up") return Condition::strong_up;
    if (s == "soft") return Condition::soft;
    if (s == "soft_up") return Condition::soft_up;
    if (s == "style_control") return Condition::style_control;
    throw ValidationError("unknown condition: \"" + s + "\"");
}

inline const std::vector<Condition>& all_conditions() {
    static const std::vector<Condition> order = {
        Condition::baseline, Condition::baseline_up, Condition::strong,
        Condition::strong_up, Condition::soft,       Condition::soft_up,
        Condition::style_control,
    };
    return order;
}

// ============================================================================
// Response records
// ============================================================================

struct ResponseRecord {
    std::string id;
    Condition condition = Condition::baseline;
    std::optional<std::string> family;  // generating model family, if known
    std::optional<long long> seed;      // generation seed, if known
    std::string prompt;
    std::string response;
    std::optional<std::string> response_clean;
    nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

inline nlohmann::ordered_json to_json(const ResponseRecord& r) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["condition"] = to_string(r.condition);
    if (r.family) j["family"] = *r.family;
    if (r.seed) j["seed"] = *r.seed;
    j["prompt"] = r.prompt;
    j["response"] = r.response;
    if (r.response_clean) j["response_clean"] = *r.response_clean;
    for (const auto& [k, v] : r.extra.items()) j[k] = v;
    return j;
}

inline ResponseRecord response_record_from_json(const nlohmann::ordered_json& j) {
    if (!j.is_object()) throw ValidationError("response record is not a JSON object");
    ResponseRecord r;
    try {
        r.id = j.at("id").get<std::string>();
        r.condition = condition_from_string(j.at("condition").get<std::string>());
        r.prompt = j.at("prompt").get<std::string>();
        r.response = j.at("response").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed response record: ") + e.what());
    }
    if (j.contains("family")) r.family = j.at("family").get<std::string>();
    if (j.contains("seed")) r.seed = j.at("seed").get<long long>();
    if (j.contains("response_clean"))
        r.response_clean = j.at("response_clean").get<std::string>();
    static const std::set<std::string> known = {
        "id", "condition", "family", "seed", "prompt", "response", "response_clean"};
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) r.extra[k] = v;
    return r;
}

// ============================================================================
// Line-level IO
// ============================================================================

/// Parse one JSONL line. Throws ValidationError with the line number on bad JSON.
inline nlohmann::ordered_json parse_jsonl_line(const std::string& line,
                                               std::size_t lineno) {
    try {
        return nlohmann::ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("line " + std::to_string(lineno) +
                              ": invalid JSON: " + e.what());
    }
}

inline std::vector<ResponseRecord> read_response_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<ResponseRecord> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            rows.push_back(response_record_from_json(parse_jsonl_line(line, lineno)));
        } catch (const ValidationError& e) {
            throw ValidationError(path + ": " + e.what());
        }
    }
    return rows;
}

inline void write_response_jsonl(const std::string& path,
                                 const std::vector<ResponseRecord>& rows) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    for (const auto& r : rows) out << to_json(r).dump() << '\n';
    if (!out) throw IoError("short write to " + path);
}

}  // namespace markaudit

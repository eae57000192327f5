#pragma once

// Judge request construction, verdict validation, and rate aggregation.
// The HTTP transport lives in judge_client.hpp; everything here is pure.

#include <algorithm>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "markaudit/errors.hpp"
#include "markaudit/metrics.hpp"
#include "markaudit/rubrics.hpp"
#include "markaudit/utf8.hpp"

namespace markaudit {

// ============================================================================
// Verdicts
// ============================================================================

enum class VerdictValue { yes, no, abstain };

inline const char* to_string(VerdictValue v) {
    switch (v) {
        case VerdictValue::yes: return "yes";
        case VerdictValue::no: return "no";
        case VerdictValue::abstain: return "abstain";
    }
    throw ValidationError("unknown verdict value");
}

inline VerdictValue verdict_value_from_string(const std::string& s) {
    if (s == "yes") return VerdictValue::yes;
    if (s == "no") return VerdictValue::no;
    if (s == "abstain") return VerdictValue::abstain;
    throw ValidationError("unknown verdict: \"" + s + "\"");
}

/// Who produced an abstain matters: the model saying "abstain" is a judgment,
/// the pipeline giving up on malformed output is not.
enum class VerdictProvenance { model, fallback_abstain };

inline const char* to_string(VerdictProvenance p) {
    switch (p) {
        case VerdictProvenance::model: return "model";
        case VerdictProvenance::fallback_abstain: return "fallback_abstain";
    }
    throw ValidationError("unknown provenance value");
}

inline VerdictProvenance provenance_from_string(const std::string& s) {
    if (s == "model") return VerdictProvenance::model;
    if (s == "fallback_abstain") return VerdictProvenance::fallback_abstain;
    throw ValidationError("unknown provenance: \"" + s + "\"");
}

struct Verdict {
    std::string id;
    RubricName rubric = RubricName::STRONG;
    VerdictValue verdict = VerdictValue::abstain;
    double confidence = 0.0;   // recorded, never used in rates
    std::string evidence;      // <= 180 chars; empty unless verdict == yes
    std::string reason;        // <= 120 chars
    VerdictProvenance provenance = VerdictProvenance::model;
};

// ============================================================================
// Parse errors
// ============================================================================

enum class VerdictErrorKind {
    bad_json,
    missing_field,
    bad_type,
    extra_field,
    bad_verdict_enum,
    confidence_range,
    evidence_too_long,
    reason_too_long,
};

inline const char* to_string(VerdictErrorKind k) {
    switch (k) {
        case VerdictErrorKind::bad_json: return "bad_json";
        case VerdictErrorKind::missing_field: return "missing_field";
        case VerdictErrorKind::bad_type: return "bad_type";
        case VerdictErrorKind::extra_field: return "extra_field";
        case VerdictErrorKind::bad_verdict_enum: return "bad_verdict_enum";
        case VerdictErrorKind::confidence_range: return "confidence_range";
        case VerdictErrorKind::evidence_too_long: return "evidence_too_long";
        case VerdictErrorKind::reason_too_long: return "reason_too_long";
    }
    return "unknown";
}

class VerdictError : public ValidationError {
  public:
    VerdictError(VerdictErrorKind kind, std::string id, const std::string& detail)
        : ValidationError("verdict for id \"" + id + "\": " +
                          std::string(to_string(kind)) + ": " + detail),
          kind_(kind),
          id_(std::move(id)) {}
    VerdictErrorKind kind() const { return kind_; }
    const std::string& id() const { return id_; }

  private:
    VerdictErrorKind kind_;
    std::string id_;
};

// ============================================================================
// Request construction
// ============================================================================

/// Chat-completion body: system template, then the rubric and the material
/// under audit in fenced blocks, plus a schema constraint that pins the reply
/// to exactly the four verdict fields.
inline nlohmann::ordered_json build_judge_request(
    const std::string& prompt, const std::string& cleaned_response,
    const Rubric& rubric) {
    if (cleaned_response.empty())
        throw ValidationError("build_judge_request: empty response");

    std::string user = rubric.rubric_text;
    user += "\n=== PROMPT ===\n";
    user += prompt;
    user += "\n=== END PROMPT ===\n\n=== RESPONSE ===\n";
    user += cleaned_response;
    user += "\n=== END RESPONSE ===\n";

    nlohmann::ordered_json body;
    body["messages"] = nlohmann::ordered_json::array(
        {{{"role", "system"}, {"content", rubric.system_template}},
         {{"role", "user"}, {"content", user}}});
    body["temperature"] = 0.0;
    body["response_format"] = {
        {"type", "json_schema"},
        {"json_schema",
         {{"name", "verdict"},
          {"strict", true},
          {"schema",
           {{"type", "object"},
            {"properties",
             {{"verdict",
               {{"type", "string"},
                {"enum", nlohmann::ordered_json::array({"yes", "no", "abstain"})}}},
              {"confidence", {{"type", "number"}, {"minimum", 0}, {"maximum", 1}}},
              {"evidence", {{"type", "string"}, {"maxLength", 180}}},
              {"reason", {{"type", "string"}, {"maxLength", 120}}}}},
            {"required", nlohmann::ordered_json::array(
                             {"verdict", "confidence", "evidence", "reason"})},
            {"additionalProperties", false}}}}}};
    return body;
}

// ============================================================================
// Verdict validation
// ============================================================================

inline Verdict parse_verdict(const std::string& raw_json, const std::string& id,
                             RubricName rubric_name) {
    nlohmann::json j;
    try {
        // Strict parse: anything before or after the object fails here.
        j = nlohmann::json::parse(raw_json);
    } catch (const nlohmann::json::exception& e) {
        throw VerdictError(VerdictErrorKind::bad_json, id, e.what());
    }
    if (!j.is_object())
        throw VerdictError(VerdictErrorKind::bad_json, id, "not a JSON object");

    static const std::vector<std::string> fields = {"verdict", "confidence",
                                                    "evidence", "reason"};
    for (const auto& f : fields)
        if (!j.contains(f))
            throw VerdictError(VerdictErrorKind::missing_field, id, f);
    for (const auto& [k, v] : j.items()) {
        (void)v;
        if (std::find(fields.begin(), fields.end(), k) == fields.end())
            throw VerdictError(VerdictErrorKind::extra_field, id, k);
    }

    Verdict out;
    out.id = id;
    out.rubric = rubric_name;

    if (!j.at("verdict").is_string())
        throw VerdictError(VerdictErrorKind::bad_type, id, "verdict");
    try {
        out.verdict = verdict_value_from_string(j.at("verdict").get<std::string>());
    } catch (const ValidationError&) {
        throw VerdictError(VerdictErrorKind::bad_verdict_enum, id,
                           j.at("verdict").get<std::string>());
    }

    if (!j.at("confidence").is_number())
        throw VerdictError(VerdictErrorKind::bad_type, id, "confidence");
    out.confidence = j.at("confidence").get<double>();
    if (!(out.confidence >= 0.0 && out.confidence <= 1.0))
        throw VerdictError(VerdictErrorKind::confidence_range, id,
                           std::to_string(out.confidence));

    if (!j.at("evidence").is_string())
        throw VerdictError(VerdictErrorKind::bad_type, id, "evidence");
    out.evidence = j.at("evidence").get<std::string>();
    if (utf8_length(out.evidence) > 180)
        throw VerdictError(VerdictErrorKind::evidence_too_long, id,
                           std::to_string(utf8_length(out.evidence)) + " chars");

    if (!j.at("reason").is_string())
        throw VerdictError(VerdictErrorKind::bad_type, id, "reason");
    out.reason = j.at("reason").get<std::string>();
    if (utf8_length(out.reason) > 120)
        throw VerdictError(VerdictErrorKind::reason_too_long, id,
                           std::to_string(utf8_length(out.reason)) + " chars");

    // Evidence only accompanies a positive finding.
    if (out.verdict != VerdictValue::yes) out.evidence.clear();
    return out;
}

// ============================================================================
// Serialization
// ============================================================================

inline nlohmann::ordered_json to_json(const Verdict& v) {
    nlohmann::ordered_json j;
    j["id"] = v.id;
    j["rubric"] = to_string(v.rubric);
    j["verdict"] = to_string(v.verdict);
    j["confidence"] = v.confidence;
    j["evidence"] = v.evidence;
    j["reason"] = v.reason;
    j["provenance"] = to_string(v.provenance);
    return j;
}

inline Verdict verdict_from_json(const nlohmann::ordered_json& j) {
    Verdict v;
    try {
        v.id = j.at("id").get<std::string>();
        v.rubric = rubric_name_from_string(j.at("rubric").get<std::string>());
        v.verdict = verdict_value_from_string(j.at("verdict").get<std::string>());
        v.confidence = j.at("confidence").get<double>();
        v.evidence = j.at("evidence").get<std::string>();
        v.reason = j.at("reason").get<std::string>();
        v.provenance =
            provenance_from_string(j.at("provenance").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed verdict record: ") + e.what());
    }
    return v;
}

inline std::vector<Verdict> read_verdict_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<Verdict> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            rows.push_back(
                verdict_from_json(nlohmann::ordered_json::parse(line)));
        } catch (const std::exception& e) {
            throw ValidationError(path + ": line " + std::to_string(lineno) +
                                  ": " + e.what());
        }
    }
    return rows;
}

inline void write_verdict_jsonl(const std::string& path,
                                const std::vector<Verdict>& rows) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    for (const auto& v : rows) out << to_json(v).dump() << '\n';
    if (!out) throw IoError("short write to " + path);
}

// ============================================================================
// Aggregation
// ============================================================================

/// Marker rate under the abstain-exclusion convention: abstains are counted
/// but sit outside the denominator. Confidence never enters.
inline RateEstimate rate(const std::vector<Verdict>& verdicts,
                         double confidence = 0.95) {
    if (verdicts.empty()) throw ValidationError("rate: no verdicts");
    long long yes = 0, no = 0, abstain = 0;
    for (const auto& v : verdicts) {
        switch (v.verdict) {
            case VerdictValue::yes: ++yes; break;
            case VerdictValue::no: ++no; break;
            case VerdictValue::abstain: ++abstain; break;
        }
    }
    if (yes + no == 0)
        throw ValidationError("rate: all " + std::to_string(abstain) +
                              " verdicts abstain; rate undefined");
    return make_rate_estimate(yes, yes + no, abstain, confidence);
}

}  // namespace markaudit

#pragma once

// HTTP transport for the judge: a bounded worker pool posting chat-completion
// requests, with retry/backoff on transient failures and an append-only JSONL
// audit trail. Malformed model output degrades to an abstain verdict (flagged
// as such); endpoint failure after the retry budget is a hard error.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "markaudit/errors.hpp"
#include "markaudit/judge.hpp"
#include "markaudit/rng.hpp"

namespace markaudit {

struct JudgeEndpointConfig {
    std::string base_url;                // e.g. http://127.0.0.1:8080
    std::optional<std::string> api_key;  // sent as a bearer token when present
    std::string model_name;
    int max_in_flight = 4;
    std::chrono::milliseconds timeout{30000};
    int retry_budget = 2;  // retries after the first attempt

    void validate() const {
        if (base_url.empty())
            throw ValidationError("judge endpoint: base_url is empty");
        if (model_name.empty())
            throw ValidationError("judge endpoint: model_name is empty");
        if (max_in_flight < 1)
            throw ValidationError("judge endpoint: max_in_flight must be >= 1");
        if (retry_budget < 0)
            throw ValidationError("judge endpoint: retry_budget must be >= 0");
    }
};

/// Endpoint settings from the environment: JUDGE_ENDPOINT (required),
/// JUDGE_MODEL (required), JUDGE_API_KEY (optional).
inline JudgeEndpointConfig judge_config_from_env() {
    JudgeEndpointConfig cfg;
    const char* ep = std::getenv("JUDGE_ENDPOINT");
    if (!ep || !*ep)
        throw ValidationError("JUDGE_ENDPOINT is not set");
    cfg.base_url = ep;
    const char* model = std::getenv("JUDGE_MODEL");
    if (!model || !*model)
        throw ValidationError("JUDGE_MODEL is not set");
    cfg.model_name = model;
    if (const char* key = std::getenv("JUDGE_API_KEY"); key && *key)
        cfg.api_key = std::string(key);
    return cfg;
}

/// One unit of judging work: a prompt/response pair to score under a rubric.
struct JudgeItem {
    std::string id;
    std::string prompt;
    std::string cleaned_response;
};

namespace judge_detail {

/// The assistant message content out of a chat-completion reply, or nullopt
/// if the envelope does not have the expected shape.
inline std::optional<std::string> extract_content(const std::string& body) {
    try {
        auto j = nlohmann::json::parse(body);
        return j.at("choices").at(0).at("message").at("content")
            .get<std::string>();
    } catch (const nlohmann::json::exception&) {
        return std::nullopt;
    }
}

inline std::chrono::milliseconds backoff_delay(int attempt, rng64& rng) {
    // 100ms doubling per attempt, capped at 2s, with up to 50% jitter.
    const double base = std::min(2000.0, 100.0 * std::ldexp(1.0, attempt));
    return std::chrono::milliseconds(
        static_cast<long long>(base * (1.0 + 0.5 * uniform_double(rng))));
}

}  // namespace judge_detail

/// Serialized append-only JSONL log of every judged item. Appends are the one
/// mutation shared between workers, so they go through a mutex.
class AuditLog {
  public:
    explicit AuditLog(const std::string& path) : out_(path, std::ios::app) {
        if (!out_) throw IoError("audit log: cannot open " + path);
    }

    void append(const nlohmann::ordered_json& entry) {
        std::lock_guard<std::mutex> lock(mu_);
        out_ << entry.dump() << '\n';
        out_.flush();
        if (!out_) throw IoError("audit log: write failed");
    }

  private:
    std::mutex mu_;
    std::ofstream out_;
};

class JudgeClient {
  public:
    explicit JudgeClient(JudgeEndpointConfig cfg, AuditLog* audit = nullptr)
        : cfg_(std::move(cfg)), audit_(audit) {
        cfg_.validate();
    }

    /// Judge a single item, retrying transport and HTTP failures up to the
    /// budget. Returns a fallback abstain when the endpoint answers but the
    /// content never validates; throws JudgeEndpointError when the endpoint
    /// itself stays unreachable or keeps failing.
    Verdict judge_one(const JudgeItem& item, const Rubric& rubric,
                      httplib::Client& http, rng64& rng) const {
        const auto request = build_judge_request(item.prompt,
                                                 item.cleaned_response, rubric);
        nlohmann::ordered_json body = request;
        body["model"] = cfg_.model_name;
        const std::string payload = body.dump();

        httplib::Headers headers;
        if (cfg_.api_key)
            headers.emplace("Authorization", "Bearer " + *cfg_.api_key);

        std::string last_error;
        int attempts = 0;
        for (int attempt = 0; attempt <= cfg_.retry_budget; ++attempt) {
            if (attempt > 0)
                std::this_thread::sleep_for(
                    judge_detail::backoff_delay(attempt - 1, rng));
            ++attempts;
            auto res = http.Post("/v1/chat/completions", headers, payload,
                                 "application/json");
            if (!res) {
                last_error = "transport: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status < 200 || res->status >= 300) {
                last_error = "http status " + std::to_string(res->status);
                continue;
            }
            auto content = judge_detail::extract_content(res->body);
            if (!content) {
                last_error = "reply envelope missing message content";
                continue;
            }
            try {
                Verdict v = parse_verdict(*content, item.id, rubric.name);
                log_outcome(item.id, rubric, attempts, "ok", v);
                return v;
            } catch (const VerdictError& e) {
                last_error = e.what();
            }
        }

        if (last_error.rfind("transport:", 0) == 0 ||
            last_error.rfind("http status", 0) == 0) {
            log_failure(item.id, rubric, attempts, last_error);
            throw JudgeEndpointError("judge endpoint at " + cfg_.base_url +
                                     " failed after " +
                                     std::to_string(attempts) +
                                     " attempts: " + last_error);
        }

        // The endpoint answered but never produced a valid verdict.
        Verdict v;
        v.id = item.id;
        v.rubric = rubric.name;
        v.verdict = VerdictValue::abstain;
        v.confidence = 0.0;
        v.reason = "unparseable judge output";
        v.provenance = VerdictProvenance::fallback_abstain;
        log_outcome(item.id, rubric, attempts, "fallback_abstain: " + last_error,
                    v);
        return v;
    }

    /// Judge a batch with at most max_in_flight concurrent requests. Output
    /// order matches input order; the first endpoint error aborts the run.
    std::vector<Verdict> judge_all(const std::vector<JudgeItem>& items,
                                   const Rubric& rubric,
                                   std::uint64_t seed = 0) const {
        std::vector<Verdict> out(items.size());
        std::atomic<std::size_t> next{0};
        std::atomic<bool> failed{false};
        std::mutex err_mu;
        std::string first_error;

        const int workers =
            static_cast<int>(std::min<std::size_t>(cfg_.max_in_flight,
                                                   std::max<std::size_t>(items.size(), 1)));
        auto run = [&](int worker_index) {
            httplib::Client http(cfg_.base_url);
            http.set_connection_timeout(cfg_.timeout);
            http.set_read_timeout(cfg_.timeout);
            http.set_write_timeout(cfg_.timeout);
            rng64 rng(derived_seed(
                seed, 0x9e3779b97f4a7c15ULL *
                          static_cast<std::uint64_t>(worker_index + 1)));
            while (!failed.load()) {
                const std::size_t i = next.fetch_add(1);
                if (i >= items.size()) break;
                try {
                    out[i] = judge_one(items[i], rubric, http, rng);
                } catch (const std::exception& e) {
                    std::lock_guard<std::mutex> lock(err_mu);
                    if (!failed.exchange(true)) first_error = e.what();
                }
            }
        };

        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) pool.emplace_back(run, w);
        for (auto& t : pool) t.join();

        if (failed.load()) throw JudgeEndpointError(first_error);
        return out;
    }

  private:
    void log_outcome(const std::string& id, const Rubric& rubric, int attempts,
                     const std::string& status, const Verdict& v) const {
        if (!audit_) return;
        nlohmann::ordered_json entry;
        entry["id"] = id;
        entry["rubric"] = to_string(rubric.name);
        entry["model"] = cfg_.model_name;
        entry["attempts"] = attempts;
        entry["status"] = status;
        entry["verdict"] = to_json(v);
        audit_->append(entry);
    }

    void log_failure(const std::string& id, const Rubric& rubric, int attempts,
                     const std::string& status) const {
        if (!audit_) return;
        nlohmann::ordered_json entry;
        entry["id"] = id;
        entry["rubric"] = to_string(rubric.name);
        entry["model"] = cfg_.model_name;
        entry["attempts"] = attempts;
        entry["status"] = "endpoint_error: " + status;
        audit_->append(entry);
    }

    JudgeEndpointConfig cfg_;
    AuditLog* audit_;
};

}  // namespace markaudit

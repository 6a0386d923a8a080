// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "error.hpp"
#include "normalizer.hpp"
#include "parallel.hpp"
#include "refine_prompt.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cstdlib>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace cxreval {

struct RefineEndpointConfig {
    // e.g. "https://api.openai.com/v1"; "/chat/completions" is appended.
    std::string base_url = "http://127.0.0.1:8000/v1";
    std::string model = "gpt-4";
    double timeout_seconds = 60.0;
    // Name of the environment variable holding the bearer token.
    std::string token_env = "OPENAI_API_KEY";
    bool with_qa = false;
    unsigned max_in_flight = 4;
};

struct QaPair {
    std::string question;
    std::string answer;

    bool operator==(const QaPair&) const = default;
};

struct RefinedReport {
    std::string standard_report;
    std::string conclusion;
    std::string recommendation;
    std::vector<QaPair> qa_pairs;
    // Invariant violations in the returned text; they do not fail the call.
    std::vector<std::string> warnings;
};

inline std::string build_refine_prompt(bool with_qa) {
    std::string p = kRefinePrompt;
    if (with_qa) {
        p += "\n\n";
        p += kQaPrompt;
    }
    return p;
}

/// Chat-completion request body. Temperature is pinned to 0.
inline nlohmann::json build_refine_request(std::string_view report_text,
                                           const RefineEndpointConfig& cfg) {
    std::string content = build_refine_prompt(cfg.with_qa);
    content += "\n\n";
    content += report_text;
    return {{"model", cfg.model},
            {"temperature", 0},
            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})}};
}

namespace detail {

inline std::string strip_code_fence(std::string_view s) {
    s = trim(s);
    if (s.substr(0, 3) == "```") {
        auto nl = s.find('\n');
        s = nl == std::string_view::npos ? std::string_view{} : s.substr(nl + 1);
        auto end = s.rfind("```");
        if (end != std::string_view::npos) s = s.substr(0, end);
    }
    return std::string(trim(s));
}

inline std::string required_key(const nlohmann::json& payload, std::initializer_list<const char*> keys) {
    for (const char* k : keys) {
        auto it = payload.find(k);
        if (it == payload.end()) continue;
        if (!it->is_string())
            throw Error(ErrorKind::SchemaError, std::string("key '") + k + "' is not a string");
        return it->get<std::string>();
    }
    throw Error(ErrorKind::SchemaError, std::string("missing key '") + *keys.begin() + "'");
}

} // namespace detail

/// Extracts the refinement payload from a response body. The body may be a
/// chat-completion envelope (payload in choices[0].message.content, possibly
/// fenced) or the payload object itself.
inline RefinedReport parse_refine_response(std::string_view body, bool with_qa,
                                           const RefinementRules& rules = {}) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error&) {
        throw Error(ErrorKind::SchemaError, "response body is not JSON");
    }
    nlohmann::json payload = doc;
    if (doc.is_object() && doc.contains("choices")) {
        try {
            auto content = doc.at("choices").at(0).at("message").at("content").get<std::string>();
            payload = nlohmann::json::parse(detail::strip_code_fence(content));
        } catch (const nlohmann::json::parse_error&) {
            throw Error(ErrorKind::SchemaError, "message content is not JSON");
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::SchemaError, std::string("malformed chat completion: ") + e.what());
        }
    }
    if (!payload.is_object()) throw Error(ErrorKind::SchemaError, "payload is not a JSON object");

    RefinedReport out;
    out.standard_report = detail::required_key(payload, {"standard_report", "standard report"});
    out.conclusion = detail::required_key(payload, {"conclusion"});
    out.recommendation = detail::required_key(payload, {"recommendation"});
    if (with_qa) {
        for (int i = 1; i <= 2; ++i) {
            auto q = "question" + std::to_string(i);
            auto a = "answer" + std::to_string(i);
            out.qa_pairs.push_back({detail::required_key(payload, {q.c_str()}),
                                    detail::required_key(payload, {a.c_str()})});
        }
    }
    for (const auto& [name, text] : {std::pair{"standard_report", &out.standard_report},
                                     std::pair{"conclusion", &out.conclusion}}) {
        for (const auto& w : rules.forbidden_temporal_words)
            if (contains_phrase(*text, w))
                out.warnings.push_back(std::string(name) + " contains forbidden word '" + w + "'");
    }
    return out;
}

namespace detail {

struct SplitUrl {
    std::string scheme_host_port;
    std::string path;
};

inline SplitUrl split_url(std::string_view url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos)
        throw Error(ErrorKind::InvalidConfig, "base URL needs a scheme: " + std::string(url));
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string_view::npos) return {std::string(url), ""};
    std::string path(url.substr(path_start));
    while (!path.empty() && path.back() == '/') path.pop_back();
    return {std::string(url.substr(0, path_start)), path};
}

} // namespace detail

/// Sends one report to a chat-completion endpoint and parses the result.
inline RefinedReport llm_refine(const StructuredReport& report, const RefineEndpointConfig& cfg) {
    auto url = detail::split_url(cfg.base_url);
    httplib::Client client(url.scheme_host_port);
    if (!client.is_valid())
        throw Error(ErrorKind::InvalidConfig, "unsupported base URL: " + cfg.base_url);
    const auto secs = static_cast<time_t>(cfg.timeout_seconds);
    const auto usecs = static_cast<time_t>((cfg.timeout_seconds - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    httplib::Headers headers;
    if (!cfg.token_env.empty()) {
        if (const char* token = std::getenv(cfg.token_env.c_str()); token && *token)
            headers.emplace("Authorization", std::string("Bearer ") + token);
    }
    const auto text = report.raw.empty() ? render_report(report) : report.raw;
    const auto body = build_refine_request(text, cfg).dump();
    auto res = client.Post(url.path + "/chat/completions", headers, body, "application/json");
    if (!res)
        throw Error(ErrorKind::TransportError,
                    "request to " + cfg.base_url + " failed: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
        throw Error(ErrorKind::BadStatus, "HTTP " + std::to_string(res->status) + ": " +
                                              res->body.substr(0, 200));
    return parse_refine_response(res->body, cfg.with_qa);
}

/// Result of one report in a batch: either a refined report or the error.
struct RefineOutcome {
    std::optional<RefinedReport> report;
    std::optional<Error> error;
};

/// Refines reports concurrently with at most cfg.max_in_flight requests open.
inline std::vector<RefineOutcome> llm_refine_batch(const std::vector<StructuredReport>& reports,
                                                   const RefineEndpointConfig& cfg) {
    std::vector<RefineOutcome> out(reports.size());
    parallel_for(reports.size(), std::max(1u, cfg.max_in_flight), [&](std::size_t i) {
        try {
            out[i].report = llm_refine(reports[i], cfg);
        } catch (const Error& e) {
            out[i].error = e;
        }
    });
    return out;
}

} // namespace cxreval

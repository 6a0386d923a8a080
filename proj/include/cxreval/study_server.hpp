// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "study.hpp"

#include <httplib.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>

namespace cxreval {

struct ServerConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    // Directory holding the rater UI bundle (index.html, assets/). Optional.
    std::string ui_dir;
    // Base directory for relative image paths in the session.
    std::string image_dir = ".";
};

/// HTTP front end of a reader study. The session is immutable; ratings go
/// through the RatingStore's single append path.
class StudyServer {
public:
    StudyServer(const StudySession& session, RatingStore& store, ServerConfig config)
        : session_(session), store_(store), config_(std::move(config)) {
        for (const auto& item : session_.items) images_.emplace(item.image_token, item.image_ref);
        routes();
    }

    /// Binds and serves until stop(). Returns false if binding fails.
    bool listen() { return server_.listen(config_.host, config_.port); }

    /// Binds to an ephemeral port; returns it (or -1).
    int bind_any_port() { return server_.bind_to_any_port(config_.host); }
    bool listen_after_bind() { return server_.listen_after_bind(); }

    void stop() { server_.stop(); }
    void wait_until_ready() { server_.wait_until_ready(); }

private:
    static void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static int status_for(ErrorKind kind) {
        switch (kind) {
        case ErrorKind::UnknownRater: return 404;
        case ErrorKind::PositionOutOfRange:
        case ErrorKind::BadGrade: return 400;
        default: return 500;
        }
    }

    static void send_error(httplib::Response& res, const Error& e) {
        send_json(res, status_for(e.kind()),
                  {{"error", std::string(to_string(e.kind()))}, {"message", e.what()}});
    }

    static bool parse_position(const std::string& s, std::size_t& out) {
        if (s.empty() || s.size() > 9) return false;
        for (char c : s)
            if (c < '0' || c > '9') return false;
        out = std::stoul(s);
        return true;
    }

    static std::string mime_for(const std::filesystem::path& p) {
        auto ext = to_lower(p.extension().string());
        if (ext == ".html") return "text/html";
        if (ext == ".js") return "application/javascript";
        if (ext == ".css") return "text/css";
        if (ext == ".png") return "image/png";
        if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
        if (ext == ".svg") return "image/svg+xml";
        if (ext == ".json") return "application/json";
        return "application/octet-stream";
    }

    static bool send_file(httplib::Response& res, const std::filesystem::path& p,
                          const std::string& mime) {
        std::ifstream in(p, std::ios::binary);
        if (!in) return false;
        std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        res.set_content(std::move(data), mime);
        return true;
    }

    void routes() {
        server_.Get("/api/session", [this](const httplib::Request&, httplib::Response& res) {
            nlohmann::json progress = nlohmann::json::object();
            for (const auto& r : session_.raters) progress[r] = 0;
            for (const auto& [key, rating] : effective_ratings(store_.ratings()))
                progress[key.first] = progress[key.first].get<std::size_t>() + 1;
            send_json(res, 200,
                      {{"session_id", session_.session_id},
                       {"total_items", session_.items.size()},
                       {"raters", session_.raters},
                       {"progress", progress}});
        });

        server_.Get("/api/item", [this](const httplib::Request& req, httplib::Response& res) {
            std::size_t pos = 0;
            if (!req.has_param("rater") || !parse_position(req.get_param_value("pos"), pos)) {
                send_json(res, 400, {{"error", "BadRequest"}, {"message", "need rater and pos"}});
                return;
            }
            try {
                send_json(res, 200, to_json(present_item(session_, req.get_param_value("rater"), pos)));
            } catch (const Error& e) {
                send_error(res, e);
            }
        });

        server_.Post("/api/rating", [this](const httplib::Request& req, httplib::Response& res) {
            nlohmann::json body;
            try {
                body = nlohmann::json::parse(req.body);
            } catch (const nlohmann::json::parse_error&) {
                send_json(res, 400, {{"error", "BadRequest"}, {"message", "body is not JSON"}});
                return;
            }
            if (!body.is_object() || !body.contains("rater") || !body["rater"].is_string() ||
                !body.contains("pos") || !body["pos"].is_number_unsigned() ||
                !body.contains("grade") || !body["grade"].is_string()) {
                send_json(res, 400, {{"error", "BadRequest"},
                                     {"message", "body needs rater (string), pos (integer), grade"}});
                return;
            }
            try {
                auto r = store_.record(body["rater"].get<std::string>(),
                                       body["pos"].get<std::size_t>(),
                                       body["grade"].get<std::string>());
                send_json(res, 200, {{"seq", r.seq}, {"pos", r.position},
                                     {"grade", std::string(to_string(r.grade))}});
            } catch (const Error& e) {
                send_error(res, e);
            }
        });

        server_.Get("/api/export", [this](const httplib::Request&, httplib::Response& res) {
            std::string out;
            for (const auto& r : store_.ratings()) out += to_json(r).dump() + "\n";
            res.set_content(out, "application/x-ndjson");
        });

        server_.Get("/images/([0-9a-f]+\\.img)", [this](const httplib::Request& req,
                                                        httplib::Response& res) {
            auto it = images_.find(req.matches[1].str());
            if (it == images_.end()) {
                res.status = 404;
                return;
            }
            std::filesystem::path p(it->second);
            if (p.is_relative()) p = std::filesystem::path(config_.image_dir) / p;
            if (!send_file(res, p, mime_for(p))) res.status = 404;
        });

        server_.Get("/", [this](const httplib::Request&, httplib::Response& res) {
            if (!config_.ui_dir.empty() &&
                send_file(res, std::filesystem::path(config_.ui_dir) / "index.html", "text/html"))
                return;
            res.set_content("<!doctype html><title>Reader study</title>"
                            "<p>The rater UI bundle is not installed; pass --ui-dir.</p>",
                            "text/html");
        });

        server_.Get("/assets/(.+)", [this](const httplib::Request& req, httplib::Response& res) {
            if (config_.ui_dir.empty()) {
                res.status = 404;
                return;
            }
            std::filesystem::path rel(req.matches[1].str());
            for (const auto& part : rel)
                if (part == "..") {
                    res.status = 400;
                    return;
                }
            auto p = std::filesystem::path(config_.ui_dir) / "assets" / rel;
            if (!send_file(res, p, mime_for(p))) res.status = 404;
        });
    }

    const StudySession& session_;
    RatingStore& store_;
    ServerConfig config_;
    std::unordered_map<std::string, std::string> images_;
    httplib::Server server_;
};

} // namespace cxreval

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "error.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace cxreval {

inline constexpr const char* kToolVersion = "0.3.0";

inline std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error(ErrorKind::Io, "SHA-256 failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open file", {path});
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string sha256_file(const std::string& path) { return sha256_hex(read_file(path)); }

/// Provenance record written next to every output artifact.
struct RunManifest {
    std::vector<std::string> command_line;
    nlohmann::json config = nlohmann::json::object();
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, std::string>> inputs;   // path, sha256
    std::vector<std::pair<std::string, std::string>> outputs;  // path, sha256
    std::string started_at;
    std::string finished_at;

    void add_input(const std::string& path) { inputs.emplace_back(path, sha256_file(path)); }
    void add_output(const std::string& path) { outputs.emplace_back(path, sha256_file(path)); }
};

inline nlohmann::json to_json(const RunManifest& m) {
    auto files = [](const auto& list) {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& [path, digest] : list) out.push_back({{"path", path}, {"sha256", digest}});
        return out;
    };
    return {{"command_line", m.command_line}, {"config", m.config},
            {"seed", m.seed},                 {"inputs", files(m.inputs)},
            {"outputs", files(m.outputs)},    {"tool_version", kToolVersion},
            {"started_at", m.started_at},     {"finished_at", m.finished_at}};
}

} // namespace cxreval

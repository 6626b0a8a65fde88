// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace wheatgs {

inline constexpr std::string_view tool_version = "0.1.0";

/// Lowercase hex SHA-256 of a file's bytes.
[[nodiscard]] std::string sha256_file(const std::filesystem::path &path);
[[nodiscard]] std::string sha256_bytes(std::string_view bytes);

/// Reproducibility record written next to every CLI output.
struct RunManifest {
    std::string subcommand;
    nlohmann::json config = nlohmann::json::object();
    std::uint64_t rng_seed = 0;
    std::map<std::string, std::string> input_hashes; // path -> sha256
    std::vector<std::string> outputs;
    nlohmann::json metadata = nlohmann::json::object(); // run notes (warnings, counts)
    std::string version{tool_version};
    unsigned threads = 0;
    double wall_time_s = 0.0;

    /// Hashes a file input; directories are hashed file by file in sorted order.
    void add_input(const std::filesystem::path &path);

    [[nodiscard]] nlohmann::json to_json() const;
    void write(const std::filesystem::path &path) const;
};

} // namespace wheatgs

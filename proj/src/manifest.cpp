// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#include "wheatgs/manifest.hpp"

#include "wheatgs/error.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <fstream>
#include <memory>

namespace wheatgs {

namespace {

class Sha256 {
  public:
    Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
            throw InvariantError("SHA-256 initialisation failed");
        }
    }

    void update(const char *data, std::size_t size) {
        if (EVP_DigestUpdate(ctx_.get(), data, size) != 1) {
            throw InvariantError("SHA-256 update failed");
        }
    }

    std::string hex() {
        std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx_.get(), digest.data(), &len) != 1) {
            throw InvariantError("SHA-256 finalisation failed");
        }
        static constexpr char digits[] = "0123456789abcdef";
        std::string out;
        for (unsigned int i = 0; i < len; ++i) {
            out.push_back(digits[digest[i] >> 4U]);
            out.push_back(digits[digest[i] & 0xfU]);
        }
        return out;
    }

  private:
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

} // namespace

std::string sha256_bytes(std::string_view bytes) {
    Sha256 h;
    h.update(bytes.data(), bytes.size());
    return h.hex();
}

std::string sha256_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    Sha256 h;
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    return h.hex();
}

void RunManifest::add_input(const std::filesystem::path &path) {
    namespace fs = std::filesystem;
    if (fs::is_directory(path)) {
        std::vector<fs::path> files;
        for (const auto &entry : fs::recursive_directory_iterator(path)) {
            if (entry.is_regular_file()) {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
        for (const auto &f : files) {
            input_hashes[f.generic_string()] = sha256_file(f);
        }
        return;
    }
    input_hashes[path.generic_string()] = sha256_file(path);
}

nlohmann::json RunManifest::to_json() const {
    nlohmann::json j;
    j["subcommand"] = subcommand;
    j["config"] = config;
    j["rng_seed"] = rng_seed;
    j["input_hashes"] = input_hashes;
    j["outputs"] = outputs;
    j["metadata"] = metadata;
    j["tool_version"] = version;
    j["threads"] = threads;
    j["wall_time_s"] = wall_time_s;
    return j;
}

void RunManifest::write(const std::filesystem::path &path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << to_json().dump(2) << '\n';
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

} // namespace wheatgs

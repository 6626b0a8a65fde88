// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#include "command.hpp"

#include "wheatgs/error.hpp"
#include "wheatgs/parallel.hpp"

#include <chrono>
#include <fstream>

namespace wheatgs::cli {

namespace {

bool compatible(const nlohmann::json &a, const nlohmann::json &b) {
    if (a.is_number() && b.is_number()) {
        return !(a.is_number_integer() && b.is_number_float());
    }
    return a.type() == b.type();
}

} // namespace

void overlay_config(nlohmann::json &base, const nlohmann::json &overrides, const std::string &context) {
    if (!overrides.is_object()) {
        throw InputError(context + ": config must be a JSON object");
    }
    for (const auto &[key, value] : overrides.items()) {
        if (!base.contains(key)) {
            throw InputError(context + ": unknown config key '" + key + "'");
        }
        if (!compatible(value, base[key])) {
            throw InputError(context + ": config key '" + key + "' has the wrong type");
        }
        if (value.is_object()) {
            overlay_config(base[key], value, context + "." + key);
        } else {
            base[key] = value;
        }
    }
}

nlohmann::json read_json_file(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception &e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_json_file(const nlohmann::json &j, const fs::path &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << j.dump(2) << '\n';
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

void check_outputs(const RunManifest &manifest, const std::vector<fs::path> &outputs) {
    for (const auto &out : outputs) {
        const auto o = fs::weakly_canonical(out);
        for (const auto &[input, hash] : manifest.input_hashes) {
            if (fs::weakly_canonical(input) == o) {
                throw InputError("output " + out.string() + " would overwrite an input");
            }
        }
    }
}

void Command::attach(CLI::App &parent) {
    app_ = parent.add_subcommand(name_, description_);
    app_->add_option("--config", config_path_, "JSON config file; flags take precedence")->check(CLI::ExistingFile);
    app_->add_option("--manifest", manifest_path_, "where to write the run manifest");
    add_options(*app_);
}

void Command::execute() {
    const auto start = std::chrono::steady_clock::now();
    nlohmann::json config = defaults();
    if (config_path_) {
        overlay_config(config, read_json_file(*config_path_), *config_path_);
    }
    overlay_config(config, flag_overrides(), "command line");

    RunManifest manifest;
    manifest.subcommand = name_;
    manifest.threads = thread_count();
    if (config_path_) {
        manifest.add_input(*config_path_);
    }
    run(config, manifest);
    manifest.config = config;
    manifest.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const fs::path path = manifest_path_ ? fs::path(*manifest_path_) : default_manifest_path();
    check_outputs(manifest, {path});
    manifest.write(path);
}

std::vector<std::unique_ptr<Command>> make_commands() {
    std::vector<std::unique_ptr<Command>> commands;
    commands.push_back(make_synth());
    commands.push_back(make_render());
    commands.push_back(make_segment());
    commands.push_back(make_traits());
    commands.push_back(make_align());
    commands.push_back(make_evaluate());
    return commands;
}

} // namespace wheatgs::cli

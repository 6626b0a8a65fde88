// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wheatgs/manifest.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace wheatgs::cli {

namespace fs = std::filesystem;

/// One subcommand: owns its option storage and runs against a manifest that
/// it fills with config, inputs and outputs.
class Command {
  public:
    virtual ~Command() = default;

    void attach(CLI::App &parent);
    [[nodiscard]] CLI::App *app() const { return app_; }
    /// Runs the command and writes its manifest.
    void execute();

  protected:
    Command(std::string name, std::string description)
        : name_(std::move(name)), description_(std::move(description)) {}

    virtual void add_options(CLI::App &app) = 0;
    /// Default config values as JSON; a --config file and flags are overlaid on it.
    [[nodiscard]] virtual nlohmann::json defaults() const = 0;
    /// Flag values the user actually passed, as a JSON object of config keys.
    [[nodiscard]] virtual nlohmann::json flag_overrides() const = 0;
    virtual void run(const nlohmann::json &config, RunManifest &manifest) = 0;
    /// Manifest location when --manifest is not given.
    [[nodiscard]] virtual fs::path default_manifest_path() const = 0;

  private:
    std::string name_;
    std::string description_;
    CLI::App *app_ = nullptr;
    std::optional<std::string> config_path_;
    std::optional<std::string> manifest_path_;
};

[[nodiscard]] std::vector<std::unique_ptr<Command>> make_commands();

/// Overlays keys of `overrides` onto `base`, recursing into nested objects.
/// Every key must already exist in `base` with a compatible JSON type;
/// anything else is an InputError.
void overlay_config(nlohmann::json &base, const nlohmann::json &overrides, const std::string &context);
[[nodiscard]] nlohmann::json read_json_file(const fs::path &path);
void write_json_file(const nlohmann::json &j, const fs::path &path);

/// Sets `j[key]` when the optional holds a value.
template <typename T>
void set_if(nlohmann::json &j, const char *key, const std::optional<T> &value) {
    if (value) {
        j[key] = *value;
    }
}

/// Rejects outputs that would overwrite one of the run's inputs.
void check_outputs(const RunManifest &manifest, const std::vector<fs::path> &outputs);

std::unique_ptr<Command> make_synth();
std::unique_ptr<Command> make_render();
std::unique_ptr<Command> make_segment();
std::unique_ptr<Command> make_traits();
std::unique_ptr<Command> make_align();
std::unique_ptr<Command> make_evaluate();

} // namespace wheatgs::cli

#include "wheatgs/traits.hpp"

namespace wheatgs::cli {

[[nodiscard]] nlohmann::json traits_config_to_json(const TraitsConfig &config);
[[nodiscard]] TraitsConfig traits_config_from_json(const nlohmann::json &j);

} // namespace wheatgs::cli

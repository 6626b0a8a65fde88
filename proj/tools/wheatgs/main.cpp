// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#include "command.hpp"

#include "wheatgs/error.hpp"
#include "wheatgs/parallel.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <iostream>

namespace {

constexpr int exit_input_error = 1;
constexpr int exit_invariant_error = 2;

void print_usage(const CLI::App &root, const std::vector<std::unique_ptr<wheatgs::cli::Command>> &commands) {
    for (const auto &c : commands) {
        if (c->app()->parsed()) {
            std::cerr << c->app()->help();
            return;
        }
    }
    std::cerr << root.help();
}

} // namespace

int main(int argc, char **argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("wheatgs"));

    CLI::App app{"wheatgs: instance segmentation and trait extraction on Gaussian splatting scenes"};
    app.set_version_flag("--version", std::string(wheatgs::tool_version));
    app.require_subcommand(1);
    app.fallthrough();
    unsigned threads = 0;
    std::string log_level = "info";
    app.add_option("--threads", threads, "worker threads (0: hardware concurrency)");
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

    auto commands = wheatgs::cli::make_commands();
    for (auto &c : commands) {
        c->attach(app);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp &) {
        std::cout << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion &) {
        std::cout << wheatgs::tool_version << '\n';
        return 0;
    } catch (const CLI::ParseError &e) {
        std::cerr << "error: " << e.what() << "\n\n";
        print_usage(app, commands);
        return exit_input_error;
    }

    spdlog::set_level(spdlog::level::from_str(log_level));
    wheatgs::set_thread_count(threads);
    try {
        for (auto &c : commands) {
            if (c->app()->parsed()) {
                c->execute();
            }
        }
    } catch (const wheatgs::InputError &e) {
        spdlog::error("{}", e.what());
        return exit_input_error;
    } catch (const wheatgs::InvariantError &e) {
        spdlog::critical("internal invariant violated: {}", e.what());
        return exit_invariant_error;
    } catch (const nlohmann::json::exception &e) {
        spdlog::error("config: {}", e.what());
        return exit_input_error;
    } catch (const std::filesystem::filesystem_error &e) {
        spdlog::error("{}", e.what());
        return exit_input_error;
    } catch (const std::exception &e) {
        spdlog::critical("unexpected failure: {}", e.what());
        return exit_invariant_error;
    }
    return 0;
}

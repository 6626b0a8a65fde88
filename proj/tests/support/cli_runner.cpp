// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#include "cli_runner.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <sys/wait.h>

namespace wheatgs::testing {

namespace {

std::string quote(const std::string &arg) {
    std::string out = "'";
    for (const char c : arg) {
        if (c == '\'') {
            out += "'\\''";
        } else {
            out += c;
        }
    }
    return out + "'";
}

} // namespace

CliResult run_cli(const std::string &executable, const std::vector<std::string> &args) {
    std::string cmd = quote(executable);
    for (const auto &a : args) {
        cmd += ' ' + quote(a);
    }
    cmd += " 2>&1";
    FILE *pipe = popen(cmd.c_str(), "r");
    if (pipe == nullptr) {
        throw std::runtime_error("cannot start " + executable);
    }
    CliResult r;
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) {
        r.output.append(buf.data(), n);
    }
    const int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

CliResult run_pipeline(const std::string &executable, const std::filesystem::path &dir, int threads,
                       const std::vector<std::string> &synth_args) {
    const auto p = [&](const char *name) { return (dir / name).string(); };
    const std::string t = std::to_string(threads);
    std::vector<std::vector<std::string>> steps;

    std::vector<std::string> synth = {"--threads", t, "synth", "--out-dir", p("synth")};
    synth.insert(synth.end(), synth_args.begin(), synth_args.end());
    steps.push_back(synth);
    const std::string scene = p("synth/scene.ply");
    const std::string cameras = p("synth/cameras.json");
    steps.push_back({"--threads", t, "segment", "--scene", scene, "--cameras", cameras, "--masks", p("synth/masks"),
                     "--out-ply", p("segmented.ply"), "--out-instances", p("instances.json")});
    steps.push_back({"--threads", t, "render", "--scene", scene, "--cameras", cameras, "--view-id", "view0",
                     "--mode", "rgb", "--out", p("view.png"), "--out-pfm", p("view.pfm")});
    steps.push_back({"--threads", t, "render", "--scene", p("segmented.ply"), "--cameras", cameras, "--view-id",
                     "view0", "--mode", "label", "--out", p("labels.png")});
    steps.push_back({"--threads", t, "traits", "--scene", p("segmented.ply"), "--instances", p("instances.json"),
                     "--out-csv", p("traits.csv")});
    steps.push_back({"--threads", t, "align", "--source", p("synth/reference.ply"), "--target",
                     p("synth/reference.ply"), "--out-transform", p("transform.json")});
    steps.push_back({"--threads", t, "evaluate", "--scene", p("segmented.ply"), "--instances", p("instances.json"),
                     "--traits-csv", p("traits.csv"), "--truth", p("synth/truth.json"), "--gt-masks",
                     p("synth/gt_masks"), "--cameras", cameras, "--outlier", "mcd", "--out-report",
                     p("report.json")});
    steps.push_back({"--threads", t, "evaluate", "--scene", p("segmented.ply"), "--instances", p("instances.json"),
                     "--reference", p("synth/reference.ply"), "--transform", p("transform.json"), "--out-report",
                     p("report_reference.json")});
    CliResult last;
    for (const auto &args : steps) {
        last = run_cli(executable, args);
        if (last.exit_code != 0) {
            last.output = "step '" + args[2] + "' failed:\n" + last.output;
            return last;
        }
    }
    return last;
}

std::vector<std::string> pipeline_primary_outputs() {
    return {"synth/scene.ply", "synth/cameras.json", "synth/truth.json", "synth/reference.ply", "segmented.ply",
            "instances.json",  "view.png",           "view.pfm",         "labels.png",          "traits.csv",
            "transform.json",  "report.json",        "report.csv",       "report_reference.json", "report_reference.csv"};
}

std::string read_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot read " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace wheatgs::testing

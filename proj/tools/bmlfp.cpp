#include <algorithm>
#include <filesystem>
#include <future>
#include <iostream>
#include <vector>

#include "CLI11.hpp"

#include "bml/scenario.hpp"

namespace fs = std::filesystem;
namespace sc = bml::scenario;

namespace {

int run_batch(const fs::path& dir, const fs::path& out, const sc::Overrides& ov) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        std::cerr << "no scenario files in '" << dir.string() << "'\n";
        return sc::kExitError;
    }

    std::vector<std::future<std::pair<int, std::string>>> jobs;
    for (const auto& file : files) {
        jobs.push_back(std::async(std::launch::async, [file, out, ov] {
            std::ostringstream log;
            const int code = sc::run_scenario_file(file, out / file.stem(), ov, &log);
            return std::pair{code, log.str()};
        }));
    }
    bool any_error = false;
    bool any_findings = false;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const auto [code, log] = jobs[i].get();
        std::cerr << log;
        std::cout << files[i].filename().string() << ": exit " << code << "\n";
        any_error = any_error || code == sc::kExitError;
        any_findings = any_findings || code == sc::kExitFindings;
    }
    return any_error ? sc::kExitError : any_findings ? sc::kExitFindings : sc::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Common fixed points of expansive map pairs on b-metric-like spaces"};
    std::string scenario;
    std::string batch;
    std::string out = "out";
    std::string command;
    std::uint64_t seed = 0;

    auto* scenario_opt = app.add_option("--scenario", scenario, "Scenario JSON file")->check(CLI::ExistingFile);
    auto* batch_opt = app.add_option("--batch", batch, "Directory of scenario files, run concurrently")
                          ->check(CLI::ExistingDirectory);
    scenario_opt->excludes(batch_opt);
    app.add_option("--out", out, "Output directory for report.json and trace.csv");
    auto* command_opt = app.add_option("--command", command, "Override run.command")
                            ->check(CLI::IsMember({"solve", "audit", "axioms", "oracle", "lemmas"}));
    auto* seed_opt = app.add_option("--seed", seed, "Override run.seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : sc::kExitError;
    }
    if (scenario.empty() && batch.empty()) {
        std::cerr << "one of --scenario or --batch is required\n" << app.help();
        return sc::kExitError;
    }

    sc::Overrides ov;
    if (command_opt->count()) ov.command = command;
    if (seed_opt->count()) ov.seed = seed;

    if (!batch.empty()) return run_batch(batch, out, ov);
    const int code = sc::run_scenario_file(scenario, out, ov, &std::cerr);
    std::cout << "exit " << code << " report " << (fs::path(out) / "report.json").string() << "\n";
    return code;
}

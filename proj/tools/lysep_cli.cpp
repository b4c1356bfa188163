#include <cstdio>
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "lysep/experiment.hpp"

namespace {

lysep::ExperimentConfig resolved_config(const std::string& path) {
    lysep::ExperimentConfig cfg = lysep::load_config(path);
    if (const char* dir = std::getenv("LYSEP_OUTPUT_DIR"); dir && *dir) cfg.output_dir = dir;
    cfg.validate();
    return cfg;
}

int cmd_run(const std::string& path) {
    const lysep::ExperimentConfig cfg = resolved_config(path);
    const lysep::ExperimentResult res = lysep::run_experiment(cfg);
    int failed = 0;
    for (const auto& r : res.runs) {
        std::printf("%-5s seed %llu: J=%.3e  error=%.3e%s%s\n", r.model.c_str(),
                    static_cast<unsigned long long>(r.seed), r.J, r.error, r.failed ? "  FAILED: " : "",
                    r.failed ? r.message.c_str() : "");
        if (r.model == "lysep" && !r.failed && !r.bound_ok_everywhere)
            std::printf("      consistency bound violated at a logged iteration\n");
        failed += r.failed ? 1 : 0;
    }
    std::printf("summary: %s\n", res.summary_path.c_str());
    return failed == 0 ? 0 : 3;
}

int cmd_check(const std::string& path) {
    const lysep::ExperimentConfig cfg = resolved_config(path);
    std::cout << lysep::describe_config(cfg);
    return 0;
}

int cmd_report(const std::string& dir) {
    std::cout << lysep::rebuild_summary(dir);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Layer-separated PINN training experiments"};
    app.require_subcommand(1);
    std::string config, dir;
    CLI::App* run = app.add_subcommand("run", "Run an experiment");
    run->add_option("--config", config, "Config file")->required()->check(CLI::ExistingFile);
    CLI::App* check = app.add_subcommand("check", "Validate a config without running");
    check->add_option("--config", config, "Config file")->required()->check(CLI::ExistingFile);
    CLI::App* report = app.add_subcommand("report", "Rebuild summary.csv from trajectory files");
    report->add_option("--dir", dir, "Output directory")->required()->check(CLI::ExistingDirectory);
    CLI11_PARSE(app, argc, argv);
    try {
        if (*run) return cmd_run(config);
        if (*check) return cmd_check(config);
        if (*report) return cmd_report(dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}

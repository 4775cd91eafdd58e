// Benchmark CLI: grid experiments, interval comparisons, the acceptance
// suite, and dataset utilities.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "calib/acceptance.hpp"
#include "calib/errors.hpp"
#include "calib/harness.hpp"
#include "calib/synth.hpp"

namespace {

int cmd_run(const std::string& config_path) {
    calib::ExperimentConfig cfg = calib::ExperimentConfig::load(config_path);
    calib::ExperimentReport report = calib::run_experiment(cfg);
    calib::emit_report(report, cfg.output_dir);
    std::cout << "wrote " << cfg.output_dir << "/report.csv, report.json, pit_histograms.csv ("
              << report.rows.size() << " cells, " << report.failed_cells << " failed)\n";
    if (report.failed_cells > 0) {
        for (const auto& r : report.rows)
            if (!r.metrics)
                std::cerr << "cell failed: " << r.key.dataset << "/" << r.key.base << "/"
                          << r.key.score << "/" << r.key.interp << "/seed" << r.key.seed
                          << ": " << r.error << "\n";
        return 2;
    }
    return 0;
}

int cmd_intervals(const std::string& config_path, double level) {
    calib::ExperimentConfig cfg = calib::ExperimentConfig::load(config_path);
    auto rows = calib::run_interval_comparison(cfg, level);
    calib::emit_interval_comparison(rows, cfg.output_dir);
    std::cout << "wrote " << cfg.output_dir << "/intervals.csv, intervals_summary.csv ("
              << rows.size() << " rows)\n";
    return 0;
}

int cmd_check(const std::string& config_path) {
    std::string output_dir;
    if (!config_path.empty()) {
        calib::ExperimentConfig cfg = calib::ExperimentConfig::load(config_path);
        output_dir = cfg.output_dir;
    }
    auto results = calib::run_acceptance(std::cout);
    std::size_t failed = 0;
    for (const auto& r : results)
        if (!r.pass) ++failed;
    std::cout << (results.size() - failed) << "/" << results.size() << " criteria passed\n";
    if (!output_dir.empty()) {
        std::ofstream out(output_dir + "/acceptance.txt");
        for (const auto& r : results)
            out << (r.pass ? "PASS" : "FAIL") << " [" << r.id << "] " << r.name << ": "
                << r.detail << "\n";
    }
    return failed == 0 ? 0 : 2;
}

int cmd_datasets_list() {
    std::cout << "built-in synthetic generators (use as synth:<name>:<rows>[:<seed>]):\n";
    for (const auto& name : calib::synthetic_names()) std::cout << "  " << name << "\n";
    std::cout << "CSV datasets: numeric cells, comma separated, last column is the label;\n"
                 "a non-numeric first row is treated as a header.\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"conformal recalibration benchmark harness"};
    app.require_subcommand(1);

    std::string config_path;
    double level = 0.9;

    auto* run = app.add_subcommand("run", "run the experiment grid from a config file");
    run->add_option("--config", config_path, "flat key = value config file")->required();

    auto* intervals =
        app.add_subcommand("intervals", "compare conformal vs credible intervals");
    intervals->add_option("--config", config_path, "flat key = value config file")->required();
    intervals->add_option("--level", level, "confidence level (default 0.9)");

    auto* check = app.add_subcommand("check", "run the acceptance suite");
    check->add_option("--config", config_path,
                      "optional config; its output_dir receives acceptance.txt");

    auto* datasets = app.add_subcommand("datasets", "dataset utilities");
    auto* datasets_list = datasets->add_subcommand("list", "list built-in generators");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path);
        if (intervals->parsed()) return cmd_intervals(config_path, level);
        if (check->parsed()) return cmd_check(config_path);
        if (datasets->parsed() && datasets_list->parsed()) return cmd_datasets_list();
        std::cerr << "no subcommand\n";
        return 1;
    } catch (const calib::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const calib::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

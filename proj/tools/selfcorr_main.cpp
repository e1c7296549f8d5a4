#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "selfcorr/experiment.hpp"
#include "selfcorr/report.hpp"

namespace fs = std::filesystem;
using namespace selfcorr;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartialFailure = 2;
constexpr int kExitConfigError = 3;

int cmd_subsample(const std::string& config_path, const std::string& override_map) {
    ExperimentConfig config = ExperimentConfig::load(config_path);
    if (!override_map.empty()) config.override_map = override_map;

    const SubsampleManifest manifest = write_subsample(config);

    std::map<std::string, std::pair<int, int>> per_category;  // templates, examples
    for (const auto& t : manifest.templates) {
        per_category[t.category].first += 1;
        per_category[t.category].second += t.retained;
    }
    std::cout << "category                templates  examples\n";
    for (const auto& [cat, counts] : per_category) {
        std::cout << cat;
        for (std::size_t i = cat.size(); i < 24; ++i) std::cout << ' ';
        std::cout << counts.first << "  " << counts.second << "\n";
    }
    std::cout << "total examples: " << manifest.total_examples << " (seed "
              << manifest.params.seed << ", per-template " << manifest.params.min_per_template
              << ".." << manifest.params.max_per_template << ")\n";
    std::cout << "subset:   " << config.subset_path() << "\n";
    std::cout << "manifest: " << config.manifest_path() << " (digest " << manifest.digest()
              << ")\n";
    return kExitOk;
}

int cmd_run(const std::string& config_path) {
    ExperimentConfig config = ExperimentConfig::load(config_path);
    ExperimentRunner runner(config);
    const RunStats stats = runner.run();

    std::cout << "cells: " << stats.cells_total << " total, " << stats.cells_resumed
              << " resumed, " << stats.cells_run << " run, " << stats.cells_failed << " failed\n";
    std::cout << "records written: " << stats.records_written << " -> " << config.results_path()
              << "\n";
    for (const auto& [name, backend] : runner.backends()) {
        std::cout << "backend " << name << ": " << backend->calls_made() << " completions\n";
    }
    return stats.cells_failed == 0 ? kExitOk : kExitPartialFailure;
}

int cmd_report(const std::string& results_path, bool by_category, bool event_rf,
               std::string out_dir) {
    const ResultsData data = read_results(results_path);
    ReportOptions options;
    options.by_category = by_category;
    options.event_level_rf = event_rf;
    const MetricsReport report = build_report(data, options);

    std::string text = render_accuracy_table(report);
    text += "\n";
    text += render_feedback_table(report);
    if (by_category) {
        text += "\n";
        text += render_category_tables(report);
    }
    if (!report.flow_violations.empty()) {
        text += "\nFLOW VIOLATIONS:\n";
        for (const auto& v : report.flow_violations) text += "  " + v + "\n";
    }
    std::cout << text;

    if (out_dir.empty()) out_dir = fs::path(results_path).parent_path().string();
    fs::create_directories(out_dir);
    {
        std::ofstream txt(fs::path(out_dir) / "report.txt", std::ios::trunc);
        txt << text;
        std::ofstream json(fs::path(out_dir) / "report.json", std::ios::trunc);
        json << report_to_json(report).dump(2) << "\n";
    }
    std::cout << "report written to " << out_dir << "/report.{txt,json}\n";

    if (!report.complete) {
        std::cerr << "warning: results are incomplete for some (method, trial) cells\n";
        return kExitPartialFailure;
    }
    if (!report.flow_violations.empty()) return kExitPartialFailure;
    return kExitOk;
}

int cmd_validate(const std::string& config_path, bool check_dataset) {
    const ExperimentConfig config = ExperimentConfig::load(config_path);
    std::cout << "config ok: " << config.methods.size() << " methods, " << config.trials
              << " trials, digest " << config.digest() << "\n";

    for (const auto& [name, spec] : config.backends) {
        if (spec.type == BackendSpec::Type::Scripted) {
            if (!spec.scripted_inline) ScriptedModelSpec::load(spec.scripted_spec_path);
            std::cout << "backend " << name << ": scripted\n";
        } else {
            std::cout << "backend " << name << ": " << spec.model << " @ " << spec.base_url
                      << (spec.api_key_env.empty() ? "" : " (key from $" + spec.api_key_env + ")")
                      << "\n";
        }
    }

    if (check_dataset) {
        RoleOverrides overrides;
        const RoleOverrides* ov = nullptr;
        if (!config.override_map.empty()) {
            overrides = RoleOverrides::load(config.override_map);
            ov = &overrides;
        }
        const auto examples = load_bbq(config.dataset_path, config.categories, ov);
        std::map<std::string, int> per_category;
        for (const auto& ex : examples) per_category[ex.category] += 1;
        std::cout << "dataset ok: " << examples.size() << " ambiguous examples\n";
        for (const auto& [cat, n] : per_category) {
            std::cout << "  " << cat << ": " << n << "\n";
        }
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-correction debiasing evaluation for chat models"};
    app.require_subcommand(1);

    std::string config_path;
    std::string override_map;
    std::string results_path;
    std::string out_dir;
    bool by_category = false;
    bool event_rf = false;
    bool check_dataset = false;

    auto* subsample = app.add_subcommand("subsample", "Build the balanced dataset subset + manifest");
    subsample->add_option("-c,--config", config_path, "experiment config file")->required();
    subsample->add_option("--override-map", override_map,
                          "role-override file for records the heuristics cannot resolve");

    auto* run = app.add_subcommand("run", "Execute all (method x example x trial) cells, resuming");
    run->add_option("-c,--config", config_path, "experiment config file")->required();

    auto* report = app.add_subcommand("report", "Aggregate a results file into metric tables");
    report->add_option("results", results_path, "results.jsonl path")->required();
    report->add_flag("--by-category", by_category, "emit per-category sub-tables");
    report->add_flag("--rf-event-level", event_rf,
                     "use the event-level RF reading instead of the primed chain");
    report->add_option("--out", out_dir, "directory for report.txt/report.json");

    auto* validate = app.add_subcommand("validate", "Lint a config (and optionally the dataset)");
    validate->add_option("-c,--config", config_path, "experiment config file")->required();
    validate->add_flag("--dataset", check_dataset, "also load and lint the dataset");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfigError;
    }

    try {
        if (subsample->parsed()) return cmd_subsample(config_path, override_map);
        if (run->parsed()) return cmd_run(config_path);
        if (report->parsed()) return cmd_report(results_path, by_category, event_rf, out_dir);
        if (validate->parsed()) return cmd_validate(config_path, check_dataset);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitPartialFailure;
    }
    return kExitOk;
}

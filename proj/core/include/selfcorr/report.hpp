#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "selfcorr/experiment.hpp"
#include "selfcorr/metrics.hpp"

namespace selfcorr {

struct ReportOptions {
    bool by_category = false;
    /// Use the event-level RF reading (every refinement of a flagged
    /// incorrect response) instead of the primed-chain default.
    bool event_level_rf = false;
};

/// One method's metrics within one category scope, averaged over trials.
/// Metrics that were undefined in every trial stay unset and print as n/a.
struct ReportRow {
    MethodDescriptor method;
    std::string category;  // "all" for the pooled scope
    int trials_counted = 0;
    long examples_per_trial = 0;
    std::optional<double> accuracy;
    std::optional<double> diff_bias;
    std::optional<double> init_accuracy;
    std::optional<double> final_accuracy;
    std::optional<double> fb_precision;
    std::optional<double> fb_recall;
    std::optional<double> rf_score;
    bool complete = true;
};

struct MetricsReport {
    std::vector<ReportRow> pooled;
    std::vector<std::string> category_order;  // by No-CoT accuracy when available
    std::map<std::string, std::vector<ReportRow>> by_category;
    std::vector<std::string> flow_violations;  // empty on a healthy run
    bool complete = true;
};

MetricsReport build_report(const ResultsData& data, const ReportOptions& options = {});

/// Accuracy / diff-bias table over all methods (pooled categories).
std::string render_accuracy_table(const MetricsReport& report);
/// Init/final accuracy and FB/RF metrics for correction methods.
std::string render_feedback_table(const MetricsReport& report);
/// Per-category accuracy/diff-bias sub-tables.
std::string render_category_tables(const MetricsReport& report);

nlohmann::json report_to_json(const MetricsReport& report);

}  // namespace selfcorr

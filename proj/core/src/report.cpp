#include "selfcorr/report.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

namespace selfcorr {

namespace {

struct MethodData {
    MethodDescriptor method;
    // trial -> category -> data
    std::map<int, std::map<std::string, std::vector<Classification>>> outcomes;
    std::map<int, std::map<std::string, std::vector<const CorrectionTranscript*>>> transcripts;
};

std::optional<double> mean(const std::vector<double>& values) {
    if (values.empty()) return std::nullopt;
    double sum = 0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

std::string fmt(std::optional<double> v) {
    if (!v) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", *v);
    return buf;
}

std::string pad(const std::string& s, std::size_t width, bool left = false) {
    if (s.size() >= width) return s;
    const std::string fill(width - s.size(), ' ');
    return left ? s + fill : fill + s;
}

ReportRow build_row(const MethodData& data, const std::string& category, bool event_rf,
                    int expected_trials) {
    ReportRow row;
    row.method = data.method;
    row.category = category;

    std::vector<double> acc, db, init_acc, final_acc, fb_pre, fb_rec, rf;
    std::set<long> per_trial_n;

    std::set<int> trials;
    for (const auto& [t, _] : data.outcomes) trials.insert(t);
    for (const auto& [t, _] : data.transcripts) trials.insert(t);

    for (int trial : trials) {
        BiasCounts counts;
        BiasCounts init;
        std::vector<CorrectionTranscript> trs;

        auto oit = data.outcomes.find(trial);
        if (oit != data.outcomes.end()) {
            for (const auto& [cat, classifications] : oit->second) {
                if (category != "all" && cat != category) continue;
                for (auto c : classifications) counts.add(c);
            }
        }
        auto tit = data.transcripts.find(trial);
        if (tit != data.transcripts.end()) {
            for (const auto& [cat, list] : tit->second) {
                if (category != "all" && cat != category) continue;
                for (const auto* tr : list) {
                    if (tr->aborted || tr->rounds.empty()) continue;
                    counts.add(tr->final_classification());
                    init.add(tr->initial_classification());
                    trs.push_back(*tr);
                }
            }
        }
        if (counts.n_total == 0) continue;

        row.trials_counted += 1;
        per_trial_n.insert(counts.n_total);
        acc.push_back(accuracy(counts));
        db.push_back(diff_bias(counts));

        if (!trs.empty()) {
            init_acc.push_back(accuracy(init));
            final_acc.push_back(accuracy(counts));
            const auto matrices = tally_confusion(trs);
            if (auto v = fb_precision(matrices)) fb_pre.push_back(*v);
            if (auto v = fb_recall(matrices)) fb_rec.push_back(*v);
            const auto r = event_rf ? rf_score_event_level(trs) : rf_score(matrices);
            if (r) rf.push_back(*r);
        }
    }

    row.accuracy = mean(acc);
    row.diff_bias = mean(db);
    row.init_accuracy = mean(init_acc);
    row.final_accuracy = mean(final_acc);
    row.fb_precision = mean(fb_pre);
    row.fb_recall = mean(fb_rec);
    row.rf_score = mean(rf);
    row.examples_per_trial = per_trial_n.empty() ? 0 : *per_trial_n.rbegin();
    row.complete = row.trials_counted == expected_trials && per_trial_n.size() <= 1;
    return row;
}

}  // namespace

MetricsReport build_report(const ResultsData& data, const ReportOptions& options) {
    std::vector<std::string> method_order;
    std::map<std::string, MethodData> methods;
    std::set<std::string> categories;
    int max_trial = -1;

    auto method_slot = [&](const MethodDescriptor& m) -> MethodData& {
        const std::string key = m.key();
        auto it = methods.find(key);
        if (it == methods.end()) {
            method_order.push_back(key);
            it = methods.emplace(key, MethodData{m, {}, {}}).first;
        }
        return it->second;
    };

    for (const auto& o : data.outcomes) {
        method_slot(o.method).outcomes[o.trial_index][o.category].push_back(o.classification);
        categories.insert(o.category);
        max_trial = std::max(max_trial, o.trial_index);
    }
    for (const auto& tr : data.transcripts) {
        method_slot(tr.method).transcripts[tr.trial_index][tr.category].push_back(&tr);
        categories.insert(tr.category);
        max_trial = std::max(max_trial, tr.trial_index);
    }
    const int expected_trials = max_trial + 1;

    MetricsReport report;
    for (const auto& key : method_order) {
        ReportRow row = build_row(methods.at(key), "all", options.event_level_rf, expected_trials);
        if (!data.aborted_keys.empty()) {
            for (const auto& ak : data.aborted_keys) {
                if (ak.find("|" + key + "|") != std::string::npos) {
                    row.complete = false;
                    break;
                }
            }
        }
        report.complete = report.complete && row.complete;
        report.pooled.push_back(std::move(row));
    }

    // Per-category ordering follows No-CoT accuracy when a plain No-CoT run
    // is present, category name otherwise.
    std::vector<std::pair<double, std::string>> order;
    const MethodData* nocot = nullptr;
    for (const auto& key : method_order) {
        const auto& md = methods.at(key);
        if (md.method.kind == MethodKind::NoCoT && !md.method.debias) {
            nocot = &md;
            break;
        }
    }
    for (const auto& cat : categories) {
        double sort_key = 0.0;
        if (nocot) {
            ReportRow r = build_row(*nocot, cat, options.event_level_rf, expected_trials);
            sort_key = r.accuracy.value_or(0.0);
        }
        order.push_back({sort_key, cat});
    }
    std::sort(order.begin(), order.end());
    for (const auto& [_, cat] : order) report.category_order.push_back(cat);

    if (options.by_category) {
        for (const auto& cat : report.category_order) {
            for (const auto& key : method_order) {
                ReportRow row = build_row(methods.at(key), cat, options.event_level_rf, expected_trials);
                if (row.trials_counted == 0) row.complete = false;
                report.complete = report.complete && row.complete;
                report.by_category[cat].push_back(std::move(row));
            }
        }
    }

    // The conservation laws hold for any correct tally; surface violations
    // rather than failing, so damaged results files are still inspectable.
    for (const auto& key : method_order) {
        const auto& md = methods.at(key);
        for (const auto& [trial, by_cat] : md.transcripts) {
            std::vector<CorrectionTranscript> trs;
            for (const auto& [cat, list] : by_cat) {
                for (const auto* tr : list) {
                    if (!tr->aborted) trs.push_back(*tr);
                }
            }
            if (trs.empty()) continue;
            for (const auto& v : verify_flow(tally_confusion(trs))) {
                report.flow_violations.push_back(md.method.label() + " trial " +
                                                 std::to_string(trial) + ": " + v.describe());
            }
        }
    }
    return report;
}

std::string render_accuracy_table(const MetricsReport& report) {
    std::ostringstream out;
    out << pad("Method", 42, true) << "  " << pad("DP", 3) << "  " << pad("Accuracy", 9) << "  "
        << pad("Diff-bias", 9) << "  " << pad("N", 6) << "\n";
    out << std::string(42 + 2 + 3 + 2 + 9 + 2 + 9 + 2 + 6, '-') << "\n";
    for (const auto& row : report.pooled) {
        out << pad(row.method.label() + (row.complete ? "" : " (incomplete)"), 42, true) << "  "
            << pad(row.method.debias ? "yes" : "no", 3) << "  " << pad(fmt(row.accuracy), 9) << "  "
            << pad(fmt(row.diff_bias), 9) << "  " << pad(std::to_string(row.examples_per_trial), 6)
            << "\n";
    }
    return out.str();
}

std::string render_feedback_table(const MetricsReport& report) {
    std::ostringstream out;
    out << pad("Method", 42, true) << "  " << pad("DP", 3) << "  " << pad("Init Acc", 9) << "  "
        << pad("Final Acc", 9) << "  " << pad("FB Pre", 7) << "  " << pad("FB Rec", 7) << "  "
        << pad("RF Score", 8) << "\n";
    out << std::string(42 + 2 + 3 + 2 + 9 + 2 + 9 + 2 + 7 + 2 + 7 + 2 + 8, '-') << "\n";
    for (const auto& row : report.pooled) {
        if (!row.method.is_correction()) continue;
        out << pad(row.method.label() + (row.complete ? "" : " (incomplete)"), 42, true) << "  "
            << pad(row.method.debias ? "yes" : "no", 3) << "  " << pad(fmt(row.init_accuracy), 9)
            << "  " << pad(fmt(row.final_accuracy), 9) << "  " << pad(fmt(row.fb_precision), 7)
            << "  " << pad(fmt(row.fb_recall), 7) << "  " << pad(fmt(row.rf_score), 8) << "\n";
    }
    return out.str();
}

std::string render_category_tables(const MetricsReport& report) {
    std::ostringstream out;
    for (const auto& cat : report.category_order) {
        auto it = report.by_category.find(cat);
        if (it == report.by_category.end()) continue;
        out << "== " << cat << " ==\n";
        out << pad("Method", 42, true) << "  " << pad("DP", 3) << "  " << pad("Accuracy", 9) << "  "
            << pad("Diff-bias", 9) << "\n";
        for (const auto& row : it->second) {
            out << pad(row.method.label(), 42, true) << "  " << pad(row.method.debias ? "yes" : "no", 3)
                << "  " << pad(fmt(row.accuracy), 9) << "  " << pad(fmt(row.diff_bias), 9) << "\n";
        }
        out << "\n";
    }
    return out.str();
}

nlohmann::json report_to_json(const MetricsReport& report) {
    auto row_json = [](const ReportRow& row) {
        nlohmann::json j{{"method", row.method.to_json()},
                         {"label", row.method.label()},
                         {"category", row.category},
                         {"trials", row.trials_counted},
                         {"examples_per_trial", row.examples_per_trial},
                         {"complete", row.complete}};
        auto set = [&](const char* name, const std::optional<double>& v) {
            j[name] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
        };
        set("accuracy", row.accuracy);
        set("diff_bias", row.diff_bias);
        set("init_accuracy", row.init_accuracy);
        set("final_accuracy", row.final_accuracy);
        set("fb_precision", row.fb_precision);
        set("fb_recall", row.fb_recall);
        set("rf_score", row.rf_score);
        return j;
    };

    nlohmann::json pooled = nlohmann::json::array();
    for (const auto& row : report.pooled) pooled.push_back(row_json(row));
    nlohmann::json by_cat = nlohmann::json::object();
    for (const auto& [cat, rows] : report.by_category) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& row : rows) arr.push_back(row_json(row));
        by_cat[cat] = std::move(arr);
    }
    return nlohmann::json{{"pooled", pooled},
                          {"by_category", by_cat},
                          {"category_order", report.category_order},
                          {"flow_violations", report.flow_violations},
                          {"complete", report.complete}};
}

}  // namespace selfcorr

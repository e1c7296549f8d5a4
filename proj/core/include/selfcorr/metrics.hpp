#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "selfcorr/engine.hpp"

namespace selfcorr {

/// Final-answer tallies behind accuracy and diff-bias. Unparseable answers
/// count toward the total but toward neither bias direction.
struct BiasCounts {
    long n_total = 0;
    long n_correct = 0;
    long n_b = 0;
    long n_cb = 0;
    long n_unparseable = 0;

    void add(Classification c);
    BiasCounts& operator+=(const BiasCounts& other);
    bool consistent() const { return n_correct + n_b + n_cb + n_unparseable == n_total; }
};

BiasCounts tally_classifications(std::span<const Classification> classifications);

/// n_correct / n_total. Throws MetricError on an empty set.
double accuracy(const BiasCounts& counts);
/// (n_b - n_cb) / n_total. Throws MetricError on an empty set.
double diff_bias(const BiasCounts& counts);

double accuracy(std::span<const Outcome> outcomes);
double diff_bias(std::span<const Outcome> outcomes);

/// Per-refinement-round confusion between feedback verdict and response
/// correctness. Unprimed cells cover every example present at the round;
/// primed cells cover only the lineage rooted at round-0 true positives
/// (examples that stayed flagged-and-incorrect at every earlier round).
struct RoundConfusion {
    int round = 0;
    long tp = 0, fp = 0, fn = 0, tn = 0;
    long tp_p = 0, fp_p = 0, fn_p = 0, tn_p = 0;

    long population() const { return tp + fp + fn + tn; }
    long flagged() const { return tp + fp; }
};

/// Aggregate per-round matrices over complete transcripts. Rounds without a
/// recorded feedback contribute nothing. Aborted transcripts raise DataError
/// listing the offending example ids.
std::vector<RoundConfusion> tally_confusion(std::span<const CorrectionTranscript> transcripts);

/// Share of incorrect responses that were flagged: sum tp / sum (tp + fn).
/// nullopt when no incorrect response ever appeared.
std::optional<double> fb_recall(std::span<const RoundConfusion> matrices);

/// Share of flagged responses that were incorrect: sum tp / sum (tp + fp).
std::optional<double> fb_precision(std::span<const RoundConfusion> matrices);

/// Among primed-lineage refinements of flagged-incorrect responses, the
/// share that became correct: sum_{i>=1}(fp'_i + tn'_i) / sum_{i>=1} tp'_{i-1}.
std::optional<double> rf_score(std::span<const RoundConfusion> matrices);

/// Alternate event-level reading: every refinement of any flagged-incorrect
/// response counts, not just the primed chain.
std::optional<double> rf_score_event_level(std::span<const CorrectionTranscript> transcripts);

struct FlowViolation {
    int round = 0;
    std::string constraint;
    long lhs = 0;
    long rhs = 0;

    std::string describe() const;
};

/// Check the round-to-round conservation laws: flagged_{i-1} equals the
/// round-i population, the primed chain balances the same way, primed cells
/// never exceed unprimed ones, and round 0 roots the lineage at its TP cell.
/// Empty result means all constraints hold.
std::vector<FlowViolation> verify_flow(std::span<const RoundConfusion> matrices);

/// Initial-round classifications of a transcript set.
BiasCounts initial_counts(std::span<const CorrectionTranscript> transcripts);
/// Final-round classifications of a transcript set.
BiasCounts final_counts(std::span<const CorrectionTranscript> transcripts);

}  // namespace selfcorr

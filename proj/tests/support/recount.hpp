#pragma once

#include <vector>

#include "selfcorr/engine.hpp"

namespace selfcorr::testing {

/// Independent brute-force recount of the feedback/refinement metrics,
/// written straight from their definitions as a per-transcript walk. Kept
/// deliberately free of RoundConfusion so it cross-checks the metrics
/// module rather than restating it.
struct RecountTotals {
    long tp = 0, fn = 0, fp = 0, tn = 0;
    long rf_num = 0, rf_den = 0;  // primed chain events
    long n = 0, correct = 0, biased = 0, counter = 0, unparseable = 0;

    double fb_recall() const { return static_cast<double>(tp) / static_cast<double>(tp + fn); }
    double fb_precision() const { return static_cast<double>(tp) / static_cast<double>(tp + fp); }
    double rf_score() const { return static_cast<double>(rf_num) / static_cast<double>(rf_den); }
    double accuracy() const { return static_cast<double>(correct) / static_cast<double>(n); }
    double diff_bias() const {
        return static_cast<double>(biased - counter) / static_cast<double>(n);
    }
};

inline RecountTotals recount_transcripts(const std::vector<CorrectionTranscript>& transcripts) {
    RecountTotals t;
    for (const auto& tr : transcripts) {
        t.n += 1;
        switch (tr.final_classification()) {
            case Classification::Correct: t.correct += 1; break;
            case Classification::Biased: t.biased += 1; break;
            case Classification::CounterBiased: t.counter += 1; break;
            case Classification::Unparseable: t.unparseable += 1; break;
        }

        bool chain_alive = false;
        for (std::size_t i = 0; i < tr.rounds.size(); ++i) {
            const RoundRecord& r = tr.rounds[i];
            if (!r.feedback) break;
            const bool flagged = !(r.feedback->parse_ok && r.feedback->total == 3);
            const bool correct = r.classification == Classification::Correct;

            if (flagged && !correct) t.tp += 1;
            if (!flagged && !correct) t.fn += 1;
            if (flagged && correct) t.fp += 1;
            if (!flagged && correct) t.tn += 1;

            if (i == 0) {
                chain_alive = flagged && !correct;
            } else if (chain_alive) {
                t.rf_den += 1;
                if (correct) t.rf_num += 1;
                chain_alive = flagged && !correct;
            }

            if (!flagged) break;
        }
    }
    return t;
}

}  // namespace selfcorr::testing

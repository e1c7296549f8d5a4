#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "selfcorr/bbq.hpp"
#include "selfcorr/chat.hpp"
#include "selfcorr/prompts.hpp"

namespace selfcorr {

enum class ExtractMethod { ExactFormat, NormalizedMatch, Unparseable };

std::string_view extract_method_name(ExtractMethod m);
ExtractMethod extract_method_from_name(std::string_view name);

/// Which answer choice a response text committed to.
struct AnswerExtraction {
    std::optional<int> choice_index;  // set iff method != Unparseable
    std::string matched_text;
    ExtractMethod method = ExtractMethod::Unparseable;
};

/// Two-tier extraction: first the literal answer-format sentence, then the
/// last normalized mention of any choice anywhere in the text. Total —
/// failure is the Unparseable value, never an error.
AnswerExtraction extract_answer(std::string_view text, std::span<const std::string, 3> choices);

enum class Aspect { Coherent = 0, Comprehensive = 1, Objective = 2 };

/// Parsed multi-aspect critique. On any format violation the scores are
/// zeroed, parse_ok is false, and the raw text is preserved.
struct Feedback {
    std::array<int, 3> aspect_scores{0, 0, 0};
    int total = 0;
    std::string raw_text;
    bool parse_ok = false;

    bool perfect() const { return parse_ok && total == 3; }
};

Feedback parse_feedback(std::string_view text);

enum class Classification { Correct, Biased, CounterBiased, Unparseable };

std::string_view classification_name(Classification c);
Classification classification_from_name(std::string_view name);

/// Correct iff the extraction hit the unknown choice (ambiguous contexts).
Classification classify_extraction(const AnswerExtraction& extraction, const BBQExample& example);

enum class MethodKind { NoCoT, CoT, SelfConsistency, SameModel, CrossModel };
enum class CorrectionMode { SameModel, CrossModel };

std::string_view method_kind_name(MethodKind k);
MethodKind method_kind_from_name(std::string_view name);

struct MethodDescriptor {
    MethodKind kind = MethodKind::CoT;
    std::string responder_model;
    std::string feedback_model;  // empty for baselines
    bool debias = false;

    bool is_correction() const {
        return kind == MethodKind::SameModel || kind == MethodKind::CrossModel;
    }
    /// Canonical string used as part of the resume key.
    std::string key() const;
    /// Human-readable label for report tables.
    std::string label() const;

    nlohmann::json to_json() const;
    static MethodDescriptor from_json(const nlohmann::json& j);

    bool operator==(const MethodDescriptor&) const = default;
};

struct Outcome {
    std::string example_id;
    std::string category;
    MethodDescriptor method;
    int trial_index = 0;
    Classification classification = Classification::Unparseable;
};

enum class StopReason { PerfectScore, MaxIterations };

std::string_view stop_reason_name(StopReason r);
StopReason stop_reason_from_name(std::string_view name);

struct RoundRecord {
    std::string response_text;
    AnswerExtraction extraction;
    Classification classification = Classification::Unparseable;
    std::optional<Feedback> feedback;

    bool flagged() const { return feedback && !(feedback->parse_ok && feedback->total == 3); }
};

/// Full per-example loop history. rounds[0] is the initial CoT response;
/// each later round is one refinement.
struct CorrectionTranscript {
    std::string example_id;
    std::string category;
    MethodDescriptor method;
    int trial_index = 0;
    std::vector<RoundRecord> rounds;
    StopReason stop_reason = StopReason::PerfectScore;
    bool aborted = false;
    std::string abort_error;

    Classification final_classification() const { return rounds.back().classification; }
    Classification initial_classification() const { return rounds.front().classification; }
    Outcome to_outcome() const;
};

struct BaselineResult {
    Outcome outcome;
    std::string response_text;
    AnswerExtraction extraction;
};

/// One completion with the No-CoT or CoT response prompt.
BaselineResult run_baseline(const BBQExample& example, ChatBackend& backend, MethodKind kind,
                            bool debias, const GenerationParams& params);

struct SelfConsistencySample {
    std::string response_text;
    AnswerExtraction extraction;
};

struct SelfConsistencyResult {
    Outcome outcome;
    std::vector<SelfConsistencySample> samples;
};

/// Majority vote over k CoT samples of the same prompt. Sample 0 shares the
/// CoT baseline's cache entry; ties fall back to sample 0's answer;
/// unparseable samples are excluded from the vote.
SelfConsistencyResult run_self_consistency(const BBQExample& example, ChatBackend& backend,
                                           bool debias, int k, const GenerationParams& params);

struct LoopOptions {
    int max_iterations = 3;
    /// Score the round produced by the last refinement so per-round
    /// confusion accounting is complete. Disable to save one feedback call
    /// per maxed-out episode.
    bool score_final_round = true;
};

/// Iterative feedback/refinement loop with early stopping on a perfect
/// score. SameModel mode threads one growing conversation through both
/// backends (which must name the same model); CrossModel mode sends every
/// call stateless. Backend failures abort the transcript with the partial
/// history preserved and flagged.
CorrectionTranscript run_self_correction(const BBQExample& example, ChatBackend& responder,
                                         ChatBackend& feedbacker, CorrectionMode mode, bool debias,
                                         const FewshotLibrary& shots, const GenerationParams& params,
                                         const LoopOptions& options = {});

}  // namespace selfcorr

#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "selfcorr/bbq.hpp"
#include "selfcorr/chat.hpp"

namespace selfcorr {

enum class PromptStep { Response, Feedback, Refinement };

std::string_view prompt_step_name(PromptStep step);

/// Message sequence ready for a chat backend. Each pipeline step renders a
/// single user message so same-model threading and cross-model stateless
/// calls carry identical content.
struct PromptBundle {
    std::vector<ChatMessage> messages;
    PromptStep step;

    /// Content of the (single) user message.
    const std::string& text() const { return messages.back().content; }
};

/// One few-shot example for feedback generation: task question, a model
/// response, and an author-written critique.
struct Shot {
    std::string question_block;
    std::string response;
    std::string feedback;
    std::string source_category;
};

struct ShotBank {
    std::string source_category;
    std::vector<Shot> shots;
};

/// Feedback few-shot banks. Selection never hands out shots drawn from the
/// category under evaluation.
class FewshotLibrary {
public:
    /// The two banks shipped with the library (embedded from data files):
    /// the standard age-sourced bank plus a gender-sourced alternate used
    /// when the age category itself is evaluated.
    static const FewshotLibrary& builtin();

    /// Load every "*.json" bank in a directory, sorted by filename.
    static FewshotLibrary load_dir(const std::string& dir);

    void add_bank(ShotBank bank);
    const std::vector<ShotBank>& banks() const { return banks_; }

    /// First configured bank not sourced from `category`. Throws ConfigError
    /// when no bank is eligible.
    const std::vector<Shot>& select_fewshot(std::string_view category) const;

private:
    std::vector<ShotBank> banks_;
};

ShotBank parse_shot_bank(const nlohmann::json& j);

/// "Context: ...\nQuestion: ...\nChoices: a, b, c"
std::string question_block(const BBQExample& example);

/// The exact sentence appended to response/refinement instructions when the
/// debiasing prompt is enabled.
extern const std::string_view kDebiasSentence;

/// The chain-of-thought cue that ends CoT response and refinement prompts.
extern const std::string_view kStepByStepCue;

/// The sentence pattern every response is instructed to end with.
extern const std::string_view kAnswerFormatAnchor;

PromptBundle render_response_prompt(const BBQExample& example, bool cot, bool debias);

/// Requires exactly 3 shots, none sourced from the example's category.
PromptBundle render_feedback_prompt(const BBQExample& example, std::string_view response_text,
                                    std::span<const Shot> shots);

PromptBundle render_refinement_prompt(const BBQExample& example, std::string_view prev_response,
                                      std::string_view feedback_text, bool debias);

/// Recognize which pipeline step produced a prompt, by its instruction
/// opening. nullopt when the text matches none of the three templates.
std::optional<PromptStep> classify_step(std::string_view prompt_text);

/// Template-anchored decomposition of a rendered step prompt, used by the
/// scripted backend. Shot content inside feedback prompts is skipped; fields
/// refer to the target example.
struct PromptView {
    PromptStep step;
    std::string question_block;
    /// Feedback: the response under review. Refinement: the previous
    /// response. Empty for response-generation prompts.
    std::string response_text;
};

std::optional<PromptView> parse_step_prompt(std::string_view prompt_text);

}  // namespace selfcorr

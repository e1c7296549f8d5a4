#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>

#include <json.hpp>

#include "selfcorr/bbq.hpp"
#include "selfcorr/chat.hpp"

namespace selfcorr {

/// Behaviour of the deterministic scripted model, expressed as per-step
/// probabilities. All randomness is counter-based, so outputs are identical
/// across processes and thread interleavings.
struct ScriptedModelSpec {
    /// Probability an initial answer picks the biased choice.
    double bias_rate = 0.0;
    /// Probability an initial answer picks the counter-biased choice.
    double counter_rate = 0.0;
    /// Probability an incorrect response receives a non-perfect score.
    double feedback_recall = 1.0;
    /// Probability a correct response wrongly receives a non-perfect score.
    double feedback_precision_complement = 0.0;
    /// Probability a refinement of an incorrect response becomes correct.
    double fix_rate = 1.0;
    /// Applied to bias_rate/counter_rate when the prompt carries the
    /// debiasing sentence. 1.0 leaves the toggle without effect.
    double debias_multiplier = 1.0;
    std::uint64_t rng_seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static ScriptedModelSpec from_json(const nlohmann::json& j);
    static ScriptedModelSpec load(const std::string& path);
};

/// Deterministic chat model for tests and desk-scale experiments. It
/// recognizes the three step prompts, looks the target example up in its
/// registry, and answers according to the spec probabilities. Responses
/// carry a "(pass N, option M)" tag so later feedback/refinement steps can
/// recover the round and prior answer without shared state.
class ScriptedBackend : public ChatBackend {
public:
    explicit ScriptedBackend(ScriptedModelSpec spec, std::string name = "scripted");

    /// Register the examples the model may be asked about. Not thread-safe;
    /// call before issuing completions.
    void register_examples(std::span<const BBQExample> examples);
    void register_example(const BBQExample& example);

    std::string complete(const Conversation& conversation, const GenerationParams& params) override;
    const std::string& name() const override { return name_; }

    const ScriptedModelSpec& spec() const { return spec_; }

private:
    ScriptedModelSpec spec_;
    std::string name_;
    std::map<std::string, BBQExample> by_question_block_;
};

}  // namespace selfcorr

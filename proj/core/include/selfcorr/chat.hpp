#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "selfcorr/errors.hpp"

namespace selfcorr {

enum class Role { System, User, Assistant };

std::string_view role_name(Role role);
Role role_from_name(std::string_view name);

struct ChatMessage {
    Role role;
    std::string content;
};

/// Ordered chat history owned by one model. Append-only; after any leading
/// system/user turns, user and assistant turns must strictly alternate.
class Conversation {
public:
    Conversation() = default;
    explicit Conversation(std::string owner_model) : owner_model_(std::move(owner_model)) {}

    void push_user(std::string content);
    void push_assistant(std::string content);
    void push_system(std::string content);

    const std::vector<ChatMessage>& turns() const { return turns_; }
    const std::string& owner_model() const { return owner_model_; }
    bool empty() const { return turns_.empty(); }
    std::size_t size() const { return turns_.size(); }
    const ChatMessage& back() const { return turns_.back(); }
    bool ends_with_user() const { return !turns_.empty() && turns_.back().role == Role::User; }

    /// Single-turn conversation holding one user message.
    static Conversation single_user(std::string content, std::string owner_model = {});

private:
    void push(Role role, std::string content);

    std::vector<ChatMessage> turns_;
    std::string owner_model_;
};

/// Per-call generation settings. Absent optionals mean endpoint defaults.
struct GenerationParams {
    std::string model_name;
    std::optional<double> temperature;
    std::optional<int> max_tokens;
    int trial_index = 0;
    /// Distinguishes repeated draws of the same prompt within one trial
    /// (self-consistency samples, feedback re-asks). Part of the cache key.
    int sample_index = 0;
};

/// Uniform chat-completion access. Implementations must be callable from
/// many threads concurrently.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;

    /// Generate the assistant reply to `conversation`, which must end with a
    /// user turn. Never mutates the conversation.
    virtual std::string complete(const Conversation& conversation, const GenerationParams& params) = 0;

    /// Identifier used in transcripts and cache keys (model name or scripted tag).
    virtual const std::string& name() const = 0;

    /// Completions served so far, including cache hits at wrappers that count them.
    std::uint64_t calls_made() const { return calls_.load(std::memory_order_relaxed); }

protected:
    void count_call() { calls_.fetch_add(1, std::memory_order_relaxed); }

private:
    std::atomic<std::uint64_t> calls_{0};
};

}  // namespace selfcorr

#pragma once

#include <deque>
#include <mutex>
#include <string>
#include <vector>

#include "selfcorr/chat.hpp"

namespace selfcorr::testing {

/// Replays queued replies in order; records what it was asked. Throws a
/// BackendError when the queue runs dry (or when told to fail).
class CannedBackend : public ChatBackend {
public:
    explicit CannedBackend(std::string name = "canned") : name_(std::move(name)) {}

    void queue_reply(std::string text) {
        std::lock_guard<std::mutex> lock(mu_);
        replies_.push_back(std::move(text));
    }

    void fail_next(std::string message) {
        std::lock_guard<std::mutex> lock(mu_);
        replies_.push_back("\x01" + std::move(message));
    }

    std::string complete(const Conversation& conversation, const GenerationParams& params) override {
        count_call();
        std::lock_guard<std::mutex> lock(mu_);
        prompts_.push_back(conversation.back().content);
        turn_counts_.push_back(conversation.size());
        params_.push_back(params);
        if (replies_.empty()) throw BackendError("canned backend exhausted");
        std::string reply = std::move(replies_.front());
        replies_.pop_front();
        if (!reply.empty() && reply.front() == '\x01') throw BackendError(reply.substr(1));
        return reply;
    }

    const std::string& name() const override { return name_; }

    const std::vector<std::string>& prompts() const { return prompts_; }
    const std::vector<std::size_t>& turn_counts() const { return turn_counts_; }
    const std::vector<GenerationParams>& seen_params() const { return params_; }

private:
    std::string name_;
    mutable std::mutex mu_;
    std::deque<std::string> replies_;
    std::vector<std::string> prompts_;
    std::vector<std::size_t> turn_counts_;
    std::vector<GenerationParams> params_;
};

}  // namespace selfcorr::testing

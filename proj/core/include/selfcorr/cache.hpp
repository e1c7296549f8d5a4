#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <json.hpp>

#include "selfcorr/chat.hpp"

namespace selfcorr {

/// Content-addressed, persistent completion cache: one JSON file per digest
/// holding the request and the response text. Writes are serialized and go
/// through a temp-file rename.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir);

    /// SHA-256 over the canonical request encoding. Includes the model name,
    /// the full message sequence, set params, and trial/sample indices.
    static std::string digest_for(std::string_view model, const Conversation& conversation,
                                  const GenerationParams& params);

    static nlohmann::json request_json(std::string_view model, const Conversation& conversation,
                                       const GenerationParams& params);

    std::optional<std::string> lookup(const std::string& digest) const;
    void store(const std::string& digest, const nlohmann::json& request,
               const std::string& response_text);

    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path path_for(const std::string& digest) const;

    std::filesystem::path dir_;
    mutable std::mutex write_mu_;
};

/// Caching decorator: identical (model, messages, params, trial, sample)
/// requests are served from disk without touching the inner backend.
class CachedBackend : public ChatBackend {
public:
    CachedBackend(std::shared_ptr<ChatBackend> inner, std::shared_ptr<ResponseCache> cache);

    std::string complete(const Conversation& conversation, const GenerationParams& params) override;
    const std::string& name() const override { return inner_->name(); }

    std::uint64_t hits() const { return hits_.load(std::memory_order_relaxed); }
    std::uint64_t misses() const { return misses_.load(std::memory_order_relaxed); }

private:
    std::shared_ptr<ChatBackend> inner_;
    std::shared_ptr<ResponseCache> cache_;
    std::atomic<std::uint64_t> hits_{0};
    std::atomic<std::uint64_t> misses_{0};
};

}  // namespace selfcorr

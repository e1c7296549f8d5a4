#pragma once

#include <condition_variable>
#include <mutex>
#include <optional>
#include <string>

#include "selfcorr/chat.hpp"

namespace selfcorr {

struct HttpBackendOptions {
    /// Endpoint root, e.g. "https://api.openai.com/v1" or "http://localhost:8000/v1".
    std::string base_url;
    /// Model identifier sent in every request.
    std::string model;
    /// Name used in transcripts and cache keys; defaults to `model`.
    std::string display_name;
    /// Bearer token; empty sends no Authorization header.
    std::string api_key;
    /// Sent when the per-call params leave them unset. Absent means endpoint
    /// defaults.
    std::optional<double> temperature;
    std::optional<int> max_tokens;
    /// Transient failures (connect errors, 429, 5xx) are retried this many
    /// times with exponential backoff before a hard error.
    int max_retries = 3;
    int retry_base_ms = 500;
    int timeout_sec = 120;
    /// Upper bound on in-flight requests against this endpoint.
    int max_concurrency = 4;
};

/// OpenAI-compatible chat-completions client. Thread-safe; in-flight
/// requests are bounded by options.max_concurrency.
class HttpBackend : public ChatBackend {
public:
    explicit HttpBackend(HttpBackendOptions options);
    ~HttpBackend() override;

    std::string complete(const Conversation& conversation, const GenerationParams& params) override;
    const std::string& name() const override { return name_; }

    const HttpBackendOptions& options() const { return options_; }

private:
    class Gate {
    public:
        explicit Gate(int slots) : slots_(slots) {}
        void acquire();
        void release();

    private:
        std::mutex mu_;
        std::condition_variable cv_;
        int slots_;
    };

    HttpBackendOptions options_;
    std::string name_;
    std::string scheme_host_;  // "https://host:port"
    std::string path_prefix_;  // "/v1"
    Gate gate_;
};

}  // namespace selfcorr

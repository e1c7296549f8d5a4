#include "selfcorr/http_backend.hpp"

#include <chrono>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace selfcorr {

namespace {

bool transient_status(int status) { return status == 429 || (status >= 500 && status < 600); }

}  // namespace

void HttpBackend::Gate::acquire() {
    std::unique_lock<std::mutex> lock(mu_);
    cv_.wait(lock, [&] { return slots_ > 0; });
    --slots_;
}

void HttpBackend::Gate::release() {
    {
        std::lock_guard<std::mutex> lock(mu_);
        ++slots_;
    }
    cv_.notify_one();
}

HttpBackend::HttpBackend(HttpBackendOptions options)
    : options_(std::move(options)),
      name_(options_.display_name.empty() ? options_.model : options_.display_name),
      gate_(std::max(1, options_.max_concurrency)) {
    const std::string& url = options_.base_url;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("backend base_url must start with http:// or https://: " + url);
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        scheme_host_ = url;
    } else {
        scheme_host_ = url.substr(0, path_start);
        path_prefix_ = url.substr(path_start);
        while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
    }
}

HttpBackend::~HttpBackend() = default;

std::string HttpBackend::complete(const Conversation& conversation, const GenerationParams& params) {
    count_call();
    if (!conversation.ends_with_user()) {
        throw BackendError("http backend: conversation must end with a user turn");
    }

    nlohmann::json messages = nlohmann::json::array();
    for (const auto& turn : conversation.turns()) {
        messages.push_back({{"role", role_name(turn.role)}, {"content", turn.content}});
    }
    nlohmann::json body{
        {"model", params.model_name.empty() ? options_.model : params.model_name},
        {"messages", std::move(messages)},
    };
    const auto temperature = params.temperature ? params.temperature : options_.temperature;
    const auto max_tokens = params.max_tokens ? params.max_tokens : options_.max_tokens;
    if (temperature) body["temperature"] = *temperature;
    if (max_tokens) body["max_tokens"] = *max_tokens;
    const std::string payload = body.dump();
    const std::string path = path_prefix_ + "/chat/completions";

    gate_.acquire();
    struct Release {
        Gate& g;
        ~Release() { g.release(); }
    } release{gate_};

    std::string last_error;
    const int attempts_allowed = options_.max_retries + 1;
    for (int attempt = 0; attempt < attempts_allowed; ++attempt) {
        if (attempt > 0) {
            const auto backoff =
                std::chrono::milliseconds(options_.retry_base_ms << (attempt - 1));
            std::this_thread::sleep_for(backoff);
        }

        httplib::Client client(scheme_host_);
        client.set_connection_timeout(options_.timeout_sec, 0);
        client.set_read_timeout(options_.timeout_sec, 0);
        client.set_write_timeout(options_.timeout_sec, 0);
        httplib::Headers headers;
        if (!options_.api_key.empty()) {
            headers.emplace("Authorization", "Bearer " + options_.api_key);
        }

        auto res = client.Post(path, headers, payload, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 200) {
            try {
                nlohmann::json j = nlohmann::json::parse(res->body);
                return j.at("choices").at(0).at("message").at("content").get<std::string>();
            } catch (const nlohmann::json::exception& e) {
                throw BackendError("endpoint returned unparseable completion: " +
                                       std::string(e.what()),
                                   attempt + 1);
            }
        }
        if (transient_status(res->status)) {
            last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
            continue;
        }
        // Non-transient refusal: surface the endpoint's message verbatim.
        throw BackendError("endpoint refused request (HTTP " + std::to_string(res->status) +
                               "): " + res->body,
                           attempt + 1);
    }
    throw BackendError("backend " + options_.model + " failed after " +
                           std::to_string(attempts_allowed) + " attempts; last error: " + last_error,
                       attempts_allowed);
}

}  // namespace selfcorr

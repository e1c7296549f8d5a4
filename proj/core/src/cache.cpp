#include "selfcorr/cache.hpp"

#include <fstream>

#include "selfcorr/digest.hpp"

namespace selfcorr {

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

nlohmann::json ResponseCache::request_json(std::string_view model, const Conversation& conversation,
                                           const GenerationParams& params) {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& turn : conversation.turns()) {
        messages.push_back({{"role", role_name(turn.role)}, {"content", turn.content}});
    }
    nlohmann::json j{{"model", std::string(model)},
                     {"messages", std::move(messages)},
                     {"trial_index", params.trial_index},
                     {"sample_index", params.sample_index}};
    if (params.temperature) j["temperature"] = *params.temperature;
    if (params.max_tokens) j["max_tokens"] = *params.max_tokens;
    return j;
}

std::string ResponseCache::digest_for(std::string_view model, const Conversation& conversation,
                                      const GenerationParams& params) {
    return sha256_hex(request_json(model, conversation, params).dump());
}

std::filesystem::path ResponseCache::path_for(const std::string& digest) const {
    return dir_ / (digest + ".json");
}

std::optional<std::string> ResponseCache::lookup(const std::string& digest) const {
    std::ifstream in(path_for(digest));
    if (!in) return std::nullopt;
    try {
        nlohmann::json j;
        in >> j;
        return j.at("response").get<std::string>();
    } catch (const nlohmann::json::exception&) {
        // Unreadable entry: treat as a miss; the next store overwrites it.
        return std::nullopt;
    }
}

void ResponseCache::store(const std::string& digest, const nlohmann::json& request,
                          const std::string& response_text) {
    const nlohmann::json entry{{"digest", digest}, {"request", request}, {"response", response_text}};
    std::lock_guard<std::mutex> lock(write_mu_);
    const auto tmp = dir_ / (digest + ".tmp");
    {
        std::ofstream out(tmp, std::ios::trunc);
        out << entry.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, path_for(digest));
}

CachedBackend::CachedBackend(std::shared_ptr<ChatBackend> inner, std::shared_ptr<ResponseCache> cache)
    : inner_(std::move(inner)), cache_(std::move(cache)) {}

std::string CachedBackend::complete(const Conversation& conversation, const GenerationParams& params) {
    count_call();
    const std::string model = params.model_name.empty() ? inner_->name() : params.model_name;
    const std::string digest = ResponseCache::digest_for(model, conversation, params);
    if (auto cached = cache_->lookup(digest)) {
        hits_.fetch_add(1, std::memory_order_relaxed);
        return *cached;
    }
    std::string text = inner_->complete(conversation, params);
    misses_.fetch_add(1, std::memory_order_relaxed);
    cache_->store(digest, ResponseCache::request_json(model, conversation, params), text);
    return text;
}

}  // namespace selfcorr

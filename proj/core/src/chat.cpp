#include "selfcorr/chat.hpp"

namespace selfcorr {

std::string_view role_name(Role role) {
    switch (role) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    return "user";
}

Role role_from_name(std::string_view name) {
    if (name == "system") return Role::System;
    if (name == "user") return Role::User;
    if (name == "assistant") return Role::Assistant;
    throw ConfigError("unknown chat role: " + std::string(name));
}

void Conversation::push(Role role, std::string content) {
    if (role == Role::System) {
        if (!turns_.empty()) throw ConfigError("system turn must come first");
    } else if (role == Role::Assistant) {
        if (turns_.empty() || turns_.back().role != Role::User) {
            throw ConfigError("assistant turn must follow a user turn");
        }
    } else {
        if (!turns_.empty() && turns_.back().role == Role::User) {
            throw ConfigError("consecutive user turns are not allowed");
        }
    }
    turns_.push_back({role, std::move(content)});
}

void Conversation::push_user(std::string content) { push(Role::User, std::move(content)); }
void Conversation::push_assistant(std::string content) { push(Role::Assistant, std::move(content)); }
void Conversation::push_system(std::string content) { push(Role::System, std::move(content)); }

Conversation Conversation::single_user(std::string content, std::string owner_model) {
    Conversation conv(std::move(owner_model));
    conv.push_user(std::move(content));
    return conv;
}

}  // namespace selfcorr

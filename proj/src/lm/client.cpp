#include "maf/lm/client.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <sstream>

namespace maf::lm {

std::string_view to_string(Stage stage) {
    switch (stage) {
        case Stage::Base: return "base";
        case Stage::Feedback: return "feedback";
        case Stage::Refiner: return "refiner";
    }
    return "unknown";
}

LmRequest::LmRequest(std::vector<ChatMessage> messages, int max_tokens, Stage stage, std::string model_name,
                     std::vector<std::string> stop_sequences, double temperature)
    : messages_(std::move(messages)),
      max_tokens_(max_tokens),
      stage_(stage),
      model_name_(std::move(model_name)),
      stop_(std::move(stop_sequences)) {
    if (temperature != 0.0) throw InputError("decoding is greedy: temperature must be 0");
    if (max_tokens_ <= 0) throw InputError("max_tokens must be positive");
    if (messages_.empty()) throw InputError("request has no messages");
}

LmRequest LmRequest::from_prompt(std::string prompt, int max_tokens, Stage stage, std::string model_name,
                                 std::vector<std::string> stop_sequences) {
    return LmRequest({{"user", std::move(prompt)}}, max_tokens, stage, std::move(model_name),
                     std::move(stop_sequences));
}

std::string LmRequest::flattened() const {
    std::string out;
    for (std::size_t i = 0; i < messages_.size(); ++i) {
        if (i) out += '\n';
        out += messages_[i].content;
    }
    return out;
}

json LmRequest::to_json() const {
    json msgs = json::array();
    for (const auto& m : messages_) msgs.push_back({{"role", m.role}, {"content", m.content}});
    return json{{"model", model_name_},
                {"messages", msgs},
                {"max_tokens", max_tokens_},
                {"temperature", 0},
                {"stop", stop_}};
}

std::string LmRequest::digest() const { return sha256_hex(to_json().dump()); }

int TokenBudget::for_stage(Stage stage) const {
    switch (stage) {
        case Stage::Base: return base;
        case Stage::Feedback: return feedback;
        case Stage::Refiner: return refiner;
    }
    return 0;
}

void TokenBudget::validate() const {
    if (base <= 0 || feedback <= 0 || refiner <= 0) throw ConfigError("token budgets must be positive");
}

TokenBudget TokenBudget::for_task(Task task) {
    if (task == Task::Qa) return {450, 600, 800};
    return {300, 600, 600};
}

void to_json(json& j, const TokenBudget& b) {
    j = json{{"base", b.base}, {"feedback", b.feedback}, {"refiner", b.refiner}};
}
void from_json(const json& j, TokenBudget& b) {
    b.base = j.at("base").get<int>();
    b.feedback = j.at("feedback").get<int>();
    b.refiner = j.at("refiner").get<int>();
}

std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256 failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xF];
    }
    return out;
}

std::string Client::complete(const LmRequest& request) {
    if (budget_ && request.max_tokens() > budget_->for_stage(request.stage())) {
        throw BudgetError("request max_tokens " + std::to_string(request.max_tokens()) + " exceeds the " +
                          std::string(to_string(request.stage())) + " budget of " +
                          std::to_string(budget_->for_stage(request.stage())));
    }
    return do_complete(request);
}

void to_json(json& j, const ScriptRule& r) {
    j = json{{"contains", r.contains}, {"response", r.response}};
    if (r.position) j["position"] = *r.position;
    if (r.max_uses) j["max_uses"] = *r.max_uses;
}

void from_json(const json& j, ScriptRule& r) {
    r.contains = j.value("contains", std::vector<std::string>{});
    r.response = j.at("response").get<std::string>();
    if (j.contains("position")) r.position = j.at("position").get<std::size_t>();
    if (j.contains("max_uses")) r.max_uses = j.at("max_uses").get<std::size_t>();
}

ScriptedClient::ScriptedClient(std::vector<ScriptRule> rules, std::optional<std::string> fallback)
    : rules_(std::move(rules)), fallback_(std::move(fallback)), uses_(rules_.size(), 0) {}

std::unique_ptr<ScriptedClient> ScriptedClient::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read LM script '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("malformed LM script '" + path + "': " + e.what());
    }
    std::optional<std::string> fallback;
    if (j.contains("fallback") && !j["fallback"].is_null()) fallback = j["fallback"].get<std::string>();
    return std::make_unique<ScriptedClient>(j.at("rules").get<std::vector<ScriptRule>>(), fallback);
}

std::vector<LmRequest> ScriptedClient::call_log() const {
    std::lock_guard lock(mu_);
    return log_;
}

std::size_t ScriptedClient::call_count() const {
    std::lock_guard lock(mu_);
    return log_.size();
}

void ScriptedClient::reset() {
    std::lock_guard lock(mu_);
    log_.clear();
    std::fill(uses_.begin(), uses_.end(), 0);
}

std::string ScriptedClient::do_complete(const LmRequest& request) {
    std::lock_guard lock(mu_);
    std::size_t position = log_.size();
    log_.push_back(request);
    for (std::size_t i = 0; i < rules_.size(); ++i) {
        if (rules_[i].position && *rules_[i].position == position) {
            ++uses_[i];
            return rules_[i].response;
        }
    }
    std::string text = request.flattened();
    for (std::size_t i = 0; i < rules_.size(); ++i) {
        const auto& rule = rules_[i];
        if (rule.position) continue;
        if (rule.max_uses && uses_[i] >= *rule.max_uses) continue;
        bool all = true;
        for (const auto& needle : rule.contains) {
            if (text.find(needle) == std::string::npos) {
                all = false;
                break;
            }
        }
        if (all) {
            ++uses_[i];
            return rule.response;
        }
    }
    if (fallback_) return *fallback_;
    throw ScriptMissError("scripted client has no rule for call #" + std::to_string(position) + " (digest " +
                          request.digest() + ")");
}

}  // namespace maf::lm

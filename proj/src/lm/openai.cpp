#include <httplib.h>

#include "maf/lm/openai.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <random>
#include <thread>

namespace maf::lm {

std::atomic<std::size_t> OpenAiChatClient::total_requests_{0};

void to_json(json& j, const EndpointConfig& c) {
    j = json{{"base_url", c.base_url},
             {"model", c.model},
             {"api_key_env", c.api_key_env},
             {"timeout_s", c.timeout_s},
             {"max_attempts", c.max_attempts},
             {"backoff_base_s", c.backoff_base_s},
             {"max_in_flight", c.max_in_flight}};
}

void from_json(const json& j, EndpointConfig& c) {
    EndpointConfig d;
    c.base_url = j.value("base_url", d.base_url);
    c.model = j.value("model", d.model);
    c.api_key_env = j.value("api_key_env", d.api_key_env);
    c.timeout_s = j.value("timeout_s", d.timeout_s);
    c.max_attempts = j.value("max_attempts", d.max_attempts);
    c.backoff_base_s = j.value("backoff_base_s", d.backoff_base_s);
    c.max_in_flight = j.value("max_in_flight", d.max_in_flight);
}

namespace {

std::optional<std::string> key_from_env(const std::string& var) {
    if (var.empty()) return std::nullopt;
    const char* v = std::getenv(var.c_str());
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

}  // namespace

OpenAiChatClient::OpenAiChatClient(EndpointConfig config)
    : OpenAiChatClient(config, key_from_env(config.api_key_env)) {}

OpenAiChatClient::OpenAiChatClient(EndpointConfig config, std::optional<std::string> api_key)
    : config_(std::move(config)), api_key_(std::move(api_key)), in_flight_(1) {
    if (config_.max_attempts < 1) throw ConfigError("lm.max_attempts must be at least 1");
    if (config_.max_in_flight < 1 || config_.max_in_flight > 1024) {
        throw ConfigError("lm.max_in_flight must be in [1, 1024]");
    }
    const std::string& url = config_.base_url;
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("lm.base_url must include a scheme: " + url);
    std::string scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") throw ConfigError("lm.base_url scheme must be http or https");
    auto path_start = url.find('/', scheme_end + 3);
    host_ = path_start == std::string::npos ? url : url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!path_.empty() && path_.back() == '/') path_.pop_back();
    path_ += "/chat/completions";
    // counting_semaphore has no setter; release up to the configured cap.
    in_flight_.release(config_.max_in_flight - 1);
}

OpenAiChatClient::~OpenAiChatClient() = default;

json OpenAiChatClient::request_body(const LmRequest& request) const {
    json msgs = json::array();
    for (const auto& m : request.messages()) msgs.push_back({{"role", m.role}, {"content", m.content}});
    json body{{"model", request.model_name().empty() ? config_.model : request.model_name()},
              {"messages", msgs},
              {"max_tokens", request.max_tokens()},
              {"temperature", 0}};
    if (!request.stop_sequences().empty()) body["stop"] = request.stop_sequences();
    return body;
}

std::string OpenAiChatClient::parse_response(const std::string& body) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception& e) {
        throw LmError(std::string("malformed completion response: ") + e.what());
    }
    if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
        throw LmError("completion response has no choices");
    }
    const json& choice = j["choices"][0];
    if (choice.contains("message") && choice["message"].contains("content") &&
        choice["message"]["content"].is_string()) {
        return choice["message"]["content"].get<std::string>();
    }
    if (choice.contains("text") && choice["text"].is_string()) return choice["text"].get<std::string>();
    throw LmError("completion response choice carries no text");
}

std::size_t OpenAiChatClient::total_requests() { return total_requests_.load(); }

std::string OpenAiChatClient::post_once(const std::string& body, int& status, bool& transport_failed) const {
    httplib::Client cli(host_);
    auto secs = static_cast<time_t>(config_.timeout_s);
    auto usecs = static_cast<time_t>((config_.timeout_s - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (api_key_) headers.emplace("Authorization", "Bearer " + *api_key_);
    ++total_requests_;
    auto res = cli.Post(path_, headers, body, "application/json");
    if (!res) {
        transport_failed = true;
        status = 0;
        return httplib::to_string(res.error());
    }
    transport_failed = false;
    status = res->status;
    return res->body;
}

std::string OpenAiChatClient::do_complete(const LmRequest& request) {
    std::string body = request_body(request).dump();
    in_flight_.acquire();
    struct Release {
        std::counting_semaphore<1024>& s;
        ~Release() { s.release(); }
    } release{in_flight_};

    thread_local std::mt19937 jitter_rng{std::random_device{}()};
    std::string last_error;
    for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
        int status = 0;
        bool transport_failed = false;
        std::string reply = post_once(body, status, transport_failed);
        if (!transport_failed && status >= 200 && status < 300) return parse_response(reply);

        bool retriable = transport_failed || status == 408 || status == 409 || status == 429 || status >= 500;
        last_error = transport_failed ? "transport error: " + reply
                                      : "HTTP " + std::to_string(status) + ": " + reply.substr(0, 300);
        if (!retriable) {
            if (status == 401 || status == 403) throw AuthError("endpoint rejected credentials (" + last_error + ")");
            throw AuthError("endpoint rejected the request (" + last_error + ")");
        }
        if (attempt < config_.max_attempts) {
            double wait = config_.backoff_base_s * static_cast<double>(1 << (attempt - 1));
            wait *= 1.0 + std::uniform_real_distribution<double>(0.0, 0.25)(jitter_rng);
            spdlog::warn("LM request attempt {}/{} failed ({}); retrying in {:.2f}s", attempt,
                         config_.max_attempts, last_error, wait);
            std::this_thread::sleep_for(std::chrono::duration<double>(wait));
        }
    }
    throw TransportError("LM request failed after " + std::to_string(config_.max_attempts) +
                         " attempts: " + last_error);
}

}  // namespace maf::lm

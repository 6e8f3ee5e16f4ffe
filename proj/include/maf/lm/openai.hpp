#pragma once

#include <atomic>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>

#include "maf/lm/client.hpp"

namespace maf::lm {

struct EndpointConfig {
    // Base URL up to the API version, e.g. https://api.openai.com/v1
    std::string base_url = "https://api.openai.com/v1";
    std::string model = "gpt-3.5-turbo";
    // Environment variable holding the bearer credential.
    std::string api_key_env = "OPENAI_API_KEY";
    double timeout_s = 60.0;
    int max_attempts = 3;
    double backoff_base_s = 1.0;
    unsigned max_in_flight = 4;
};

void to_json(json& j, const EndpointConfig& c);
void from_json(const json& j, EndpointConfig& c);

// OpenAI-compatible chat-completions client (POST {base_url}/chat/completions).
class OpenAiChatClient : public Client {
public:
    // Reads the credential from the environment; a missing variable is
    // allowed for endpoints that need no auth.
    explicit OpenAiChatClient(EndpointConfig config);
    OpenAiChatClient(EndpointConfig config, std::optional<std::string> api_key);
    ~OpenAiChatClient() override;

    const EndpointConfig& config() const { return config_; }

    // Builds the JSON body sent for a request.
    json request_body(const LmRequest& request) const;

    // Pulls the completion text out of a response body.
    static std::string parse_response(const std::string& body);

    // HTTP requests issued by every live client in this process.
    static std::size_t total_requests();

protected:
    std::string do_complete(const LmRequest& request) override;

private:
    std::string post_once(const std::string& body, int& status, bool& transport_failed) const;

    EndpointConfig config_;
    std::optional<std::string> api_key_;
    std::string host_;
    std::string path_;
    std::counting_semaphore<1024> in_flight_;
    static std::atomic<std::size_t> total_requests_;
};

}  // namespace maf::lm

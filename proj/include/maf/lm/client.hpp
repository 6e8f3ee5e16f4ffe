#pragma once

#include <cstddef>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "maf/core.hpp"

namespace maf::lm {

class LmError : public Error {
public:
    using Error::Error;
};

// Retriable transport failure (connection, timeout, 429, 5xx) that survived
// every attempt.
class TransportError : public LmError {
public:
    using LmError::LmError;
};

// Credentials, bad endpoint or malformed request; never retried.
class AuthError : public LmError {
public:
    using LmError::LmError;
};

class BudgetError : public LmError {
public:
    using LmError::LmError;
};

class ReplayMissError : public LmError {
public:
    explicit ReplayMissError(const std::string& digest)
        : LmError("no recorded response for request digest " + digest), digest_(digest) {}
    const std::string& digest() const { return digest_; }

private:
    std::string digest_;
};

class ScriptMissError : public LmError {
public:
    using LmError::LmError;
};

// Which pipeline role issued a request; selects the token budget.
enum class Stage { Base, Feedback, Refiner };

std::string_view to_string(Stage stage);

struct ChatMessage {
    std::string role;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

// A chat-completions request. Decoding is greedy: any temperature other than
// 0 is rejected when the request is built.
class LmRequest {
public:
    LmRequest(std::vector<ChatMessage> messages, int max_tokens, Stage stage, std::string model_name = {},
              std::vector<std::string> stop_sequences = {}, double temperature = 0.0);

    // Completion-style prompt adapted into a single user message.
    static LmRequest from_prompt(std::string prompt, int max_tokens, Stage stage, std::string model_name = {},
                                 std::vector<std::string> stop_sequences = {});

    const std::vector<ChatMessage>& messages() const { return messages_; }
    int max_tokens() const { return max_tokens_; }
    Stage stage() const { return stage_; }
    const std::string& model_name() const { return model_name_; }
    const std::vector<std::string>& stop_sequences() const { return stop_; }
    double temperature() const { return 0.0; }

    // Message contents joined with newlines; what scripted matchers search.
    std::string flattened() const;

    // Canonical wire-level description, used for hashing and sessions.
    json to_json() const;
    std::string digest() const;

    bool operator==(const LmRequest&) const = default;

private:
    std::vector<ChatMessage> messages_;
    int max_tokens_;
    Stage stage_;
    std::string model_name_;
    std::vector<std::string> stop_;
};

struct TokenBudget {
    int base = 300;
    int feedback = 600;
    int refiner = 600;

    int for_stage(Stage stage) const;
    void validate() const;

    // Per-task maxima: math and logic (300, 600, 600), QA (450, 600, 800).
    static TokenBudget for_task(Task task);

    bool operator==(const TokenBudget&) const = default;
};

void to_json(json& j, const TokenBudget& b);
void from_json(const json& j, TokenBudget& b);

std::string sha256_hex(std::string_view data);

class Client {
public:
    virtual ~Client() = default;

    // Rejects requests above the stage budget before anything is sent.
    std::string complete(const LmRequest& request);

    void set_budget(std::optional<TokenBudget> budget) { budget_ = budget; }
    const std::optional<TokenBudget>& budget() const { return budget_; }

protected:
    virtual std::string do_complete(const LmRequest& request) = 0;

private:
    std::optional<TokenBudget> budget_;
};

struct ScriptRule {
    // All substrings must occur in the flattened request.
    std::vector<std::string> contains;
    // Matches the n-th call (0-based) regardless of content.
    std::optional<std::size_t> position;
    std::string response;
    // Unlimited when absent.
    std::optional<std::size_t> max_uses;
};

void to_json(json& j, const ScriptRule& r);
void from_json(const json& j, ScriptRule& r);

// Deterministic offline client. Position rules take priority, then the first
// content rule with uses left, then the fallback.
class ScriptedClient : public Client {
public:
    explicit ScriptedClient(std::vector<ScriptRule> rules, std::optional<std::string> fallback = std::nullopt);

    // {"rules": [...], "fallback": "..."}
    static std::unique_ptr<ScriptedClient> from_file(const std::string& path);

    std::vector<LmRequest> call_log() const;
    std::size_t call_count() const;
    void reset();

protected:
    std::string do_complete(const LmRequest& request) override;

private:
    std::vector<ScriptRule> rules_;
    std::optional<std::string> fallback_;
    mutable std::mutex mu_;
    std::vector<std::size_t> uses_;
    std::vector<LmRequest> log_;
};

}  // namespace maf::lm

#include <gtest/gtest.h>

#include <httplib.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include "maf/lm/client.hpp"
#include "maf/lm/openai.hpp"
#include "maf/lm/session.hpp"

namespace maf::lm {
namespace {

namespace fs = std::filesystem;

LmRequest prompt(const std::string& text, int max_tokens = 100, Stage stage = Stage::Feedback) {
    return LmRequest::from_prompt(text, max_tokens, stage);
}

TEST(LmRequest, GreedyOnly) {
    EXPECT_THROW(LmRequest({{"user", "x"}}, 10, Stage::Base, "", {}, 0.7), InputError);
    EXPECT_NO_THROW(LmRequest({{"user", "x"}}, 10, Stage::Base));
    EXPECT_EQ(prompt("x").temperature(), 0.0);
    EXPECT_THROW(prompt("x", 0), InputError);
}

TEST(LmRequest, DigestIsStableAndContentSensitive) {
    EXPECT_EQ(prompt("abc").digest(), prompt("abc").digest());
    EXPECT_NE(prompt("abc").digest(), prompt("abd").digest());
    EXPECT_EQ(prompt("abc").digest().size(), 64u);
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(TokenBudget, PerTaskValues) {
    EXPECT_EQ(TokenBudget::for_task(Task::Math), (TokenBudget{300, 600, 600}));
    EXPECT_EQ(TokenBudget::for_task(Task::Logic), (TokenBudget{300, 600, 600}));
    EXPECT_EQ(TokenBudget::for_task(Task::Qa), (TokenBudget{450, 600, 800}));
    EXPECT_THROW((TokenBudget{0, 1, 1}).validate(), ConfigError);
}

TEST(ScriptedClient, SubstringRule) {
    ScriptedClient c({{{"2+2"}, std::nullopt, "4", std::nullopt}});
    EXPECT_EQ(c.complete(prompt("what is 2+2?")), "4");
    EXPECT_THROW(c.complete(prompt("what is 3+3?")), ScriptMissError);
    ASSERT_EQ(c.call_count(), 2u);
    EXPECT_EQ(c.call_log()[0].flattened(), "what is 2+2?");
}

TEST(ScriptedClient, PositionBeatsContentAndUsesAreCounted) {
    ScriptedClient c({{{"q"}, std::nullopt, "content", 1}, {{}, 2, "third", std::nullopt}}, "fallback");
    EXPECT_EQ(c.complete(prompt("q")), "content");
    EXPECT_EQ(c.complete(prompt("q")), "fallback");
    EXPECT_EQ(c.complete(prompt("q")), "third");
}

TEST(ScriptedClient, ReplayingSameSequenceIsDeterministic) {
    ScriptedClient c({{{"a"}, std::nullopt, "A", 1}, {{"a"}, std::nullopt, "A2", std::nullopt}});
    std::vector<std::string> first, second;
    for (auto s : {"a", "a", "a"}) first.push_back(c.complete(prompt(s)));
    c.reset();
    for (auto s : {"a", "a", "a"}) second.push_back(c.complete(prompt(s)));
    EXPECT_EQ(first, second);
    EXPECT_EQ(first, (std::vector<std::string>{"A", "A2", "A2"}));
}

TEST(Client, BudgetRejectedBeforeTransport) {
    ScriptedClient c({}, "x");
    c.set_budget(TokenBudget::for_task(Task::Math));
    EXPECT_NO_THROW(c.complete(prompt("p", 600, Stage::Feedback)));
    EXPECT_THROW(c.complete(prompt("p", 601, Stage::Feedback)), BudgetError);
    EXPECT_THROW(c.complete(prompt("p", 301, Stage::Base)), BudgetError);
    EXPECT_EQ(c.call_count(), 1u);
}

class TempFile {
public:
    TempFile() : path_(fs::temp_directory_path() / ("maf-session-" + std::to_string(::getpid()) + "-" +
                                                     std::to_string(counter_++) + ".jsonl")) {
        fs::remove(path_);
    }
    ~TempFile() { fs::remove(path_); }
    std::string str() const { return path_.string(); }

private:
    fs::path path_;
    static inline int counter_ = 0;
};

TEST(Session, RecordThenReplay) {
    TempFile file;
    ScriptedClient inner({{{"x"}, std::nullopt, "X1", 1}, {{"x"}, std::nullopt, "X2", std::nullopt},
                          {{"y"}, std::nullopt, "Y", std::nullopt}});
    {
        auto rec = record_and_replay(file.str(), SessionMode::Record, &inner);
        EXPECT_EQ(rec->complete(prompt("x")), "X1");
        EXPECT_EQ(rec->complete(prompt("y")), "Y");
        EXPECT_EQ(rec->complete(prompt("x")), "X2");
    }
    auto replay = record_and_replay(file.str(), SessionMode::Replay, nullptr);
    EXPECT_EQ(replay->complete(prompt("x")), "X1");
    EXPECT_EQ(replay->complete(prompt("y")), "Y");
    EXPECT_EQ(replay->complete(prompt("x")), "X2");
    EXPECT_EQ(replay->complete(prompt("x")), "X2");
}

TEST(Session, MutatedPromptMisses) {
    TempFile file;
    ScriptedClient inner({}, "r");
    {
        RecordingClient rec(inner, file.str());
        rec.complete(prompt("original"));
    }
    ReplayClient replay(file.str());
    try {
        replay.complete(prompt("original!"));
        FAIL();
    } catch (const ReplayMissError& e) {
        EXPECT_EQ(e.digest(), prompt("original!").digest());
    }
}

TEST(Session, EmptyFileMissesOnFirstRequest) {
    TempFile file;
    { std::ofstream(file.str()); }
    ReplayClient replay(file.str());
    EXPECT_THROW(replay.complete(prompt("anything")), ReplayMissError);
    EXPECT_THROW(ReplayClient("/nonexistent/session.jsonl"), ConfigError);
}

// Local OpenAI-compatible endpoint.
class FakeEndpoint {
public:
    FakeEndpoint() {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            int n = ++hits_;
            last_body_ = req.body;
            last_auth_ = req.get_header_value("Authorization");
            int status = n <= fail_first_ ? fail_status_ : 200;
            res.status = status;
            if (status == 200) {
                json body{{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", reply_}}}}})}};
                res.set_content(body.dump(), "application/json");
            } else {
                res.set_content(R"({"error":"nope"})", "application/json");
            }
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeEndpoint() {
        server_.stop();
        thread_.join();
    }

    EndpointConfig config() const {
        EndpointConfig c;
        c.base_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1";
        c.model = "test-model";
        c.timeout_s = 5;
        c.backoff_base_s = 0.001;
        return c;
    }

    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<int> hits_{0};
    int fail_first_ = 0;
    int fail_status_ = 500;
    std::string reply_ = "hello";
    std::string last_body_;
    std::string last_auth_;
};

TEST(OpenAiChatClient, WireFormat) {
    FakeEndpoint ep;
    OpenAiChatClient client(ep.config(), std::string("sk-test"));
    LmRequest req({{"user", "Q?"}}, 600, Stage::Feedback, "", {"\n\n"});
    EXPECT_EQ(client.complete(req), "hello");
    json sent = json::parse(ep.last_body_);
    EXPECT_EQ(sent["model"], "test-model");
    EXPECT_EQ(sent["max_tokens"], 600);
    EXPECT_EQ(sent["temperature"], 0);
    EXPECT_EQ(sent["messages"][0]["role"], "user");
    EXPECT_EQ(sent["messages"][0]["content"], "Q?");
    EXPECT_EQ(sent["stop"][0], "\n\n");
    EXPECT_EQ(ep.last_auth_, "Bearer sk-test");
}

TEST(OpenAiChatClient, RetriesTransientFailures) {
    FakeEndpoint ep;
    ep.fail_first_ = 2;
    OpenAiChatClient client(ep.config(), std::nullopt);
    EXPECT_EQ(client.complete(prompt("p")), "hello");
    EXPECT_EQ(ep.hits_.load(), 3);
}

TEST(OpenAiChatClient, GivesUpAfterThreeAttempts) {
    FakeEndpoint ep;
    ep.fail_first_ = 100;
    ep.fail_status_ = 503;
    OpenAiChatClient client(ep.config(), std::nullopt);
    EXPECT_THROW(client.complete(prompt("p")), TransportError);
    EXPECT_EQ(ep.hits_.load(), 3);
}

TEST(OpenAiChatClient, AuthErrorsAreNotRetried) {
    FakeEndpoint ep;
    ep.fail_first_ = 100;
    ep.fail_status_ = 401;
    OpenAiChatClient client(ep.config(), std::nullopt);
    EXPECT_THROW(client.complete(prompt("p")), AuthError);
    EXPECT_EQ(ep.hits_.load(), 1);
}

TEST(OpenAiChatClient, UnreachableEndpointIsTransportError) {
    EndpointConfig c;
    c.base_url = "http://127.0.0.1:1/v1";
    c.timeout_s = 1;
    c.backoff_base_s = 0.001;
    OpenAiChatClient client(c, std::nullopt);
    EXPECT_THROW(client.complete(prompt("p")), TransportError);
}

TEST(OpenAiChatClient, BudgetCheckedBeforeSending) {
    FakeEndpoint ep;
    OpenAiChatClient client(ep.config(), std::nullopt);
    client.set_budget(TokenBudget{300, 600, 600});
    auto before = OpenAiChatClient::total_requests();
    EXPECT_THROW(client.complete(prompt("p", 700, Stage::Feedback)), BudgetError);
    EXPECT_EQ(ep.hits_.load(), 0);
    EXPECT_EQ(OpenAiChatClient::total_requests(), before);
}

TEST(OpenAiChatClient, ResponseParsing) {
    EXPECT_EQ(OpenAiChatClient::parse_response(R"({"choices":[{"text":"legacy"}]})"), "legacy");
    EXPECT_THROW(OpenAiChatClient::parse_response(R"({"choices":[]})"), LmError);
    EXPECT_THROW(OpenAiChatClient::parse_response("not json"), LmError);
    EXPECT_THROW(OpenAiChatClient(EndpointConfig{"ftp://x", "m", "", 1, 3, 1, 1}, std::nullopt), ConfigError);
}

}  // namespace
}  // namespace maf::lm

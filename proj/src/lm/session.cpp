#include "maf/lm/session.hpp"

namespace maf::lm {

std::string_view to_string(SessionMode mode) {
    switch (mode) {
        case SessionMode::Live: return "live";
        case SessionMode::Record: return "record";
        case SessionMode::Replay: return "replay";
    }
    return "live";
}

SessionMode session_mode_from_string(std::string_view name) {
    if (name == "live") return SessionMode::Live;
    if (name == "record") return SessionMode::Record;
    if (name == "replay") return SessionMode::Replay;
    throw ConfigError("unknown session mode '" + std::string(name) + "' (expected live, record or replay)");
}

RecordingClient::RecordingClient(Client& inner, const std::string& session_path)
    : inner_(inner), out_(session_path, std::ios::app | std::ios::binary) {
    if (!out_) throw ConfigError("cannot open session file '" + session_path + "' for writing");
}

std::string RecordingClient::do_complete(const LmRequest& request) {
    std::string response = inner_.complete(request);
    json line{{"digest", request.digest()}, {"request", request.to_json()}, {"response", response}};
    std::lock_guard lock(mu_);
    out_ << line.dump() << '\n';
    out_.flush();
    return response;
}

ReplayClient::ReplayClient(const std::string& session_path) {
    std::ifstream in(session_path, std::ios::binary);
    if (!in) throw ConfigError("cannot read session file '" + session_path + "'");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            json j = json::parse(line);
            responses_[j.at("digest").get<std::string>()].push_back(j.at("response").get<std::string>());
        } catch (const json::exception& e) {
            throw ConfigError("session file '" + session_path + "' line " + std::to_string(lineno) +
                              " is malformed: " + e.what());
        }
    }
}

std::size_t ReplayClient::served() const {
    std::lock_guard lock(mu_);
    return served_;
}

std::string ReplayClient::do_complete(const LmRequest& request) {
    std::string digest = request.digest();
    std::lock_guard lock(mu_);
    auto it = responses_.find(digest);
    if (it == responses_.end()) throw ReplayMissError(digest);
    std::size_t& cur = cursor_[digest];
    const std::string& response = it->second[std::min(cur, it->second.size() - 1)];
    ++cur;
    ++served_;
    return response;
}

std::unique_ptr<Client> record_and_replay(const std::string& session_path, SessionMode mode, Client* live) {
    switch (mode) {
        case SessionMode::Record:
            if (!live) throw ConfigError("record mode needs an underlying client");
            return std::make_unique<RecordingClient>(*live, session_path);
        case SessionMode::Replay:
            return std::make_unique<ReplayClient>(session_path);
        case SessionMode::Live:
            break;
    }
    throw ConfigError("record_and_replay needs record or replay mode");
}

}  // namespace maf::lm

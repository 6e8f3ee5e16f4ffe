#pragma once

#include <cstddef>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "maf/lm/client.hpp"

namespace maf::lm {

enum class SessionMode { Live, Record, Replay };

std::string_view to_string(SessionMode mode);
SessionMode session_mode_from_string(std::string_view name);

// Session files are JSONL: {"digest": ..., "request": {...}, "response": ...}.

// Forwards to an inner client and appends every exchange to the session file.
class RecordingClient : public Client {
public:
    RecordingClient(Client& inner, const std::string& session_path);

protected:
    std::string do_complete(const LmRequest& request) override;

private:
    Client& inner_;
    std::mutex mu_;
    std::ofstream out_;
};

// Serves recorded responses by request digest. Repeated identical requests
// get the recorded responses in order; once they run out the last one is
// reused. An unknown digest throws ReplayMissError.
class ReplayClient : public Client {
public:
    explicit ReplayClient(const std::string& session_path);

    std::size_t served() const;

protected:
    std::string do_complete(const LmRequest& request) override;

private:
    std::map<std::string, std::vector<std::string>> responses_;
    std::map<std::string, std::size_t> cursor_;
    mutable std::mutex mu_;
    std::size_t served_ = 0;
};

// Opens a session: record mode wraps `live`, replay mode ignores it.
std::unique_ptr<Client> record_and_replay(const std::string& session_path, SessionMode mode, Client* live);

}  // namespace maf::lm

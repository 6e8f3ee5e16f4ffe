#include "maf/checkers/interpreter.hpp"

#include "maf/checkers/expression.hpp"

#include <fcntl.h>
#include <poll.h>
#include <sched.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <regex>
#include <thread>

namespace maf::checkers {

namespace fs = std::filesystem;

namespace {

class ProcessLimiter {
public:
    static ProcessLimiter& instance() {
        static ProcessLimiter limiter;
        return limiter;
    }

    void set_cap(unsigned cap) {
        std::lock_guard lock(mu_);
        cap_ = cap == 0 ? std::max(1u, std::thread::hardware_concurrency()) : cap;
        cv_.notify_all();
    }

    unsigned cap() {
        std::lock_guard lock(mu_);
        return cap_;
    }

    void acquire() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return active_ < cap_; });
        ++active_;
    }

    void release() {
        std::lock_guard lock(mu_);
        --active_;
        cv_.notify_one();
    }

private:
    ProcessLimiter() : cap_(std::max(1u, std::thread::hardware_concurrency())) {}

    std::mutex mu_;
    std::condition_variable cv_;
    unsigned cap_;
    unsigned active_ = 0;
};

struct Slot {
    Slot() { ProcessLimiter::instance().acquire(); }
    ~Slot() { ProcessLimiter::instance().release(); }
    Slot(const Slot&) = delete;
    Slot& operator=(const Slot&) = delete;
};

class TempDir {
public:
    TempDir() {
        std::string tmpl = (fs::temp_directory_path() / "maf-run-XXXXXX").string();
        if (!::mkdtemp(tmpl.data())) throw Error(std::string("mkdtemp failed: ") + std::strerror(errno));
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

class Fd {
public:
    Fd() = default;
    explicit Fd(int fd) : fd_(fd) {}
    ~Fd() { reset(); }
    Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    Fd& operator=(Fd&& o) noexcept {
        if (this != &o) {
            reset();
            fd_ = std::exchange(o.fd_, -1);
        }
        return *this;
    }
    int get() const { return fd_; }
    void reset() {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

private:
    int fd_ = -1;
};

void make_pipe(Fd& read_end, Fd& write_end) {
    int fds[2];
    if (::pipe2(fds, O_CLOEXEC) != 0) throw Error(std::string("pipe failed: ") + std::strerror(errno));
    read_end = Fd(fds[0]);
    write_end = Fd(fds[1]);
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
    for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size()) {
        s.replace(pos, from.size(), to);
    }
    return s;
}

}  // namespace

void set_process_cap(unsigned cap) { ProcessLimiter::instance().set_cap(cap); }
unsigned process_cap() { return ProcessLimiter::instance().cap(); }

ExecutionResult run_sandboxed(const std::vector<std::string>& argv_template, const std::string& program_text,
                              const std::string& file_name, const SandboxPolicy& policy) {
    if (argv_template.empty()) throw ConfigError("interpreter command is empty");
    Slot slot;
    TempDir dir;
    fs::path program_path = dir.path() / file_name;
    {
        std::ofstream out(program_path, std::ios::binary);
        out << program_text;
        if (!program_text.empty() && program_text.back() != '\n') out << '\n';
    }

    // Everything the child needs is prepared before fork.
    std::vector<std::string> args;
    for (const auto& a : argv_template) args.push_back(replace_all(a, "{file}", program_path.string()));
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);

    const char* path_env = std::getenv("PATH");
    std::vector<std::string> env_strings{
        std::string("PATH=") + (path_env ? path_env : "/usr/local/bin:/usr/bin:/bin"),
        "HOME=" + dir.path().string(),
        "TMPDIR=" + dir.path().string(),
        "LANG=C.UTF-8",
        "PYTHONDONTWRITEBYTECODE=1",
        "PYTHONHASHSEED=0",
        "PYTHONIOENCODING=utf-8",
    };
    std::vector<char*> envp;
    for (auto& e : env_strings) envp.push_back(e.data());
    envp.push_back(nullptr);
    std::string workdir = dir.path().string();

    Fd out_r, out_w, err_r, err_w, status_r, status_w;
    make_pipe(out_r, out_w);
    make_pipe(err_r, err_w);
    make_pipe(status_r, status_w);

    rlim_t mem_bytes = static_cast<rlim_t>(policy.memory_limit_mb) * 1024 * 1024;
    bool isolate = policy.isolate_network;

    auto start = std::chrono::steady_clock::now();
    pid_t pid = ::fork();
    if (pid < 0) throw Error(std::string("fork failed: ") + std::strerror(errno));
    if (pid == 0) {
        ::setpgid(0, 0);
        char isolated = 'n';
        if (isolate && ::unshare(CLONE_NEWNET) == 0) isolated = 'y';
        (void)!::write(status_w.get(), &isolated, 1);
        if (::chdir(workdir.c_str()) != 0) _exit(126);
        ::dup2(out_w.get(), STDOUT_FILENO);
        ::dup2(err_w.get(), STDERR_FILENO);
        int devnull = ::open("/dev/null", O_RDONLY);
        if (devnull >= 0) ::dup2(devnull, STDIN_FILENO);
        if (mem_bytes > 0) {
            rlimit lim{mem_bytes, mem_bytes};
            ::setrlimit(RLIMIT_AS, &lim);
        }
        ::execvpe(argv[0], argv.data(), envp.data());
        int err = errno;
        (void)!::write(status_w.get(), &err, sizeof(err));
        _exit(127);
    }
    ::setpgid(pid, pid);
    out_w.reset();
    err_w.reset();
    status_w.reset();

    ExecutionResult result;
    char isolated = 'n';
    if (::read(status_r.get(), &isolated, 1) == 1) result.network_isolated = isolated == 'y';
    int exec_errno = 0;
    bool exec_failed = ::read(status_r.get(), &exec_errno, sizeof(exec_errno)) == sizeof(exec_errno);

    auto deadline = start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                std::chrono::duration<double>(policy.timeout_s));
    bool killed = false;
    auto kill_group = [&] {
        if (!killed) {
            ::kill(-pid, SIGKILL);
            ::kill(pid, SIGKILL);
            killed = true;
        }
    };

    pollfd fds[2] = {{out_r.get(), POLLIN, 0}, {err_r.get(), POLLIN, 0}};
    std::string* sinks[2] = {&result.stdout_text, &result.stderr_text};
    int open_count = 2;
    char buf[8192];
    while (open_count > 0) {
        auto now = std::chrono::steady_clock::now();
        if (now >= deadline) {
            result.timed_out = true;
            kill_group();
            break;
        }
        int wait_ms = static_cast<int>(
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count()) + 1;
        int rc = ::poll(fds, 2, std::min(wait_ms, 100));
        if (rc < 0) {
            if (errno == EINTR) continue;
            break;
        }
        for (int i = 0; i < 2; ++i) {
            if (fds[i].fd < 0 || !(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
            ssize_t n = ::read(fds[i].fd, buf, sizeof(buf));
            if (n <= 0) {
                fds[i].fd = -1;
                --open_count;
            } else if (sinks[i]->size() < policy.max_output_bytes) {
                sinks[i]->append(buf, std::min<std::size_t>(n, policy.max_output_bytes - sinks[i]->size()));
            }
        }
    }

    int status = 0;
    for (;;) {
        pid_t w = ::waitpid(pid, &status, WNOHANG);
        if (w == pid) break;
        if (w < 0 && errno != EINTR) break;
        if (std::chrono::steady_clock::now() >= deadline) {
            result.timed_out = result.timed_out || !killed;
            kill_group();
            ::waitpid(pid, &status, 0);
            break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    // Stray descendants never outlive the call.
    ::kill(-pid, SIGKILL);
    result.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (exec_failed) {
        throw ConfigError("cannot execute interpreter '" + args[0] + "': " + std::strerror(exec_errno));
    }
    if (WIFEXITED(status)) {
        result.exit_status = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
        result.exit_status = 128 + WTERMSIG(status);
    }
    if (result.timed_out && result.exit_status == 0) result.exit_status = 128 + SIGKILL;
    if (!result.timed_out && result.exit_status != 0) {
        result.syntax_error = parse_syntax_diagnostic(result.stderr_text);
    }
    return result;
}

std::optional<SyntaxErrorInfo> parse_syntax_diagnostic(const std::string& stderr_text) {
    static const std::regex kind_re(R"(^(?:Sorry: )?(SyntaxError|IndentationError|TabError): ?(.*)$)");
    static const std::regex line_re(R"(line (\d+))");
    std::optional<SyntaxErrorInfo> info;
    std::size_t start = 0;
    std::size_t last_line = 0;
    while (start <= stderr_text.size()) {
        auto nl = stderr_text.find('\n', start);
        std::string line = stderr_text.substr(start, nl == std::string::npos ? std::string::npos : nl - start);
        for (auto it = std::sregex_iterator(line.begin(), line.end(), line_re); it != std::sregex_iterator();
             ++it) {
            last_line = std::stoul((*it)[1].str());
        }
        std::smatch m;
        if (std::regex_search(line, m, kind_re)) {
            std::string msg = m[1].str() + ": " + m[2].str();
            info = SyntaxErrorInfo{msg, last_line};
        }
        if (nl == std::string::npos) break;
        start = nl + 1;
    }
    if (info) info->line = last_line;
    return info;
}

ExecutionResult execute_program(const Solution& solution, const InterpreterConfig& config,
                                const SandboxPolicy& policy) {
    if (solution.kind() != SolutionKind::Program) throw InputError("execute_program needs a program solution");
    return run_sandboxed(config.run_cmd, solution.raw_text(), config.file_name, policy);
}

Feedback check_program_syntax(const Solution& solution, const InterpreterConfig& config,
                              const std::string& module_name, const std::string& ok_marker) {
    if (solution.kind() != SolutionKind::Program) {
        throw InputError("syntax checking needs a program solution");
    }
    SandboxPolicy policy;
    policy.timeout_s = config.timeout_s;
    ExecutionResult r = run_sandboxed(config.syntax_cmd, solution.raw_text(), config.file_name, policy);

    std::size_t last_step = solution.steps().empty() ? 0 : solution.steps().size() - 1;
    StepFeedback entry;
    if (r.timed_out) {
        entry = {0, false, "syntax check timed out after " + format_number(config.timeout_s) + " s"};
    } else if (r.exit_status == 0) {
        entry = {0, true, ok_marker};
    } else {
        std::size_t line = 1;
        std::string message;
        if (r.syntax_error) {
            line = std::max<std::size_t>(1, r.syntax_error->line);
            message = r.syntax_error->message;
        } else {
            auto trimmed = r.stderr_text;
            while (!trimmed.empty() && (trimmed.back() == '\n' || trimmed.back() == ' ')) trimmed.pop_back();
            auto nl = trimmed.rfind('\n');
            message = nl == std::string::npos ? trimmed : trimmed.substr(nl + 1);
            if (message.empty()) message = "interpreter exited with status " + std::to_string(r.exit_status);
        }
        entry = {std::min(line - 1, last_step), false, message};
    }
    std::string raw = "Step " + std::to_string(entry.step_index + 1) + ": " + entry.comment;
    Feedback fb = make_feedback(module_name, ErrorCategory::ProgramSyntax, {entry}, raw);
    return fb;
}

}  // namespace maf::checkers

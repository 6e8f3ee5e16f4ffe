#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "maf/core.hpp"

namespace maf::checkers {

struct SyntaxErrorInfo {
    std::string message;
    std::size_t line = 0;  // 1-based, as reported by the interpreter
};

struct ExecutionResult {
    std::string stdout_text;
    std::string stderr_text;
    // Exit code, or 128 + signal number when the process was killed.
    int exit_status = 0;
    double wall_time = 0.0;
    bool timed_out = false;
    std::optional<SyntaxErrorInfo> syntax_error;
    bool network_isolated = false;
};

struct SandboxPolicy {
    double timeout_s = 10.0;
    // Runs the child in a fresh network namespace when the kernel allows it.
    bool isolate_network = true;
    std::size_t max_output_bytes = 1 << 20;
    std::size_t memory_limit_mb = 2048;
};

// Command templates are argv vectors; "{file}" is replaced by the program path.
struct InterpreterConfig {
    std::vector<std::string> run_cmd{"python3", "{file}"};
    std::vector<std::string> syntax_cmd{"python3", "-m", "py_compile", "{file}"};
    std::string file_name = "program.py";
    double timeout_s = 10.0;
    // Concurrent interpreter processes; 0 means the number of CPUs.
    unsigned process_cap = 0;
};

// Caps the number of interpreter processes alive at once across threads.
void set_process_cap(unsigned cap);
unsigned process_cap();

// Runs argv (with {file} bound to a fresh temp file holding program_text)
// inside a private temp working directory that is removed afterwards. Throws
// ConfigError when the binary cannot be executed.
ExecutionResult run_sandboxed(const std::vector<std::string>& argv_template, const std::string& program_text,
                              const std::string& file_name, const SandboxPolicy& policy);

// Pulls "<Kind>Error: message" and the last reported line number out of a
// Python-style diagnostic. Only syntax-class errors are returned.
std::optional<SyntaxErrorInfo> parse_syntax_diagnostic(const std::string& stderr_text);

ExecutionResult execute_program(const Solution& solution, const InterpreterConfig& config,
                                const SandboxPolicy& policy);

Feedback check_program_syntax(const Solution& solution, const InterpreterConfig& config,
                              const std::string& module_name = "syntax",
                              const std::string& ok_marker = std::string(kDefaultOkMarker));

}  // namespace maf::checkers

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "maf/checkers/interpreter.hpp"
#include "maf/eval.hpp"
#include "maf/lm/openai.hpp"
#include "maf/lm/session.hpp"
#include "maf/orchestrator.hpp"

namespace maf::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitConfig = 1,
    kExitUsage = 2,
    kExitTransport = 3,
};

struct LmSettings {
    // "openai" talks to an OpenAI-compatible endpoint, "scripted" answers
    // from a rule file.
    std::string backend = "openai";
    std::optional<std::string> script_path;
    lm::EndpointConfig endpoint;
};

struct SessionSettings {
    lm::SessionMode mode = lm::SessionMode::Live;
    std::optional<std::string> path;
};

struct AppConfig {
    Task task = Task::Math;
    std::string dataset;
    eval::DatasetFormat dataset_format = eval::DatasetFormat::JsonlMath;
    std::string prompt_dir;
    std::string out_dir = "out";
    std::size_t parallelism = 1;
    // Reserved. Decoding is greedy so nothing is sampled.
    std::uint64_t seed = 0;
    LmSettings lm;
    SessionSettings session;
    checkers::InterpreterConfig interpreter;
    orchestrator::RunConfig run;

    // Throws ConfigError naming the offending field.
    void validate() const;
};

// Relative paths are resolved against base_dir. Missing run.modules,
// run.budgets and run.decoding.model take task defaults.
AppConfig parse_app_config(const json& j, const std::string& base_dir);
AppConfig load_app_config(const std::string& path);
json app_config_json(const AppConfig& config);

struct Overrides {
    std::optional<std::size_t> max_iterations;
    std::optional<std::size_t> report_iteration;
    bool oracle = false;
    // Keeps only these modules, in this order.
    std::optional<std::vector<std::string>> modules;
    std::optional<lm::SessionMode> session;
    std::optional<std::string> session_path;
    std::optional<std::string> out_dir;
    std::optional<std::size_t> parallelism;
};

void apply_overrides(AppConfig& config, const Overrides& overrides);

// Identifies the experiment a run directory belongs to.
json experiment_json(const AppConfig& config);

// Trace file name for a problem id.
std::string trace_file_name(const std::string& problem_id);

int cmd_run(const std::string& config_path, const Overrides& overrides, std::ostream& out, std::ostream& err);

struct CheckOptions {
    std::string problem;
    std::optional<SolutionKind> kind;
};

int cmd_check(const std::string& solution_file, const std::vector<std::string>& module_names,
              const std::string& config_path, const CheckOptions& options, std::ostream& out, std::ostream& err);

int cmd_ablate(const std::string& config_path, eval::AblationPlan plan, const std::vector<std::string>& remove,
               const Overrides& overrides, std::ostream& out, std::ostream& err);

// Accepts a run directory or its traces/ subdirectory.
int cmd_report(const std::string& trace_dir, const std::optional<std::string>& out_dir, std::ostream& out,
               std::ostream& err);

}  // namespace maf::cli

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "maf/checkers/interpreter.hpp"
#include "maf/core.hpp"
#include "maf/feedback.hpp"
#include "maf/orchestrator.hpp"

namespace maf::eval {

class DatasetError : public InputError {
public:
    using InputError::InputError;
};

enum class DatasetFormat { JsonlMath, JsonlQa, JsonlLogic };

std::string_view to_string(DatasetFormat format);
DatasetFormat dataset_format_from_string(std::string_view name);
DatasetFormat format_for(Task task);
Task task_for(DatasetFormat format);

// One JSON object per line: {"id", "question", "passage"?, "gold_answer",
// "metadata"?}. Blank lines are skipped. Throws DatasetError naming the
// record on duplicate ids, missing gold answers or malformed lines.
std::vector<ProblemRecord> load_dataset(const std::string& path, DatasetFormat format);
std::vector<ProblemRecord> parse_dataset(const std::string& text, DatasetFormat format,
                                         const std::string& origin = "<memory>");
std::string dataset_to_jsonl(const std::vector<ProblemRecord>& records);

inline constexpr std::string_view kUnparseable = "[unparseable]";

// Trims, collapses whitespace, drops a trailing period, removes thousands
// separators, currency and percent signs from numbers, and lowercases spans.
std::string normalize_answer(std::string_view text);

// program: run it and take the last number printed
// chain of thought: the phrase after the last "answer is", else the last
//                   number of the last nonblank step
// entailment tree: the conclusion after the last "->" without its label
// Returns kUnparseable when nothing can be extracted.
std::string extract_answer(const Solution& solution, const checkers::InterpreterConfig& interpreter = {});

// Numbers within relative 1e-6, dates component-wise, spans after
// normalization, ignoring case.
bool oracle_verify(const std::string& answer, const std::string& gold);

// 100 * correct / total, rounded to one decimal. Throws InputError when empty.
double solve_rate(const std::vector<bool>& results);

class TaskAnswerOracle : public orchestrator::AnswerOracle {
public:
    explicit TaskAnswerOracle(checkers::InterpreterConfig interpreter = {}) : interpreter_(std::move(interpreter)) {}

    std::string extract(const Solution& solution, const ProblemRecord& problem) const override;
    bool verify(const std::string& answer, const std::string& gold) const override;

private:
    checkers::InterpreterConfig interpreter_;
};

struct ProblemResult {
    std::string id;
    std::string gold;
    // Index k is the answer at iteration boundary k, 0..T.
    std::vector<std::string> answers;
    std::vector<bool> standard_correct;
    // Once correct, stays correct.
    std::vector<bool> oracle_correct;
    StopReason stop_reason = StopReason::MaxIterations;
    std::size_t iterations = 0;
    std::optional<std::string> failure;
};

struct CurvePoint {
    std::size_t iteration = 0;
    double standard = 0.0;
    double oracle = 0.0;
};

struct RunReport {
    std::string variant = "full";
    std::size_t max_iterations = 0;
    std::size_t report_iteration = 0;
    std::vector<std::string> modules;
    json config = json::object();
    std::string config_digest;
    std::vector<ProblemResult> problems;
    std::vector<CurvePoint> curve;
    double standard_solve_rate = 0.0;
    double oracle_solve_rate = 0.0;
    std::size_t aborted = 0;
};

void to_json(json& j, const ProblemResult& r);
void to_json(json& j, const CurvePoint& p);
void to_json(json& j, const RunReport& r);

std::string config_digest(const json& config);

// Folds traces into a report ordered by problem id. Solutions without a
// stored answer are counted as unparseable.
RunReport build_report(std::vector<RunTrace> traces, std::size_t max_iterations, std::size_t report_iteration,
                       const json& config = json::object(), const std::vector<std::string>& modules = {},
                       const std::string& variant = "full");

std::string report_json(const RunReport& report);
std::string render_report_text(const RunReport& report);
// iteration,standard,oracle
std::string render_curve_csv(const RunReport& report);

struct RunnerContext {
    orchestrator::Agents agents;
    const orchestrator::PromptSet* prompts = nullptr;
    feedback::RegistryOptions registry_options;
    const orchestrator::AnswerOracle* oracle = nullptr;
    std::size_t parallelism = 1;
    // Called once per finished trace, serialized.
    std::function<void(const RunTrace&)> on_trace;
};

// Runs every problem, at most `parallelism` at a time. The result is ordered
// by problem id.
std::vector<RunTrace> run_dataset(const std::vector<ProblemRecord>& problems, const orchestrator::RunConfig& config,
                                  const RunnerContext& ctx);

enum class AblationPlan { LeaveOneOut, StrategySweep };

std::string_view to_string(AblationPlan plan);
AblationPlan ablation_plan_from_string(std::string_view name);

struct AblationVariant {
    std::string label;
    orchestrator::RunConfig config;
    std::optional<std::string> removed_module;
};

// Leave-one-out drops each removable module in turn (or only those named in
// `remove`); the program syntax checker is never removable for program tasks.
// Strategy sweep yields mixed, all-eager and all-lazy.
std::vector<AblationVariant> plan_ablation(const orchestrator::RunConfig& config, AblationPlan plan, Task task,
                                           const std::vector<std::string>& remove = {});

std::vector<RunReport> run_ablation(const orchestrator::RunConfig& config, const std::vector<ProblemRecord>& dataset,
                                    AblationPlan plan, const RunnerContext& ctx,
                                    const std::vector<std::string>& remove = {});

// Comparison table with signed deltas against the baseline report.
std::string render_ablation_table(const RunReport& baseline, const std::vector<RunReport>& variants);

}  // namespace maf::eval

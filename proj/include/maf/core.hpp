#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace maf {

using json = nlohmann::json;

// Base of every typed error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InputError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class SerializationError : public Error {
public:
    using Error::Error;
};

enum class ErrorCategory {
    Arithmetic,
    ProgramSyntax,
    VariableNaming,
    MissingStep,
    Coherency,
    Redundancy,
    Repetition,
    Hallucination,
    Commonsense,
    Factuality,
    Grammar,
};

inline constexpr std::size_t kErrorCategoryCount = 11;

const std::vector<ErrorCategory>& all_error_categories();
std::string_view to_string(ErrorCategory category);
ErrorCategory error_category_from_string(std::string_view name);

enum class SolutionKind { Program, ChainOfThought, EntailmentTree };

std::string_view to_string(SolutionKind kind);
SolutionKind solution_kind_from_string(std::string_view name);

enum class RefineMode { Eager, Lazy };

std::string_view to_string(RefineMode mode);
RefineMode refine_mode_from_string(std::string_view name);

enum class Backend { Arithmetic, Interpreter, LmPrompt };

std::string_view to_string(Backend backend);
Backend backend_from_string(std::string_view name);

enum class Task { Math, Logic, Qa };

std::string_view to_string(Task task);
Task task_from_string(std::string_view name);

// Solutions produced for a task: math is program-of-thought, logic renders an
// entailment tree, QA is a chain of thought.
SolutionKind solution_kind_for(Task task);

inline constexpr std::string_view kDefaultOkMarker = "looks good";

struct ReasoningStep {
    std::size_t index = 0;
    std::string text;

    bool operator==(const ReasoningStep&) const = default;
};

// A candidate answer. Steps are the physical lines of raw_text, so joining
// them with '\n' gives raw_text back exactly.
class Solution {
public:
    Solution() = default;

    SolutionKind kind() const { return kind_; }
    const std::vector<ReasoningStep>& steps() const { return steps_; }
    const std::string& raw_text() const { return raw_text_; }
    const std::optional<std::string>& extracted_answer() const { return extracted_answer_; }
    bool empty() const { return steps_.empty(); }

    Solution with_answer(std::string answer) const;

    bool operator==(const Solution&) const = default;

    friend Solution segment_solution(std::string_view raw_text, SolutionKind kind);
    friend void from_json(const json& j, Solution& s);

private:
    SolutionKind kind_ = SolutionKind::Program;
    std::vector<ReasoningStep> steps_;
    std::string raw_text_;
    std::optional<std::string> extracted_answer_;
};

// Splits on '\n'; blank lines stay as steps. Throws InputError on empty input.
Solution segment_solution(std::string_view raw_text, SolutionKind kind);

std::string join_steps(const std::vector<ReasoningStep>& steps);

struct StepFeedback {
    std::size_t step_index = 0;
    bool ok = false;
    std::string comment;

    bool operator==(const StepFeedback&) const = default;
};

struct Feedback {
    std::string module_name;
    ErrorCategory category = ErrorCategory::Arithmetic;
    std::vector<StepFeedback> step_feedback;
    bool revision_required = false;
    std::string raw_text;
    // Set when the critic output had no step structure and was kept whole.
    bool unparsed = false;

    bool operator==(const Feedback&) const = default;
};

// Builds a Feedback with revision_required derived from the step flags.
Feedback make_feedback(std::string module_name, ErrorCategory category,
                       std::vector<StepFeedback> steps, std::string raw_text);

struct FeedbackModuleSpec {
    std::string name;
    ErrorCategory category = ErrorCategory::Arithmetic;
    RefineMode mode = RefineMode::Lazy;
    Backend backend = Backend::LmPrompt;
    std::optional<std::string> prompt_path;
    int max_feedback_tokens = 600;

    bool operator==(const FeedbackModuleSpec&) const = default;
};

// Checks field-level invariants; prompt readability is checked when loading.
void validate(const FeedbackModuleSpec& spec);
void validate_unique_names(const std::vector<FeedbackModuleSpec>& specs);

struct ProblemRecord {
    std::string id;
    Task task = Task::Math;
    std::string question;
    std::optional<std::string> passage;
    std::string gold_answer;
    json metadata = json::object();

    // Problem text shown to the generator and critics.
    std::string prompt_text() const;

    bool operator==(const ProblemRecord&) const = default;
};

struct EagerEvent {
    std::string module_name;
    Feedback feedback;
    Solution solution_before;
    Solution solution_after;

    bool operator==(const EagerEvent&) const = default;
};

struct IterationRecord {
    std::size_t iteration = 1;
    std::vector<EagerEvent> eager_events;
    std::vector<Feedback> lazy_feedbacks;
    std::optional<std::string> combined_lazy_feedback;
    Solution solution_out;
    std::vector<std::string> notes;

    bool operator==(const IterationRecord&) const = default;
};

enum class StopReason { MaxIterations, OracleCorrect, CleanFeedback, Aborted };

std::string_view to_string(StopReason reason);
StopReason stop_reason_from_string(std::string_view name);

struct RunTrace {
    std::string problem_id;
    Task task = Task::Math;
    std::optional<std::string> gold_answer;
    std::size_t max_iterations = 0;
    bool oracle_mode = false;
    Solution initial_solution;
    std::vector<IterationRecord> iterations;
    Solution final_solution;
    StopReason stop_reason = StopReason::MaxIterations;
    std::size_t lm_call_count = 0;
    std::optional<std::string> failure;

    // Solution at iteration boundary k (0 = initial). Past the recorded
    // iterations the final solution carries forward.
    const Solution& solution_at(std::size_t k) const;

    bool operator==(const RunTrace&) const = default;
};

// JSON mapping used by the trace format.
void to_json(json& j, ErrorCategory c);
void from_json(const json& j, ErrorCategory& c);
void to_json(json& j, const ReasoningStep& s);
void from_json(const json& j, ReasoningStep& s);
void to_json(json& j, const Solution& s);
void from_json(const json& j, Solution& s);
void to_json(json& j, const StepFeedback& f);
void from_json(const json& j, StepFeedback& f);
void to_json(json& j, const Feedback& f);
void from_json(const json& j, Feedback& f);
void to_json(json& j, const FeedbackModuleSpec& s);
void from_json(const json& j, FeedbackModuleSpec& s);
void to_json(json& j, const ProblemRecord& p);
void from_json(const json& j, ProblemRecord& p);
void to_json(json& j, const EagerEvent& e);
void from_json(const json& j, EagerEvent& e);
void to_json(json& j, const IterationRecord& r);
void from_json(const json& j, IterationRecord& r);
void to_json(json& j, const RunTrace& t);
void from_json(const json& j, RunTrace& t);

// One trace per line.
std::string to_jsonl_line(const RunTrace& trace);
RunTrace trace_from_jsonl_line(std::string_view line);

}  // namespace maf

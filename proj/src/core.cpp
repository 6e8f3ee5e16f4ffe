#include "maf/core.hpp"

#include <algorithm>
#include <array>
#include <utility>

namespace maf {

namespace {

template <typename Enum, std::size_t N>
using NameTable = std::array<std::pair<Enum, std::string_view>, N>;

constexpr NameTable<ErrorCategory, kErrorCategoryCount> kCategoryNames{{
    {ErrorCategory::Arithmetic, "Arithmetic"},
    {ErrorCategory::ProgramSyntax, "ProgramSyntax"},
    {ErrorCategory::VariableNaming, "VariableNaming"},
    {ErrorCategory::MissingStep, "MissingStep"},
    {ErrorCategory::Coherency, "Coherency"},
    {ErrorCategory::Redundancy, "Redundancy"},
    {ErrorCategory::Repetition, "Repetition"},
    {ErrorCategory::Hallucination, "Hallucination"},
    {ErrorCategory::Commonsense, "Commonsense"},
    {ErrorCategory::Factuality, "Factuality"},
    {ErrorCategory::Grammar, "Grammar"},
}};

constexpr NameTable<SolutionKind, 3> kKindNames{{
    {SolutionKind::Program, "program"},
    {SolutionKind::ChainOfThought, "chain-of-thought"},
    {SolutionKind::EntailmentTree, "entailment-tree"},
}};

constexpr NameTable<RefineMode, 2> kModeNames{{
    {RefineMode::Eager, "eager"},
    {RefineMode::Lazy, "lazy"},
}};

constexpr NameTable<Backend, 3> kBackendNames{{
    {Backend::Arithmetic, "tool:arithmetic"},
    {Backend::Interpreter, "tool:interpreter"},
    {Backend::LmPrompt, "lm-prompt"},
}};

constexpr NameTable<Task, 3> kTaskNames{{
    {Task::Math, "math"},
    {Task::Logic, "logic"},
    {Task::Qa, "qa"},
}};

constexpr NameTable<StopReason, 4> kStopNames{{
    {StopReason::MaxIterations, "max_iterations"},
    {StopReason::OracleCorrect, "oracle_correct"},
    {StopReason::CleanFeedback, "clean_feedback"},
    {StopReason::Aborted, "aborted"},
}};

template <typename Enum, std::size_t N>
std::string_view name_of(const NameTable<Enum, N>& table, Enum value) {
    for (const auto& [v, name] : table) {
        if (v == value) return name;
    }
    throw SerializationError("enum value out of range");
}

template <typename Enum, std::size_t N>
Enum value_of(const NameTable<Enum, N>& table, std::string_view name, std::string_view what) {
    for (const auto& [v, n] : table) {
        if (n == name) return v;
    }
    throw SerializationError("unknown " + std::string(what) + " '" + std::string(name) + "'");
}

template <typename T>
std::optional<T> optional_field(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<T>();
}

template <typename T>
void put_optional(json& j, const char* key, const std::optional<T>& value) {
    if (value) {
        j[key] = *value;
    } else {
        j[key] = nullptr;
    }
}

}  // namespace

const std::vector<ErrorCategory>& all_error_categories() {
    static const std::vector<ErrorCategory> all = [] {
        std::vector<ErrorCategory> v;
        for (const auto& [c, _] : kCategoryNames) v.push_back(c);
        return v;
    }();
    return all;
}

std::string_view to_string(ErrorCategory category) { return name_of(kCategoryNames, category); }
ErrorCategory error_category_from_string(std::string_view name) {
    return value_of(kCategoryNames, name, "error category");
}

std::string_view to_string(SolutionKind kind) { return name_of(kKindNames, kind); }
SolutionKind solution_kind_from_string(std::string_view name) {
    return value_of(kKindNames, name, "solution kind");
}

std::string_view to_string(RefineMode mode) { return name_of(kModeNames, mode); }
RefineMode refine_mode_from_string(std::string_view name) {
    return value_of(kModeNames, name, "refine mode");
}

std::string_view to_string(Backend backend) { return name_of(kBackendNames, backend); }
Backend backend_from_string(std::string_view name) {
    return value_of(kBackendNames, name, "backend");
}

std::string_view to_string(Task task) { return name_of(kTaskNames, task); }
Task task_from_string(std::string_view name) { return value_of(kTaskNames, name, "task"); }

std::string_view to_string(StopReason reason) { return name_of(kStopNames, reason); }
StopReason stop_reason_from_string(std::string_view name) {
    return value_of(kStopNames, name, "stop reason");
}

SolutionKind solution_kind_for(Task task) {
    switch (task) {
        case Task::Math: return SolutionKind::Program;
        case Task::Logic: return SolutionKind::EntailmentTree;
        case Task::Qa: return SolutionKind::ChainOfThought;
    }
    return SolutionKind::ChainOfThought;
}

Solution segment_solution(std::string_view raw_text, SolutionKind kind) {
    if (raw_text.empty()) throw InputError("cannot segment an empty solution");
    Solution s;
    s.kind_ = kind;
    s.raw_text_ = std::string(raw_text);
    std::size_t start = 0;
    for (;;) {
        auto nl = raw_text.find('\n', start);
        auto line = raw_text.substr(start, nl == std::string_view::npos ? nl : nl - start);
        s.steps_.push_back({s.steps_.size(), std::string(line)});
        if (nl == std::string_view::npos) break;
        start = nl + 1;
    }
    return s;
}

std::string join_steps(const std::vector<ReasoningStep>& steps) {
    std::string out;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (i) out += '\n';
        out += steps[i].text;
    }
    return out;
}

Solution Solution::with_answer(std::string answer) const {
    Solution copy = *this;
    copy.extracted_answer_ = std::move(answer);
    return copy;
}

Feedback make_feedback(std::string module_name, ErrorCategory category,
                       std::vector<StepFeedback> steps, std::string raw_text) {
    Feedback fb;
    fb.module_name = std::move(module_name);
    fb.category = category;
    fb.revision_required = std::any_of(steps.begin(), steps.end(),
                                       [](const StepFeedback& s) { return !s.ok; });
    fb.step_feedback = std::move(steps);
    fb.raw_text = std::move(raw_text);
    return fb;
}

void validate(const FeedbackModuleSpec& spec) {
    if (spec.name.empty()) throw ConfigError("feedback module name must not be empty");
    if (spec.max_feedback_tokens <= 0) {
        throw ConfigError("module '" + spec.name + "': max_feedback_tokens must be positive");
    }
    if (spec.backend == Backend::LmPrompt && (!spec.prompt_path || spec.prompt_path->empty())) {
        throw ConfigError("module '" + spec.name + "': lm-prompt backend requires prompt_path");
    }
    if (spec.backend != Backend::LmPrompt && spec.prompt_path) {
        throw ConfigError("module '" + spec.name + "': prompt_path is only valid for lm-prompt");
    }
}

void validate_unique_names(const std::vector<FeedbackModuleSpec>& specs) {
    for (std::size_t i = 0; i < specs.size(); ++i) {
        for (std::size_t j = i + 1; j < specs.size(); ++j) {
            if (specs[i].name == specs[j].name) {
                throw ConfigError("duplicate feedback module name '" + specs[i].name + "'");
            }
        }
    }
}

std::string ProblemRecord::prompt_text() const {
    if (passage && !passage->empty()) {
        return "Passage: " + *passage + "\nQuestion: " + question;
    }
    return question;
}

const Solution& RunTrace::solution_at(std::size_t k) const {
    if (k == 0) return initial_solution;
    if (k <= iterations.size()) return iterations[k - 1].solution_out;
    return iterations.empty() ? initial_solution : iterations.back().solution_out;
}

// ---- JSON ----

void to_json(json& j, ErrorCategory c) { j = std::string(to_string(c)); }
void from_json(const json& j, ErrorCategory& c) { c = error_category_from_string(j.get<std::string>()); }

void to_json(json& j, const ReasoningStep& s) { j = json{{"index", s.index}, {"text", s.text}}; }
void from_json(const json& j, ReasoningStep& s) {
    s.index = j.at("index").get<std::size_t>();
    s.text = j.at("text").get<std::string>();
}

void to_json(json& j, const Solution& s) {
    j = json{{"kind", to_string(s.kind())}, {"steps", s.steps()}, {"raw_text", s.raw_text()}};
    put_optional(j, "extracted_answer", s.extracted_answer());
}

void from_json(const json& j, Solution& s) {
    s.kind_ = solution_kind_from_string(j.at("kind").get<std::string>());
    s.steps_ = j.at("steps").get<std::vector<ReasoningStep>>();
    s.raw_text_ = j.at("raw_text").get<std::string>();
    s.extracted_answer_ = optional_field<std::string>(j, "extracted_answer");
    for (std::size_t i = 0; i < s.steps_.size(); ++i) {
        if (s.steps_[i].index != i) throw SerializationError("solution step indices are not contiguous");
    }
    if (!s.steps_.empty() && join_steps(s.steps_) != s.raw_text_) {
        throw SerializationError("solution steps do not reproduce raw_text");
    }
    if (s.steps_.empty() && !s.raw_text_.empty()) {
        throw SerializationError("solution has raw_text but no steps");
    }
}

void to_json(json& j, const StepFeedback& f) {
    j = json{{"step_index", f.step_index}, {"ok", f.ok}, {"comment", f.comment}};
}
void from_json(const json& j, StepFeedback& f) {
    f.step_index = j.at("step_index").get<std::size_t>();
    f.ok = j.at("ok").get<bool>();
    f.comment = j.at("comment").get<std::string>();
}

void to_json(json& j, const Feedback& f) {
    j = json{{"module_name", f.module_name},
             {"category", f.category},
             {"step_feedback", f.step_feedback},
             {"revision_required", f.revision_required},
             {"raw_text", f.raw_text},
             {"unparsed", f.unparsed}};
}
void from_json(const json& j, Feedback& f) {
    f.module_name = j.at("module_name").get<std::string>();
    f.category = j.at("category").get<ErrorCategory>();
    f.step_feedback = j.at("step_feedback").get<std::vector<StepFeedback>>();
    f.revision_required = j.at("revision_required").get<bool>();
    f.raw_text = j.at("raw_text").get<std::string>();
    f.unparsed = j.value("unparsed", false);
    bool any_bad = std::any_of(f.step_feedback.begin(), f.step_feedback.end(),
                               [](const StepFeedback& s) { return !s.ok; });
    if (any_bad != f.revision_required) {
        throw SerializationError("feedback revision_required disagrees with its step flags");
    }
}

void to_json(json& j, const FeedbackModuleSpec& s) {
    j = json{{"name", s.name},
             {"category", s.category},
             {"mode", to_string(s.mode)},
             {"backend", to_string(s.backend)},
             {"max_feedback_tokens", s.max_feedback_tokens}};
    put_optional(j, "prompt_path", s.prompt_path);
}
void from_json(const json& j, FeedbackModuleSpec& s) {
    s.name = j.at("name").get<std::string>();
    s.category = j.at("category").get<ErrorCategory>();
    s.mode = refine_mode_from_string(j.value("mode", std::string("lazy")));
    s.backend = backend_from_string(j.at("backend").get<std::string>());
    s.max_feedback_tokens = j.value("max_feedback_tokens", 600);
    s.prompt_path = optional_field<std::string>(j, "prompt_path");
}

void to_json(json& j, const ProblemRecord& p) {
    j = json{{"id", p.id}, {"task", to_string(p.task)}, {"question", p.question},
             {"gold_answer", p.gold_answer}, {"metadata", p.metadata}};
    put_optional(j, "passage", p.passage);
}
void from_json(const json& j, ProblemRecord& p) {
    p.id = j.at("id").get<std::string>();
    p.task = task_from_string(j.at("task").get<std::string>());
    p.question = j.at("question").get<std::string>();
    p.gold_answer = j.at("gold_answer").get<std::string>();
    p.metadata = j.value("metadata", json::object());
    p.passage = optional_field<std::string>(j, "passage");
}

void to_json(json& j, const EagerEvent& e) {
    j = json{{"module_name", e.module_name},
             {"feedback", e.feedback},
             {"solution_before", e.solution_before},
             {"solution_after", e.solution_after}};
}
void from_json(const json& j, EagerEvent& e) {
    e.module_name = j.at("module_name").get<std::string>();
    e.feedback = j.at("feedback").get<Feedback>();
    e.solution_before = j.at("solution_before").get<Solution>();
    e.solution_after = j.at("solution_after").get<Solution>();
}

void to_json(json& j, const IterationRecord& r) {
    j = json{{"iteration", r.iteration},
             {"eager_events", r.eager_events},
             {"lazy_feedbacks", r.lazy_feedbacks},
             {"solution_out", r.solution_out},
             {"notes", r.notes}};
    put_optional(j, "combined_lazy_feedback", r.combined_lazy_feedback);
}
void from_json(const json& j, IterationRecord& r) {
    r.iteration = j.at("iteration").get<std::size_t>();
    r.eager_events = j.at("eager_events").get<std::vector<EagerEvent>>();
    r.lazy_feedbacks = j.at("lazy_feedbacks").get<std::vector<Feedback>>();
    r.combined_lazy_feedback = optional_field<std::string>(j, "combined_lazy_feedback");
    r.solution_out = j.at("solution_out").get<Solution>();
    r.notes = j.value("notes", std::vector<std::string>{});
}

void to_json(json& j, const RunTrace& t) {
    j = json{{"problem_id", t.problem_id},
             {"task", to_string(t.task)},
             {"max_iterations", t.max_iterations},
             {"oracle_mode", t.oracle_mode},
             {"initial_solution", t.initial_solution},
             {"iterations", t.iterations},
             {"final_solution", t.final_solution},
             {"stop_reason", to_string(t.stop_reason)},
             {"lm_call_count", t.lm_call_count}};
    put_optional(j, "gold_answer", t.gold_answer);
    put_optional(j, "failure", t.failure);
}
void from_json(const json& j, RunTrace& t) {
    t.problem_id = j.at("problem_id").get<std::string>();
    t.task = task_from_string(j.at("task").get<std::string>());
    t.max_iterations = j.at("max_iterations").get<std::size_t>();
    t.oracle_mode = j.at("oracle_mode").get<bool>();
    t.initial_solution = j.at("initial_solution").get<Solution>();
    t.iterations = j.at("iterations").get<std::vector<IterationRecord>>();
    t.final_solution = j.at("final_solution").get<Solution>();
    t.stop_reason = stop_reason_from_string(j.at("stop_reason").get<std::string>());
    t.lm_call_count = j.at("lm_call_count").get<std::size_t>();
    t.gold_answer = optional_field<std::string>(j, "gold_answer");
    t.failure = optional_field<std::string>(j, "failure");
    if (t.iterations.size() > t.max_iterations) {
        throw SerializationError("trace records more iterations than its budget");
    }
    if (t.stop_reason == StopReason::OracleCorrect && !t.oracle_mode) {
        throw SerializationError("oracle_correct stop without oracle mode");
    }
}

std::string to_jsonl_line(const RunTrace& trace) { return json(trace).dump() + "\n"; }

RunTrace trace_from_jsonl_line(std::string_view line) {
    try {
        return json::parse(line).get<RunTrace>();
    } catch (const json::exception& e) {
        throw SerializationError(std::string("malformed trace: ") + e.what());
    }
}

}  // namespace maf

#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "maf/checkers/interpreter.hpp"
#include "maf/core.hpp"
#include "maf/lm/client.hpp"
#include "maf/prompts.hpp"

namespace maf::feedback {

// Lines of the form "Step <k>: <comment>" (any case, flexible spacing) open a
// new entry with step_index k-1. Other non-blank lines continue the previous
// entry; lines before the first entry are prefixed to it. An entry is ok when
// its full comment contains ok_marker, ignoring case. Returns an empty list
// when no line opens an entry.
std::vector<StepFeedback> parse_feedback_text(std::string_view raw, std::string_view ok_marker = kDefaultOkMarker);

// Parses critic output into a Feedback. Step indices are clamped to the
// solution's step range; output with no step lines becomes one not-ok entry
// at step 0 holding the raw text, with unparsed set.
Feedback feedback_from_text(const std::string& module_name, ErrorCategory category, const std::string& raw,
                            std::size_t step_count, std::string_view ok_marker = kDefaultOkMarker);

// "Step k: comment" per entry, 1-based.
std::string render_steps(const std::vector<StepFeedback>& steps);

// Drops ok entries (and any whose comment carries the ok marker), keeping order.
Feedback summarize_feedback(const Feedback& fb, std::string_view ok_marker = kDefaultOkMarker);

// One section per input, each opened by "### <Category> Feedback". Throws
// InputError on an empty list.
std::string combine_feedbacks(const std::vector<Feedback>& fbs);
std::string category_banner(ErrorCategory category);

struct FeedbackContext {
    lm::Client* client = nullptr;
    std::string model_name;
    std::string ok_marker = std::string(kDefaultOkMarker);
};

class FeedbackModule {
public:
    explicit FeedbackModule(FeedbackModuleSpec spec);
    virtual ~FeedbackModule() = default;

    const FeedbackModuleSpec& spec() const { return spec_; }
    const std::string& name() const { return spec_.name; }

    // Stateless; safe to call from several runs at once.
    virtual Feedback generate(const Solution& solution, const ProblemRecord& problem,
                              const FeedbackContext& ctx) const = 0;

private:
    FeedbackModuleSpec spec_;
};

class LmCriticModule : public FeedbackModule {
public:
    LmCriticModule(FeedbackModuleSpec spec, prompts::PromptBundle bundle);

    const prompts::PromptBundle& bundle() const { return bundle_; }
    std::string render_prompt(const Solution& solution, const ProblemRecord& problem) const;

    Feedback generate(const Solution& solution, const ProblemRecord& problem,
                      const FeedbackContext& ctx) const override;

private:
    prompts::PromptBundle bundle_;
};

class ArithmeticModule : public FeedbackModule {
public:
    ArithmeticModule(FeedbackModuleSpec spec, double tol_rel);

    Feedback generate(const Solution& solution, const ProblemRecord& problem,
                      const FeedbackContext& ctx) const override;

private:
    double tol_rel_;
};

class SyntaxModule : public FeedbackModule {
public:
    SyntaxModule(FeedbackModuleSpec spec, checkers::InterpreterConfig config);

    Feedback generate(const Solution& solution, const ProblemRecord& problem,
                      const FeedbackContext& ctx) const override;

private:
    checkers::InterpreterConfig config_;
};

// Rejects an empty solution, then dispatches to the module. The result's
// category is always the module's.
Feedback generate_feedback(const FeedbackModule& module, const Solution& solution, const ProblemRecord& problem,
                           const FeedbackContext& ctx);

struct RegistryOptions {
    // Base for relative prompt paths.
    std::string prompt_dir = ".";
    std::optional<Task> task;
    checkers::InterpreterConfig interpreter;
    double arithmetic_tol = 1e-6;
};

class ModuleRegistry {
public:
    ModuleRegistry() = default;
    // Loads every lm-prompt spec's bundle up front; throws ConfigError on any
    // invalid spec or prompt.
    ModuleRegistry(std::vector<FeedbackModuleSpec> specs, const RegistryOptions& options);
    // Pre-built modules, in order.
    explicit ModuleRegistry(std::vector<std::shared_ptr<const FeedbackModule>> modules);

    const std::vector<std::shared_ptr<const FeedbackModule>>& modules() const { return modules_; }
    std::vector<FeedbackModuleSpec> specs() const;
    std::vector<std::string> names() const;
    bool contains(const std::string& name) const;
    const FeedbackModule& at(const std::string& name) const;
    std::size_t size() const { return modules_.size(); }

    // Keeps only the named modules, in registry order.
    ModuleRegistry select(const std::vector<std::string>& names) const;

private:
    std::vector<std::shared_ptr<const FeedbackModule>> modules_;
};

// Per-task roster. Prompt paths are relative to the prompt directory.
//   math:  syntax (interpreter, eager), variable_naming (eager), redundancy,
//          commonsense, missing_step
//   logic: redundancy, repetition, hallucination
//   qa:    redundancy, factuality, commonsense, missing_step
std::vector<FeedbackModuleSpec> default_roster(Task task);

// Built-in tool modules that are not part of any default roster.
FeedbackModuleSpec arithmetic_spec(RefineMode mode = RefineMode::Lazy);

}  // namespace maf::feedback

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "maf/core.hpp"
#include "maf/feedback.hpp"
#include "maf/lm/client.hpp"
#include "maf/prompts.hpp"

namespace maf::orchestrator {

struct DecodingParams {
    std::string model;
    // Greedy only; validate() rejects anything else.
    double temperature = 0.0;

    bool operator==(const DecodingParams&) const = default;
};

struct RunConfig {
    std::size_t max_iterations = 4;
    std::size_t report_iteration = 2;
    std::vector<FeedbackModuleSpec> modules;
    bool oracle_mode = false;
    bool stop_on_clean = false;
    DecodingParams decoding;
    lm::TokenBudget budgets;
    std::string ok_marker = std::string(kDefaultOkMarker);

    void validate() const;

    bool operator==(const RunConfig&) const = default;
};

void to_json(json& j, const DecodingParams& d);
void from_json(const json& j, DecodingParams& d);
void to_json(json& j, const RunConfig& c);
void from_json(const json& j, RunConfig& c);

// Judges answers during a run; the model never sees it.
class AnswerOracle {
public:
    virtual ~AnswerOracle() = default;
    virtual std::string extract(const Solution& solution, const ProblemRecord& problem) const = 0;
    virtual bool verify(const std::string& answer, const std::string& gold) const = 0;
};

struct PromptSet {
    prompts::PromptBundle generator;
    prompts::PromptBundle eager_refiner;
    prompts::PromptBundle lazy_refiner;

    // <prompt_dir>/<task>/{generator,refine_eager,refine_lazy}.txt
    static PromptSet load(const std::string& prompt_dir, Task task);
};

struct Agents {
    lm::Client* generator = nullptr;
    lm::Client* critic = nullptr;  // the refiner's client when null
    lm::Client* refiner = nullptr;
};

// Removes surrounding code fences and trailing whitespace from a completion.
std::string clean_completion(const std::string& text);

// Throws InputError when the bundle is for another task or the completion is
// blank.
Solution generate_initial(const ProblemRecord& problem, lm::Client& generator, const prompts::PromptBundle& bundle,
                          int max_tokens, const std::string& model_name = {});

// Blank refiner output leaves the solution unchanged.
Solution refine(const Solution& solution, const std::string& feedback_text, const ProblemRecord& problem,
                lm::Client& refiner, const prompts::PromptBundle& bundle, int max_tokens,
                const std::string& model_name = {});

// One problem through the iterative loop. Never throws for LM failures: the
// trace is returned with stop_reason aborted and the failure message.
RunTrace run_refinement(const ProblemRecord& problem, const RunConfig& config, const Agents& agents,
                        const feedback::ModuleRegistry& modules, const PromptSet& prompt_set,
                        const AnswerOracle* oracle = nullptr);

}  // namespace maf::orchestrator

#include "maf/orchestrator.hpp"

#include <spdlog/spdlog.h>

#include <atomic>
#include <filesystem>

namespace maf::orchestrator {

void RunConfig::validate() const {
    if (max_iterations < 1) throw ConfigError("max_iterations must be at least 1");
    if (report_iteration < 1 || report_iteration > max_iterations) {
        throw ConfigError("report_iteration must be in [1, max_iterations]");
    }
    if (modules.empty()) throw ConfigError("modules: at least one feedback module is required");
    if (decoding.temperature != 0.0) throw ConfigError("decoding.temperature must be 0 (greedy decoding)");
    if (ok_marker.empty()) throw ConfigError("ok_marker must not be empty");
    budgets.validate();
    validate_unique_names(modules);
    for (const auto& m : modules) {
        maf::validate(m);
        if (m.max_feedback_tokens > budgets.feedback) {
            throw ConfigError("module '" + m.name + "': max_feedback_tokens exceeds the feedback budget of " +
                              std::to_string(budgets.feedback));
        }
    }
}

void to_json(json& j, const DecodingParams& d) { j = json{{"model", d.model}, {"temperature", d.temperature}}; }

void from_json(const json& j, DecodingParams& d) {
    d.model = j.value("model", std::string());
    d.temperature = j.value("temperature", 0.0);
}

void to_json(json& j, const RunConfig& c) {
    j = json{{"max_iterations", c.max_iterations},
             {"report_iteration", c.report_iteration},
             {"modules", c.modules},
             {"oracle_mode", c.oracle_mode},
             {"stop_on_clean", c.stop_on_clean},
             {"decoding", c.decoding},
             {"budgets", c.budgets},
             {"ok_marker", c.ok_marker}};
}

void from_json(const json& j, RunConfig& c) {
    RunConfig d;
    c.max_iterations = j.value("max_iterations", d.max_iterations);
    c.report_iteration = j.value("report_iteration", d.report_iteration);
    c.modules = j.value("modules", d.modules);
    c.oracle_mode = j.value("oracle_mode", d.oracle_mode);
    c.stop_on_clean = j.value("stop_on_clean", d.stop_on_clean);
    c.decoding = j.value("decoding", d.decoding);
    c.budgets = j.value("budgets", d.budgets);
    c.ok_marker = j.value("ok_marker", d.ok_marker);
}

PromptSet PromptSet::load(const std::string& prompt_dir, Task task) {
    namespace fs = std::filesystem;
    fs::path dir = fs::path(prompt_dir) / std::string(to_string(task));
    if (!fs::is_directory(dir)) throw ConfigError("prompt directory '" + dir.string() + "' does not exist");
    auto load = [&](const char* file, prompts::Role role) {
        auto b = prompts::load_bundle((dir / file).string());
        if (b.role != role) {
            throw ConfigError((dir / file).string() + ": expected role " + std::string(prompts::to_string(role)));
        }
        if (b.task != to_string(task)) throw ConfigError((dir / file).string() + ": prompt is for task '" + b.task + "'");
        return b;
    };
    return PromptSet{load("generator.txt", prompts::Role::Generator),
                     load("refine_eager.txt", prompts::Role::EagerRefiner),
                     load("refine_lazy.txt", prompts::Role::LazyRefiner)};
}

std::string clean_completion(const std::string& text) {
    std::string s = text;
    auto first_nonblank = s.find_first_not_of(" \t\r\n");
    if (first_nonblank == std::string::npos) return {};
    // Drop whole leading blank lines, keep the first line's indentation.
    auto line_start = s.rfind('\n', first_nonblank);
    s.erase(0, line_start == std::string::npos ? 0 : line_start + 1);
    s.erase(s.find_last_not_of(" \t\r\n") + 1);
    if (s.rfind("```", 0) == 0) {
        auto nl = s.find('\n');
        s = nl == std::string::npos ? std::string() : s.substr(nl + 1);
        auto close = s.rfind("```");
        if (close != std::string::npos && s.find('\n', close) == std::string::npos) s.erase(close);
        auto end = s.find_last_not_of(" \t\r\n");
        s.erase(end == std::string::npos ? 0 : end + 1);
    }
    return s;
}

namespace {

std::vector<std::string> stops_for(const prompts::PromptBundle& bundle) { return {"\n" + bundle.delimiter}; }

void check_task(const prompts::PromptBundle& bundle, const ProblemRecord& problem) {
    if (bundle.task != to_string(problem.task)) {
        throw InputError("prompt for task '" + bundle.task + "' used on a " + std::string(to_string(problem.task)) +
                         " problem");
    }
}

struct RefineOutcome {
    Solution solution;
    bool passed_through = false;
};

RefineOutcome refine_with_outcome(const Solution& solution, const std::string& feedback_text,
                                  const ProblemRecord& problem, lm::Client& refiner,
                                  const prompts::PromptBundle& bundle, int max_tokens, const std::string& model_name) {
    if (feedback_text.empty()) throw InputError("refine needs nonempty feedback");
    check_task(bundle, problem);
    std::string prompt = prompts::render(
        bundle, {{"problem", problem.prompt_text()}, {"solution", solution.raw_text()}, {"feedback", feedback_text}});
    auto request = lm::LmRequest::from_prompt(prompt, max_tokens, lm::Stage::Refiner, model_name, stops_for(bundle));
    std::string out = clean_completion(refiner.complete(request));
    if (out.empty()) {
        spdlog::warn("refiner returned no usable text; keeping the previous solution");
        return {solution, true};
    }
    return {segment_solution(out, solution.kind()), false};
}

// Forwards to another client, counting calls and enforcing the run's budget.
class CountingClient : public lm::Client {
public:
    CountingClient(lm::Client& inner, std::atomic<std::size_t>& counter) : inner_(inner), counter_(counter) {}

protected:
    std::string do_complete(const lm::LmRequest& request) override {
        ++counter_;
        return inner_.complete(request);
    }

private:
    lm::Client& inner_;
    std::atomic<std::size_t>& counter_;
};

}  // namespace

Solution generate_initial(const ProblemRecord& problem, lm::Client& generator, const prompts::PromptBundle& bundle,
                          int max_tokens, const std::string& model_name) {
    check_task(bundle, problem);
    if (bundle.role != prompts::Role::Generator) throw InputError("generate_initial needs a generator prompt");
    std::string prompt = prompts::render(bundle, {{"problem", problem.prompt_text()}});
    auto request = lm::LmRequest::from_prompt(prompt, max_tokens, lm::Stage::Base, model_name, stops_for(bundle));
    std::string out = clean_completion(generator.complete(request));
    if (out.empty()) throw InputError("generator returned an empty completion for problem '" + problem.id + "'");
    return segment_solution(out, solution_kind_for(problem.task));
}

Solution refine(const Solution& solution, const std::string& feedback_text, const ProblemRecord& problem,
                lm::Client& refiner, const prompts::PromptBundle& bundle, int max_tokens,
                const std::string& model_name) {
    return refine_with_outcome(solution, feedback_text, problem, refiner, bundle, max_tokens, model_name).solution;
}

RunTrace run_refinement(const ProblemRecord& problem, const RunConfig& config, const Agents& agents,
                        const feedback::ModuleRegistry& modules, const PromptSet& prompt_set,
                        const AnswerOracle* oracle) {
    config.validate();
    if (!agents.generator || !agents.refiner) throw ConfigError("run_refinement needs generator and refiner clients");
    std::vector<std::string> configured;
    for (const auto& m : config.modules) configured.push_back(m.name);
    if (modules.names() != configured) throw ConfigError("module registry does not match the configured roster");
    if (config.oracle_mode && !oracle) throw ConfigError("oracle mode needs an answer oracle");
    if (config.oracle_mode && problem.gold_answer.empty()) {
        throw InputError("problem '" + problem.id + "' has no gold answer for oracle mode");
    }

    std::atomic<std::size_t> calls{0};
    CountingClient generator(*agents.generator, calls);
    CountingClient refiner(*agents.refiner, calls);
    CountingClient critic(agents.critic ? *agents.critic : *agents.refiner, calls);
    for (lm::Client* c : {static_cast<lm::Client*>(&generator), static_cast<lm::Client*>(&refiner),
                          static_cast<lm::Client*>(&critic)}) {
        c->set_budget(config.budgets);
    }
    feedback::FeedbackContext ctx{&critic, config.decoding.model, config.ok_marker};
    const std::string& model = config.decoding.model;

    RunTrace trace;
    trace.problem_id = problem.id;
    trace.task = problem.task;
    if (!problem.gold_answer.empty()) trace.gold_answer = problem.gold_answer;
    trace.max_iterations = config.max_iterations;
    trace.oracle_mode = config.oracle_mode;

    auto with_answer = [&](const Solution& s) { return oracle ? s.with_answer(oracle->extract(s, problem)) : s; };
    auto oracle_hit = [&](const Solution& s) {
        return config.oracle_mode && s.extracted_answer() && oracle->verify(*s.extracted_answer(), problem.gold_answer);
    };

    Solution current;
    try {
        current = with_answer(generate_initial(problem, generator, prompt_set.generator, config.budgets.base, model));
        trace.initial_solution = current;
        trace.final_solution = current;
        if (oracle_hit(current)) {
            trace.stop_reason = StopReason::OracleCorrect;
            trace.lm_call_count = calls.load();
            return trace;
        }

        for (std::size_t i = 1; i <= config.max_iterations; ++i) {
            IterationRecord rec;
            rec.iteration = i;
            bool any_revision = false;
            Solution y = current;

            for (const auto& m : modules.modules()) {
                if (m->spec().mode != RefineMode::Eager) continue;
                Feedback fb = feedback::generate_feedback(*m, y, problem, ctx);
                EagerEvent ev{m->name(), fb, y, y};
                if (fb.revision_required) {
                    any_revision = true;
                    std::string text = feedback::combine_feedbacks({feedback::summarize_feedback(fb, config.ok_marker)});
                    auto out = refine_with_outcome(y, text, problem, refiner, prompt_set.eager_refiner,
                                                   config.budgets.refiner, model);
                    if (out.passed_through) rec.notes.push_back("eager refinement after '" + m->name() + "' passed through");
                    y = out.solution;
                    ev.solution_after = y;
                }
                rec.eager_events.push_back(std::move(ev));
            }

            std::vector<Feedback> flagged;
            for (const auto& m : modules.modules()) {
                if (m->spec().mode != RefineMode::Lazy) continue;
                Feedback fb = feedback::generate_feedback(*m, y, problem, ctx);
                if (fb.revision_required) flagged.push_back(feedback::summarize_feedback(fb, config.ok_marker));
                rec.lazy_feedbacks.push_back(std::move(fb));
            }
            if (!flagged.empty()) {
                any_revision = true;
                rec.combined_lazy_feedback = feedback::combine_feedbacks(flagged);
                auto out = refine_with_outcome(y, *rec.combined_lazy_feedback, problem, refiner,
                                               prompt_set.lazy_refiner, config.budgets.refiner, model);
                if (out.passed_through) rec.notes.push_back("lazy refinement passed through");
                y = out.solution;
            }

            current = with_answer(Solution(y));
            rec.solution_out = current;
            trace.iterations.push_back(std::move(rec));
            trace.final_solution = current;

            if (oracle_hit(current)) {
                trace.stop_reason = StopReason::OracleCorrect;
                break;
            }
            if (config.stop_on_clean && !any_revision) {
                trace.stop_reason = StopReason::CleanFeedback;
                break;
            }
        }
    } catch (const lm::LmError& e) {
        spdlog::error("problem '{}': {}", problem.id, e.what());
        trace.stop_reason = StopReason::Aborted;
        trace.failure = e.what();
    } catch (const InputError& e) {
        spdlog::error("problem '{}': {}", problem.id, e.what());
        trace.stop_reason = StopReason::Aborted;
        trace.failure = e.what();
    }
    trace.lm_call_count = calls.load();
    return trace;
}

}  // namespace maf::orchestrator

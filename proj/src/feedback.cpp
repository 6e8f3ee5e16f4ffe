#include "maf/feedback.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <filesystem>
#include <regex>

#include "maf/checkers/arithmetic.hpp"

namespace maf::feedback {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

bool contains_ci(std::string_view haystack, std::string_view needle) {
    if (needle.empty()) return false;
    return lower(haystack).find(lower(needle)) != std::string::npos;
}

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

void append_text(std::string& comment, const std::string& more) {
    if (more.empty()) return;
    if (!comment.empty()) comment += ' ';
    comment += more;
}

}  // namespace

std::vector<StepFeedback> parse_feedback_text(std::string_view raw, std::string_view ok_marker) {
    static const std::regex step_line(R"(^\s*[*#>-]*\s*step\s*(\d+)\s*[*]*\s*:\s*[*]*\s*(.*)$)", std::regex::icase);
    std::vector<StepFeedback> entries;
    std::string preamble;
    std::size_t start = 0;
    while (start <= raw.size()) {
        auto nl = raw.find('\n', start);
        std::string line(raw.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start));
        start = nl == std::string_view::npos ? raw.size() + 1 : nl + 1;
        std::smatch m;
        if (std::regex_match(line, m, step_line)) {
            StepFeedback e;
            unsigned long k = 0;
            try {
                k = std::stoul(m[1].str());
            } catch (const std::out_of_range&) {
                k = static_cast<unsigned long>(-1);
            }
            e.step_index = k == 0 ? 0 : k - 1;
            e.comment = trim(m[2].str());
            if (entries.empty() && !preamble.empty()) {
                std::string joined = preamble;
                append_text(joined, e.comment);
                e.comment = joined;
                preamble.clear();
            }
            entries.push_back(std::move(e));
            continue;
        }
        std::string text = trim(line);
        if (text.empty()) continue;
        if (entries.empty()) {
            append_text(preamble, text);
        } else {
            append_text(entries.back().comment, text);
        }
    }
    for (auto& e : entries) e.ok = contains_ci(e.comment, ok_marker);
    return entries;
}

Feedback feedback_from_text(const std::string& module_name, ErrorCategory category, const std::string& raw,
                            std::size_t step_count, std::string_view ok_marker) {
    auto entries = parse_feedback_text(raw, ok_marker);
    if (entries.empty()) {
        Feedback fb = make_feedback(module_name, category, {{0, false, trim(raw)}}, raw);
        fb.unparsed = true;
        return fb;
    }
    std::size_t last = step_count == 0 ? 0 : step_count - 1;
    for (auto& e : entries) e.step_index = std::min(e.step_index, last);
    return make_feedback(module_name, category, std::move(entries), raw);
}

std::string render_steps(const std::vector<StepFeedback>& steps) {
    std::string out;
    for (const auto& s : steps) {
        if (!out.empty()) out += '\n';
        out += "Step " + std::to_string(s.step_index + 1) + ": " + s.comment;
    }
    return out;
}

Feedback summarize_feedback(const Feedback& fb, std::string_view ok_marker) {
    std::vector<StepFeedback> kept;
    for (const auto& s : fb.step_feedback) {
        if (s.ok || contains_ci(s.comment, ok_marker)) continue;
        kept.push_back(s);
    }
    std::string raw = render_steps(kept);
    Feedback out = make_feedback(fb.module_name, fb.category, std::move(kept), std::move(raw));
    out.unparsed = fb.unparsed;
    return out;
}

std::string category_banner(ErrorCategory category) {
    return "### " + std::string(to_string(category)) + " Feedback";
}

std::string combine_feedbacks(const std::vector<Feedback>& fbs) {
    if (fbs.empty()) throw InputError("combine_feedbacks needs at least one feedback");
    std::string out;
    for (const auto& fb : fbs) {
        if (!out.empty()) out += '\n';
        out += category_banner(fb.category);
        std::vector<StepFeedback> flagged;
        for (const auto& s : fb.step_feedback) {
            if (!s.ok) flagged.push_back(s);
        }
        if (!flagged.empty()) out += '\n' + render_steps(flagged);
    }
    return out;
}

FeedbackModule::FeedbackModule(FeedbackModuleSpec spec) : spec_(std::move(spec)) { validate(spec_); }

LmCriticModule::LmCriticModule(FeedbackModuleSpec spec, prompts::PromptBundle bundle)
    : FeedbackModule(std::move(spec)), bundle_(std::move(bundle)) {
    if (bundle_.role != prompts::Role::Critic) {
        throw ConfigError("module '" + name() + "': prompt role is " + std::string(prompts::to_string(bundle_.role)) +
                          ", expected critic");
    }
    if (bundle_.category && *bundle_.category != this->spec().category) {
        throw ConfigError("module '" + name() + "': prompt is for " + std::string(to_string(*bundle_.category)) +
                          " but the module checks " + std::string(to_string(this->spec().category)));
    }
}

std::string LmCriticModule::render_prompt(const Solution& solution, const ProblemRecord& problem) const {
    return prompts::render(bundle_, {{"problem", problem.prompt_text()}, {"solution", solution.raw_text()}});
}

Feedback LmCriticModule::generate(const Solution& solution, const ProblemRecord& problem,
                                  const FeedbackContext& ctx) const {
    if (!ctx.client) throw ConfigError("module '" + name() + "' needs an LM client");
    auto request = lm::LmRequest::from_prompt(render_prompt(solution, problem), spec().max_feedback_tokens,
                                              lm::Stage::Feedback, ctx.model_name);
    std::string raw = ctx.client->complete(request);
    Feedback fb = feedback_from_text(name(), spec().category, raw, solution.steps().size(), ctx.ok_marker);
    if (fb.unparsed) spdlog::warn("module '{}': critic output has no step lines; kept as one comment", name());
    return fb;
}

ArithmeticModule::ArithmeticModule(FeedbackModuleSpec spec, double tol_rel)
    : FeedbackModule(std::move(spec)), tol_rel_(tol_rel) {
    if (this->spec().backend != Backend::Arithmetic) throw ConfigError("module '" + name() + "' is not an arithmetic tool");
}

Feedback ArithmeticModule::generate(const Solution& solution, const ProblemRecord&, const FeedbackContext& ctx) const {
    Feedback fb = checkers::check_arithmetic(solution, tol_rel_, name(), ctx.ok_marker);
    fb.category = spec().category;
    return fb;
}

SyntaxModule::SyntaxModule(FeedbackModuleSpec spec, checkers::InterpreterConfig config)
    : FeedbackModule(std::move(spec)), config_(std::move(config)) {
    if (this->spec().backend != Backend::Interpreter) throw ConfigError("module '" + name() + "' is not an interpreter tool");
}

Feedback SyntaxModule::generate(const Solution& solution, const ProblemRecord&, const FeedbackContext& ctx) const {
    Feedback fb = checkers::check_program_syntax(solution, config_, name(), ctx.ok_marker);
    fb.category = spec().category;
    return fb;
}

Feedback generate_feedback(const FeedbackModule& module, const Solution& solution, const ProblemRecord& problem,
                           const FeedbackContext& ctx) {
    if (solution.empty()) throw InputError("cannot generate feedback for an empty solution");
    Feedback fb = module.generate(solution, problem, ctx);
    fb.category = module.spec().category;
    fb.module_name = module.name();
    return fb;
}

ModuleRegistry::ModuleRegistry(std::vector<FeedbackModuleSpec> specs, const RegistryOptions& options) {
    validate_unique_names(specs);
    namespace fs = std::filesystem;
    for (auto& spec : specs) {
        validate(spec);
        switch (spec.backend) {
            case Backend::LmPrompt: {
                fs::path p(*spec.prompt_path);
                if (p.is_relative()) p = fs::path(options.prompt_dir) / p;
                if (!fs::is_regular_file(p)) {
                    throw ConfigError("module '" + spec.name + "': prompt file '" + p.string() + "' not found");
                }
                auto bundle = prompts::load_bundle(p.string());
                if (options.task && bundle.task != to_string(*options.task)) {
                    throw ConfigError("module '" + spec.name + "': prompt '" + p.string() + "' is for task '" +
                                      bundle.task + "'");
                }
                modules_.push_back(std::make_shared<LmCriticModule>(spec, std::move(bundle)));
                break;
            }
            case Backend::Arithmetic:
                modules_.push_back(std::make_shared<ArithmeticModule>(spec, options.arithmetic_tol));
                break;
            case Backend::Interpreter:
                if (options.task && solution_kind_for(*options.task) != SolutionKind::Program) {
                    throw ConfigError("module '" + spec.name + "': the interpreter checks programs only");
                }
                modules_.push_back(std::make_shared<SyntaxModule>(spec, options.interpreter));
                break;
        }
    }
}

ModuleRegistry::ModuleRegistry(std::vector<std::shared_ptr<const FeedbackModule>> modules)
    : modules_(std::move(modules)) {
    validate_unique_names(specs());
}

std::vector<FeedbackModuleSpec> ModuleRegistry::specs() const {
    std::vector<FeedbackModuleSpec> out;
    for (const auto& m : modules_) out.push_back(m->spec());
    return out;
}

std::vector<std::string> ModuleRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& m : modules_) out.push_back(m->name());
    return out;
}

bool ModuleRegistry::contains(const std::string& name) const {
    return std::any_of(modules_.begin(), modules_.end(), [&](const auto& m) { return m->name() == name; });
}

const FeedbackModule& ModuleRegistry::at(const std::string& name) const {
    for (const auto& m : modules_) {
        if (m->name() == name) return *m;
    }
    std::string known;
    for (const auto& n : names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown feedback module '" + name + "' (known: " + known + ")");
}

ModuleRegistry ModuleRegistry::select(const std::vector<std::string>& wanted) const {
    for (const auto& n : wanted) at(n);
    std::vector<std::shared_ptr<const FeedbackModule>> kept;
    for (const auto& m : modules_) {
        if (std::find(wanted.begin(), wanted.end(), m->name()) != wanted.end()) kept.push_back(m);
    }
    return ModuleRegistry(std::move(kept));
}

namespace {

FeedbackModuleSpec critic(const std::string& task, const std::string& name, ErrorCategory category, RefineMode mode) {
    return FeedbackModuleSpec{name, category, mode, Backend::LmPrompt, task + "/critic_" + name + ".txt", 600};
}

}  // namespace

std::vector<FeedbackModuleSpec> default_roster(Task task) {
    using C = ErrorCategory;
    switch (task) {
        case Task::Math:
            return {
                FeedbackModuleSpec{"syntax", C::ProgramSyntax, RefineMode::Eager, Backend::Interpreter, std::nullopt, 600},
                critic("math", "variable_naming", C::VariableNaming, RefineMode::Eager),
                critic("math", "redundancy", C::Redundancy, RefineMode::Lazy),
                critic("math", "commonsense", C::Commonsense, RefineMode::Lazy),
                critic("math", "missing_step", C::MissingStep, RefineMode::Lazy),
            };
        case Task::Logic:
            return {
                critic("logic", "redundancy", C::Redundancy, RefineMode::Lazy),
                critic("logic", "repetition", C::Repetition, RefineMode::Lazy),
                critic("logic", "hallucination", C::Hallucination, RefineMode::Lazy),
            };
        case Task::Qa:
            return {
                critic("qa", "redundancy", C::Redundancy, RefineMode::Lazy),
                critic("qa", "factuality", C::Factuality, RefineMode::Lazy),
                critic("qa", "commonsense", C::Commonsense, RefineMode::Lazy),
                critic("qa", "missing_step", C::MissingStep, RefineMode::Lazy),
            };
    }
    return {};
}

FeedbackModuleSpec arithmetic_spec(RefineMode mode) {
    return FeedbackModuleSpec{"arithmetic", ErrorCategory::Arithmetic, mode, Backend::Arithmetic, std::nullopt, 600};
}

}  // namespace maf::feedback

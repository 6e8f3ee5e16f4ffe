#include "maf/eval.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include "maf/checkers/arithmetic.hpp"
#include "maf/checkers/expression.hpp"
#include "maf/lm/client.hpp"

namespace maf::eval {

std::string_view to_string(DatasetFormat format) {
    switch (format) {
        case DatasetFormat::JsonlMath: return "jsonl-math";
        case DatasetFormat::JsonlQa: return "jsonl-qa";
        case DatasetFormat::JsonlLogic: return "jsonl-logic";
    }
    return "jsonl-math";
}

DatasetFormat dataset_format_from_string(std::string_view name) {
    for (auto f : {DatasetFormat::JsonlMath, DatasetFormat::JsonlQa, DatasetFormat::JsonlLogic}) {
        if (to_string(f) == name) return f;
    }
    throw ConfigError("unknown dataset format '" + std::string(name) + "' (expected jsonl-math, jsonl-qa or jsonl-logic)");
}

DatasetFormat format_for(Task task) {
    switch (task) {
        case Task::Math: return DatasetFormat::JsonlMath;
        case Task::Qa: return DatasetFormat::JsonlQa;
        case Task::Logic: return DatasetFormat::JsonlLogic;
    }
    return DatasetFormat::JsonlMath;
}

Task task_for(DatasetFormat format) {
    switch (format) {
        case DatasetFormat::JsonlMath: return Task::Math;
        case DatasetFormat::JsonlQa: return Task::Qa;
        case DatasetFormat::JsonlLogic: return Task::Logic;
    }
    return Task::Math;
}

std::vector<ProblemRecord> parse_dataset(const std::string& text, DatasetFormat format, const std::string& origin) {
    Task task = task_for(format);
    std::vector<ProblemRecord> out;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::string where = origin + ":" + std::to_string(lineno);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DatasetError(where + ": not valid JSON (" + e.what() + ")");
        }
        if (!j.is_object()) throw DatasetError(where + ": record is not an object");
        ProblemRecord r;
        r.task = task;
        if (!j.contains("id") || !(j["id"].is_string() || j["id"].is_number_integer())) {
            throw DatasetError(where + ": record has no id");
        }
        r.id = j["id"].is_string() ? j["id"].get<std::string>() : std::to_string(j["id"].get<long long>());
        std::string name = where + " (id '" + r.id + "')";
        if (j.contains("task") && j["task"] != to_string(task)) {
            throw DatasetError(name + ": task does not match format " + std::string(to_string(format)));
        }
        if (!j.contains("question") || !j["question"].is_string() || j["question"].get<std::string>().empty()) {
            throw DatasetError(name + ": missing question");
        }
        r.question = j["question"].get<std::string>();
        if (j.contains("passage") && !j["passage"].is_null()) r.passage = j["passage"].get<std::string>();
        if (!j.contains("gold_answer") || j["gold_answer"].is_null()) throw DatasetError(name + ": missing gold_answer");
        r.gold_answer = j["gold_answer"].is_string() ? j["gold_answer"].get<std::string>() : j["gold_answer"].dump();
        if (r.gold_answer.empty()) throw DatasetError(name + ": missing gold_answer");
        if (j.contains("metadata")) r.metadata = j["metadata"];
        if (!seen.insert(r.id).second) throw DatasetError(name + ": duplicate id");
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<ProblemRecord> load_dataset(const std::string& path, DatasetFormat format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot read dataset '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_dataset(ss.str(), format, path);
}

std::string dataset_to_jsonl(const std::vector<ProblemRecord>& records) {
    std::string out;
    for (const auto& r : records) {
        json j{{"id", r.id}, {"task", to_string(r.task)}, {"question", r.question}, {"gold_answer", r.gold_answer}};
        if (r.passage) j["passage"] = *r.passage;
        if (!r.metadata.empty()) j["metadata"] = r.metadata;
        out += j.dump() + "\n";
    }
    return out;
}

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::string collapse(std::string_view s) {
    std::string out;
    bool space = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            space = !out.empty();
            continue;
        }
        if (space) out += ' ';
        space = false;
        out += c;
    }
    return out;
}

const std::regex& number_token() {
    static const std::regex re(R"(-?\$?\d+(?:,\d{3})*(?:\.\d+)?(?:[eE][-+]?\d+)?)");
    return re;
}

std::optional<double> as_number(const std::string& s) {
    static const std::regex whole(R"(^-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?$|^-?\.\d+$)");
    if (!std::regex_match(s, whole)) return std::nullopt;
    return std::strtod(s.c_str(), nullptr);
}

// Numeric form of a normalized candidate: "$1,000", "12%", "-3.50".
std::optional<std::string> numeric_form(std::string s) {
    std::string t;
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (c == '$') continue;
        if (c == ',' && i > 0 && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i - 1])) &&
            std::isdigit(static_cast<unsigned char>(s[i + 1]))) {
            continue;
        }
        t += c;
    }
    if (!t.empty() && t.back() == '%') t.pop_back();
    auto v = as_number(t);
    if (!v) return std::nullopt;
    return checkers::format_number(*v);
}

std::string last_number(const std::string& text) {
    std::string found;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), number_token()); it != std::sregex_iterator(); ++it) {
        found = it->str();
    }
    return found;
}

struct Date {
    std::optional<int> year, month, day;
    bool operator==(const Date&) const = default;
};

std::optional<int> month_index(std::string word) {
    static const std::array<const char*, 12> names{"january", "february", "march",     "april",   "may",      "june",
                                                   "july",    "august",   "september", "october", "november", "december"};
    word = lower(word);
    if (!word.empty() && word.back() == '.') word.pop_back();
    for (int i = 0; i < 12; ++i) {
        std::string n = names[i];
        if (word == n || word == n.substr(0, 3) || (i == 8 && word == "sept")) return i + 1;
    }
    return std::nullopt;
}

std::optional<Date> parse_date(const std::string& s) {
    std::smatch m;
    static const std::regex iso(R"(^(\d{4})-(\d{1,2})-(\d{1,2})$)");
    static const std::regex us(R"(^(\d{1,2})/(\d{1,2})/(\d{4})$)");
    if (std::regex_match(s, m, iso)) return Date{std::stoi(m[1]), std::stoi(m[2]), std::stoi(m[3])};
    if (std::regex_match(s, m, us)) return Date{std::stoi(m[3]), std::stoi(m[1]), std::stoi(m[2])};

    std::string cleaned = s;
    std::replace(cleaned.begin(), cleaned.end(), ',', ' ');
    std::istringstream in(cleaned);
    Date d;
    std::vector<int> numbers;
    static const std::regex number(R"(^(\d{1,4})(?:st|nd|rd|th)?$)", std::regex::icase);
    for (std::string t; in >> t;) {
        if (auto mi = month_index(t); mi && !d.month) {
            d.month = mi;
        } else if (std::regex_match(t, m, number)) {
            numbers.push_back(std::stoi(m[1]));
        } else {
            return std::nullopt;
        }
    }
    if (!d.month || numbers.empty() || numbers.size() > 2) return std::nullopt;
    if (numbers.size() == 1) {
        if (numbers[0] > 31) {
            d.year = numbers[0];
        } else {
            d.day = numbers[0];
        }
    } else if (numbers[0] > 31) {
        d.year = numbers[0];
        d.day = numbers[1];
    } else {
        d.day = numbers[0];
        d.year = numbers[1];
    }
    return d;
}

std::string span_form(const std::string& s) {
    std::string t;
    for (char c : lower(s)) {
        if (std::ispunct(static_cast<unsigned char>(c)) && c != '-' && c != '/' && c != '.') continue;
        t += c;
    }
    t = collapse(t);
    for (const char* article : {"the ", "a ", "an "}) {
        if (t.rfind(article, 0) == 0) {
            t.erase(0, std::string(article).size());
            break;
        }
    }
    return t;
}

}  // namespace

std::string normalize_answer(std::string_view text) {
    std::string s = collapse(text);
    auto strip_edges = [](std::string& v) {
        bool changed = true;
        while (changed && !v.empty()) {
            changed = false;
            char b = v.front(), e = v.back();
            if (b == '"' || b == '\'' || b == '*' || b == '`') {
                v.erase(v.begin());
                changed = true;
            } else if (e == '"' || e == '\'' || e == '*' || e == '`' || e == '.' || e == ',' || e == ';' || e == '!') {
                v.pop_back();
                changed = true;
            }
            while (!v.empty() && v.front() == ' ') v.erase(v.begin()), changed = true;
            while (!v.empty() && v.back() == ' ') v.pop_back(), changed = true;
        }
    };
    strip_edges(s);
    if (s.empty()) return std::string(kUnparseable);
    if (auto n = numeric_form(s)) return *n;
    return lower(s);
}

std::string extract_answer(const Solution& solution, const checkers::InterpreterConfig& interpreter) {
    if (solution.empty()) return std::string(kUnparseable);
    switch (solution.kind()) {
        case SolutionKind::Program: {
            checkers::SandboxPolicy policy;
            policy.timeout_s = interpreter.timeout_s;
            auto result = checkers::execute_program(solution, interpreter, policy);
            if (result.timed_out || result.exit_status != 0) return std::string(kUnparseable);
            std::string n = last_number(result.stdout_text);
            return n.empty() ? std::string(kUnparseable) : normalize_answer(n);
        }
        case SolutionKind::ChainOfThought: {
            static const std::regex answer_is(R"(answer\s+is\s*:?\s*)", std::regex::icase);
            std::optional<std::string> phrase;
            for (const auto& step : solution.steps()) {
                std::smatch m;
                std::string rest = step.text;
                std::optional<std::string> last;
                while (std::regex_search(rest, m, answer_is)) {
                    last = m.suffix().str();
                    rest = m.suffix().str();
                }
                if (last) phrase = last;
            }
            if (phrase) {
                std::string n = normalize_answer(*phrase);
                if (n != kUnparseable) return n;
            }
            for (auto it = solution.steps().rbegin(); it != solution.steps().rend(); ++it) {
                if (it->text.find_first_not_of(" \t\r") == std::string::npos) continue;
                std::string n = last_number(it->text);
                return n.empty() ? std::string(kUnparseable) : normalize_answer(n);
            }
            return std::string(kUnparseable);
        }
        case SolutionKind::EntailmentTree: {
            for (auto it = solution.steps().rbegin(); it != solution.steps().rend(); ++it) {
                if (it->text.find_first_not_of(" \t\r") == std::string::npos) continue;
                auto arrow = it->text.rfind("->");
                if (arrow == std::string::npos) return std::string(kUnparseable);
                std::string conclusion = it->text.substr(arrow + 2);
                static const std::regex label(R"(^\s*[A-Za-z][A-Za-z0-9_]*\s*:\s*)");
                conclusion = std::regex_replace(conclusion, label, "", std::regex_constants::format_first_only);
                return normalize_answer(conclusion);
            }
            return std::string(kUnparseable);
        }
    }
    return std::string(kUnparseable);
}

bool oracle_verify(const std::string& answer, const std::string& gold) {
    if (answer == kUnparseable || gold == kUnparseable) return false;
    std::string a = normalize_answer(answer);
    std::string g = normalize_answer(gold);
    if (a == kUnparseable || g == kUnparseable) return false;
    auto na = as_number(a);
    auto ng = as_number(g);
    if (na && ng) return checkers::values_agree(*na, *ng, checkers::kDefaultRelativeTolerance);
    auto da = parse_date(a);
    auto dg = parse_date(g);
    if (da && dg) return *da == *dg;
    return span_form(a) == span_form(g);
}

double solve_rate(const std::vector<bool>& results) {
    if (results.empty()) throw InputError("solve_rate needs at least one result");
    auto correct = static_cast<double>(std::count(results.begin(), results.end(), true));
    return std::round(1000.0 * correct / static_cast<double>(results.size())) / 10.0;
}

std::string TaskAnswerOracle::extract(const Solution& solution, const ProblemRecord&) const {
    return extract_answer(solution, interpreter_);
}

bool TaskAnswerOracle::verify(const std::string& answer, const std::string& gold) const {
    return oracle_verify(answer, gold);
}

void to_json(json& j, const ProblemResult& r) {
    j = json{{"id", r.id},
             {"gold", r.gold},
             {"answers", r.answers},
             {"standard_correct", r.standard_correct},
             {"oracle_correct", r.oracle_correct},
             {"stop_reason", to_string(r.stop_reason)},
             {"iterations", r.iterations},
             {"failure", r.failure ? json(*r.failure) : json(nullptr)}};
}

void to_json(json& j, const CurvePoint& p) {
    j = json{{"iteration", p.iteration}, {"standard", p.standard}, {"oracle", p.oracle}};
}

void to_json(json& j, const RunReport& r) {
    j = json{{"variant", r.variant},
             {"max_iterations", r.max_iterations},
             {"report_iteration", r.report_iteration},
             {"modules", r.modules},
             {"config", r.config},
             {"config_digest", r.config_digest},
             {"standard_solve_rate", r.standard_solve_rate},
             {"oracle_solve_rate", r.oracle_solve_rate},
             {"aborted", r.aborted},
             {"curve", r.curve},
             {"problems", r.problems}};
}

std::string config_digest(const json& config) { return lm::sha256_hex(config.dump()); }

RunReport build_report(std::vector<RunTrace> traces, std::size_t max_iterations, std::size_t report_iteration,
                       const json& config, const std::vector<std::string>& modules, const std::string& variant) {
    if (traces.empty()) throw InputError("build_report needs at least one trace");
    if (report_iteration > max_iterations) throw ConfigError("report_iteration exceeds max_iterations");
    std::sort(traces.begin(), traces.end(), [](const RunTrace& a, const RunTrace& b) { return a.problem_id < b.problem_id; });

    RunReport report;
    report.variant = variant;
    report.max_iterations = max_iterations;
    report.report_iteration = report_iteration;
    report.modules = modules;
    report.config = config;
    report.config_digest = config_digest(config);

    for (const auto& t : traces) {
        ProblemResult r;
        r.id = t.problem_id;
        r.gold = t.gold_answer.value_or("");
        r.stop_reason = t.stop_reason;
        r.iterations = t.iterations.size();
        r.failure = t.failure;
        bool seen_correct = false;
        for (std::size_t k = 0; k <= max_iterations; ++k) {
            const Solution& s = t.solution_at(k);
            std::string answer = s.extracted_answer().value_or(std::string(kUnparseable));
            bool ok = t.gold_answer && oracle_verify(answer, *t.gold_answer);
            seen_correct = seen_correct || ok;
            r.answers.push_back(answer);
            r.standard_correct.push_back(ok);
            r.oracle_correct.push_back(seen_correct);
        }
        if (t.stop_reason == StopReason::Aborted) ++report.aborted;
        report.problems.push_back(std::move(r));
    }

    for (std::size_t k = 0; k <= max_iterations; ++k) {
        std::vector<bool> standard, oracle;
        for (const auto& p : report.problems) {
            standard.push_back(p.standard_correct[k]);
            oracle.push_back(p.oracle_correct[k]);
        }
        report.curve.push_back({k, solve_rate(standard), solve_rate(oracle)});
    }
    report.standard_solve_rate = report.curve[report_iteration].standard;
    report.oracle_solve_rate = report.curve[max_iterations].oracle;
    return report;
}

std::string report_json(const RunReport& report) { return json(report).dump(2) + "\n"; }

std::string render_report_text(const RunReport& report) {
    std::string out;
    out += fmt::format("variant: {}\n", report.variant);
    std::string mods;
    for (const auto& m : report.modules) mods += (mods.empty() ? "" : ", ") + m;
    if (!mods.empty()) out += fmt::format("modules: {}\n", mods);
    out += fmt::format("config digest: {}\n", report.config_digest);
    out += fmt::format("problems: {} (aborted: {})\n", report.problems.size(), report.aborted);
    out += fmt::format("standard solve rate @ iteration {}: {:.1f}%\n", report.report_iteration, report.standard_solve_rate);
    out += fmt::format("oracle solve rate @ iteration {}: {:.1f}%\n", report.max_iterations, report.oracle_solve_rate);
    out += "\niteration  standard  oracle\n";
    for (const auto& p : report.curve) {
        out += fmt::format("{:>9}  {:>8.1f}  {:>6.1f}\n", p.iteration, p.standard, p.oracle);
    }
    return out;
}

std::string render_curve_csv(const RunReport& report) {
    std::string out = "iteration,standard,oracle\n";
    for (const auto& p : report.curve) out += fmt::format("{},{:.1f},{:.1f}\n", p.iteration, p.standard, p.oracle);
    return out;
}

std::vector<RunTrace> run_dataset(const std::vector<ProblemRecord>& problems, const orchestrator::RunConfig& config,
                                  const RunnerContext& ctx) {
    config.validate();
    if (!ctx.prompts) throw ConfigError("run_dataset needs a prompt set");
    feedback::ModuleRegistry registry(config.modules, ctx.registry_options);

    std::vector<RunTrace> traces(problems.size());
    std::atomic<std::size_t> next{0};
    std::mutex out_mu;
    auto worker = [&] {
        for (std::size_t i = next++; i < problems.size(); i = next++) {
            RunTrace t = orchestrator::run_refinement(problems[i], config, ctx.agents, registry, *ctx.prompts, ctx.oracle);
            if (ctx.on_trace) {
                std::lock_guard lock(out_mu);
                ctx.on_trace(t);
            }
            traces[i] = std::move(t);
        }
    };
    std::size_t n = std::clamp<std::size_t>(ctx.parallelism, 1, std::max<std::size_t>(problems.size(), 1));
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex fail_mu;
    for (std::size_t i = 0; i < n; ++i) {
        pool.emplace_back([&] {
            try {
                worker();
            } catch (...) {
                std::lock_guard lock(fail_mu);
                if (!failure) failure = std::current_exception();
                next = problems.size();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
    std::sort(traces.begin(), traces.end(), [](const RunTrace& a, const RunTrace& b) { return a.problem_id < b.problem_id; });
    return traces;
}

std::string_view to_string(AblationPlan plan) {
    return plan == AblationPlan::LeaveOneOut ? "leave-one-out" : "strategy-sweep";
}

AblationPlan ablation_plan_from_string(std::string_view name) {
    if (name == "leave-one-out") return AblationPlan::LeaveOneOut;
    if (name == "strategy-sweep") return AblationPlan::StrategySweep;
    throw ConfigError("unknown ablation plan '" + std::string(name) + "' (expected leave-one-out or strategy-sweep)");
}

namespace {

bool is_syntax_checker(const FeedbackModuleSpec& spec) {
    return spec.backend == Backend::Interpreter || spec.category == ErrorCategory::ProgramSyntax;
}

}  // namespace

std::vector<AblationVariant> plan_ablation(const orchestrator::RunConfig& config, AblationPlan plan, Task task,
                                           const std::vector<std::string>& remove) {
    config.validate();
    bool programs = solution_kind_for(task) == SolutionKind::Program;
    std::vector<AblationVariant> out;
    if (plan == AblationPlan::StrategySweep) {
        out.push_back({"mixed", config, std::nullopt});
        for (auto [label, mode] : {std::pair{"all-eager", RefineMode::Eager}, std::pair{"all-lazy", RefineMode::Lazy}}) {
            auto c = config;
            for (auto& m : c.modules) m.mode = mode;
            out.push_back({label, c, std::nullopt});
        }
        return out;
    }

    if (config.modules.size() < 2) throw ConfigError("leave-one-out needs at least two modules");
    for (const auto& name : remove) {
        auto it = std::find_if(config.modules.begin(), config.modules.end(),
                               [&](const FeedbackModuleSpec& s) { return s.name == name; });
        if (it == config.modules.end()) throw ConfigError("ablation: unknown module '" + name + "'");
        if (programs && is_syntax_checker(*it)) {
            throw ConfigError("ablation: the syntax checker '" + name + "' cannot be removed for program solutions");
        }
    }
    for (std::size_t i = 0; i < config.modules.size(); ++i) {
        const auto& spec = config.modules[i];
        if (programs && is_syntax_checker(spec)) continue;
        if (!remove.empty() && std::find(remove.begin(), remove.end(), spec.name) == remove.end()) continue;
        auto c = config;
        c.modules.erase(c.modules.begin() + static_cast<std::ptrdiff_t>(i));
        out.push_back({"-" + spec.name, c, spec.name});
    }
    if (out.empty()) throw ConfigError("ablation: no removable modules");
    return out;
}

std::vector<RunReport> run_ablation(const orchestrator::RunConfig& config, const std::vector<ProblemRecord>& dataset,
                                    AblationPlan plan, const RunnerContext& ctx, const std::vector<std::string>& remove) {
    if (dataset.empty()) throw InputError("ablation needs a nonempty dataset");
    std::vector<RunReport> reports;
    for (const auto& v : plan_ablation(config, plan, dataset.front().task, remove)) {
        auto traces = run_dataset(dataset, v.config, ctx);
        std::vector<std::string> names;
        for (const auto& m : v.config.modules) names.push_back(m.name);
        reports.push_back(build_report(std::move(traces), v.config.max_iterations, v.config.report_iteration,
                                       json(v.config), names, v.label));
    }
    return reports;
}

std::string render_ablation_table(const RunReport& baseline, const std::vector<RunReport>& variants) {
    auto delta = [](double v, double base) {
        double d = std::round((v - base) * 10.0) / 10.0;
        if (d == 0.0) return std::string("0.0");
        return fmt::format("{:+.1f}", d);
    };
    std::size_t width = baseline.variant.size();
    for (const auto& r : variants) width = std::max(width, r.variant.size());
    width = std::max<std::size_t>(width, 7);
    std::string out = fmt::format("{:<{}}  {:>8}  {:>6}  {:>6}  {:>6}\n", "variant", width, "standard", "delta",
                                  "oracle", "delta");
    out += fmt::format("{:<{}}  {:>8.1f}  {:>6}  {:>6.1f}  {:>6}\n", baseline.variant, width,
                       baseline.standard_solve_rate, "", baseline.oracle_solve_rate, "");
    for (const auto& r : variants) {
        out += fmt::format("{:<{}}  {:>8.1f}  {:>6}  {:>6.1f}  {:>6}\n", r.variant, width, r.standard_solve_rate,
                           delta(r.standard_solve_rate, baseline.standard_solve_rate), r.oracle_solve_rate,
                           delta(r.oracle_solve_rate, baseline.oracle_solve_rate));
    }
    return out;
}

}  // namespace maf::eval

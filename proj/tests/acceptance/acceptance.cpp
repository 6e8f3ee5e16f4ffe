// One PASS/FAIL line per acceptance criterion. Exit status is nonzero when
// any criterion fails; the live smoke test is skipped unless
// MAF_LIVE_ENDPOINT is set.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "maf/checkers/arithmetic.hpp"
#include "maf/checkers/expression.hpp"
#include "maf/checkers/interpreter.hpp"
#include "maf/cli.hpp"
#include "maf/eval.hpp"
#include "maf/feedback.hpp"
#include "support/expr_oracle.hpp"
#include "support/jsonl.hpp"
#include "support/scenario.hpp"

namespace fs = std::filesystem;
using namespace maf;

namespace {

const std::string kFixtureDir = MAF_FIXTURE_DIR;
const std::string kPromptDir = MAF_PROMPT_DIR;

enum class Verdict { Pass, Fail, Skip };

struct Outcome {
    Verdict verdict = Verdict::Pass;
    std::string detail;
};

Outcome fail(std::string why) { return {Verdict::Fail, std::move(why)}; }

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("maf-acceptance-" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

struct ScenarioRun {
    RunTrace trace;
    std::vector<std::string> calls;
};

ScenarioRun run_scenario(const testing::Scenario& sc) {
    lm::ScriptedClient client(testing::scenario_rules(sc));
    auto registry = testing::scenario_registry(sc);
    auto prompts = testing::scenario_prompts();
    eval::TaskAnswerOracle oracle;
    ScenarioRun r;
    r.trace = orchestrator::run_refinement(testing::scenario_problem(sc), testing::scenario_config(sc),
                                           {&client, &client, &client}, registry, prompts, &oracle);
    for (const auto& req : client.call_log()) r.calls.push_back(testing::classify_call(req, sc));
    return r;
}

// Walks the call log against the trace: eager critics (each maybe followed by
// an eager refine) come before every lazy critic, then at most one lazy refine.
std::string check_loop_shape(const testing::Scenario& sc, const ScenarioRun& r) {
    const auto& t = r.trace;
    if (t.iterations.size() > sc.max_iterations) return "more iterations than T";
    if (r.calls.empty() || r.calls[0] != "G") return "first call is not the generator";
    std::size_t pos = 1;
    for (std::size_t idx = 0; idx < t.iterations.size(); ++idx) {
        const auto& it = t.iterations[idx];
        std::size_t refines = 0, eager_revisions = 0;
        for (const auto& m : sc.modules) {
            if (m.mode != RefineMode::Eager) continue;
            if (pos >= r.calls.size() || r.calls[pos] != "C:" + m.name) return "eager critic out of order";
            ++pos;
            if (pos < r.calls.size() && r.calls[pos] == "RE") {
                ++pos;
                ++refines;
            }
        }
        for (const auto& e : it.eager_events) eager_revisions += e.feedback.revision_required ? 1 : 0;
        for (const auto& m : sc.modules) {
            if (m.mode != RefineMode::Lazy) continue;
            if (pos >= r.calls.size() || r.calls[pos] != "C:" + m.name) return "lazy critic before eager work finished";
            ++pos;
        }
        if (pos < r.calls.size() && r.calls[pos] == "RL") {
            ++pos;
            ++refines;
        }
        if (refines > eager_revisions + 1) return "too many refiner calls in one iteration";
        bool all_clean = std::none_of(it.eager_events.begin(), it.eager_events.end(),
                                      [](const EagerEvent& e) { return e.feedback.revision_required; }) &&
                         std::none_of(it.lazy_feedbacks.begin(), it.lazy_feedbacks.end(),
                                      [](const Feedback& f) { return f.revision_required; });
        if (all_clean && it.solution_out != t.solution_at(idx)) return "clean feedback changed the solution";
    }
    if (pos != r.calls.size()) return "calls after the last recorded iteration";
    return {};
}

Outcome criterion1() {
    auto start = std::chrono::steady_clock::now();
    std::mt19937 rng(1);
    const int n = 200;
    for (int i = 0; i < n; ++i) {
        auto sc = testing::random_scenario(rng, false);
        auto r = run_scenario(sc);
        if (r.trace.stop_reason == StopReason::Aborted) return fail("scenario " + std::to_string(i) + " aborted");
        auto problem = check_loop_shape(sc, r);
        if (!problem.empty()) return fail("scenario " + std::to_string(i) + ": " + problem);
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs >= 10.0) return fail(fmt::format("took {:.1f} s", secs));
    return {Verdict::Pass, fmt::format("{} scenarios in {:.2f} s", n, secs)};
}

Outcome criterion2() {
    std::mt19937 rng(2);
    int stopped = 0;
    for (int i = 0; i < 200; ++i) {
        auto sc = testing::random_scenario(rng, true);
        auto r = run_scenario(sc);
        const auto& t = r.trace;
        // First boundary whose solution states the gold answer.
        std::optional<std::size_t> first;
        for (std::size_t k = 0; k <= t.iterations.size(); ++k) {
            if (t.solution_at(k).raw_text().find("answer is " + sc.gold + ".") != std::string::npos) {
                first = k;
                break;
            }
        }
        std::string id = "scenario " + std::to_string(i);
        if (first) {
            ++stopped;
            if (t.stop_reason != StopReason::OracleCorrect) return fail(id + ": correct answer did not stop the run");
            if (t.iterations.size() != *first) return fail(id + ": recorded iterations differ from k");
        } else if (t.stop_reason == StopReason::OracleCorrect) {
            return fail(id + ": stopped without a correct answer");
        }
        if (t.lm_call_count != r.calls.size()) return fail(id + ": LM calls after the oracle stop");
    }
    // Oracle accounting dominates standard accounting on random trace sets.
    std::mt19937 rng2(3);
    for (int set = 0; set < 50; ++set) {
        std::vector<RunTrace> traces;
        for (int i = 0; i < 8; ++i) {
            auto sc = testing::random_scenario(rng2, false);
            auto t = run_scenario(sc).trace;
            t.problem_id = "p" + std::to_string(i);
            traces.push_back(std::move(t));
        }
        auto report = eval::build_report(traces, 4, 2);
        for (const auto& p : report.curve) {
            if (p.oracle < p.standard) return fail("oracle rate below standard rate");
        }
        if (report.oracle_solve_rate < report.standard_solve_rate) return fail("oracle rate below standard rate");
    }
    return {Verdict::Pass, fmt::format("{} of 200 runs stopped by the oracle; 50 trace sets", stopped)};
}

Outcome criterion3() {
    std::mt19937 rng(4);
    static const std::vector<std::string> comments{"looks good", "Looks good.", "wrong sum", "unclear name",
                                                   "step looks good overall", "missing a step", "redundant line"};
    const int n = 2000;
    for (int i = 0; i < n; ++i) {
        std::vector<StepFeedback> steps;
        int len = static_cast<int>(rng() % 9);
        for (int k = 0; k < len; ++k) {
            const auto& c = comments[rng() % comments.size()];
            bool ok = c.find("ood") != std::string::npos;
            steps.push_back({rng() % 6, ok, c});
        }
        Feedback fb = make_feedback("m", ErrorCategory::Redundancy, steps, feedback::render_steps(steps));
        Feedback s = feedback::summarize_feedback(fb);
        std::vector<StepFeedback> expected;
        for (const auto& e : steps) {
            if (!e.ok) expected.push_back(e);
        }
        for (const auto& e : s.step_feedback) {
            std::string lower = e.comment;
            for (auto& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
            if (lower.find("looks good") != std::string::npos) return fail("ok-marker entry survived");
        }
        if (s.step_feedback != expected) return fail("order not preserved");
        if (feedback::summarize_feedback(s) != s) return fail("not idempotent");
    }
    return {Verdict::Pass, fmt::format("{} random feedbacks", n)};
}

std::string fmt15(double v) { return fmt::format("{:.15g}", v); }

Outcome criterion4() {
    std::mt19937_64 rng(5);
    std::string text;
    std::vector<bool> perturbed;
    std::uniform_real_distribution<double> delta(1e-3, 0.5);
    while (perturbed.size() < 1200) {
        auto tree = oracle::random_tree(rng, 4);
        if (tree->op == 0) continue;
        auto value = oracle::eval(*tree);
        if (!value || std::abs(*value) > 1e12 || (*value != 0 && std::abs(*value) < 1e-6)) continue;
        bool perturb = perturbed.size() % 2 == 1;
        double claimed = *value;
        if (perturb) claimed = *value == 0.0 ? 1.0 : *value * (1.0 + (rng() % 2 ? 1 : -1) * delta(rng));
        std::string rhs = fmt15(claimed);
        if (rhs.find('e') != std::string::npos) continue;
        if (!text.empty()) text += '\n';
        text += "We compute " + oracle::print(*tree) + " = " + rhs + " here.";
        perturbed.push_back(perturb);
    }
    Feedback fb = checkers::check_arithmetic(segment_solution(text, SolutionKind::ChainOfThought));
    if (fb.step_feedback.size() != perturbed.size()) return fail("not every equation was checked");
    for (std::size_t i = 0; i < perturbed.size(); ++i) {
        if (fb.step_feedback[i].ok == perturbed[i]) return fail("equation " + std::to_string(i) + " misjudged");
    }

    int agreed = 0;
    for (int trial = 0; agreed < 1000 && trial < 5000; ++trial) {
        auto tree = oracle::random_tree(rng, 5);
        auto expected = oracle::eval(*tree);
        if (!expected) continue;
        double got = checkers::evaluate(checkers::parse_expression(oracle::print(*tree)));
        if (!oracle::rel_close(got, *expected, 1e-12)) return fail("evaluator disagrees on " + oracle::print(*tree));
        ++agreed;
    }
    if (agreed < 1000) return fail("too few evaluable expressions");
    return {Verdict::Pass, fmt::format("{} equations, {} expressions", perturbed.size(), agreed)};
}

Outcome criterion5() {
    auto program = [](const std::string& s) { return segment_solution(s, SolutionKind::Program); };
    auto broken = testing::read_jsonl(kFixtureDir + "/programs/broken.jsonl");
    for (const auto& c : broken) {
        Feedback fb = checkers::check_program_syntax(program(c.at("program").get<std::string>()), {});
        if (fb.step_feedback.size() != 1 || fb.step_feedback[0].ok ||
            fb.step_feedback[0].step_index + 1 != c.at("error_line").get<std::size_t>()) {
            return fail("broken fixture " + c.at("id").get<std::string>());
        }
    }
    auto clean = testing::read_jsonl(kFixtureDir + "/programs/clean.jsonl");
    for (const auto& c : clean) {
        auto r = checkers::execute_program(program(c.at("program").get<std::string>()), {}, {});
        if (r.stdout_text != c.at("stdout").get<std::string>()) return fail("clean fixture " + c.at("id").get<std::string>());
    }
    checkers::SandboxPolicy policy;
    policy.timeout_s = 1.0;
    auto start = std::chrono::steady_clock::now();
    auto r = checkers::execute_program(program("while True:\n    pass"), {}, policy);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!r.timed_out) return fail("infinite loop was not stopped");
    if (secs > policy.timeout_s + 1.0) return fail(fmt::format("timeout overshoot: {:.2f} s", secs));
    return {Verdict::Pass, fmt::format("{} broken, {} clean, loop stopped after {:.2f} s", broken.size(), clean.size(), secs)};
}

std::string toy_config(const fs::path& dir, const std::string& base = "toy") {
    json c = json::parse(slurp(fs::path(kFixtureDir) / base / "config.json"));
    fs::path fixture = fs::path(kFixtureDir) / base;
    c["dataset"] = (fixture / c["dataset"].get<std::string>()).lexically_normal().string();
    c["prompt_dir"] = (fixture / c["prompt_dir"].get<std::string>()).lexically_normal().string();
    c["lm"]["script_path"] = (fixture / c["lm"]["script_path"].get<std::string>()).string();
    fs::path path = dir / (base + "-config.json");
    std::ofstream(path) << c.dump(2);
    return path.string();
}

Outcome criterion6() {
    fs::path dir = scratch("determinism");
    std::ostringstream out, err;
    auto cfg = toy_config(dir);
    cli::Overrides rec;
    rec.out_dir = (dir / "rec").string();
    rec.session = lm::SessionMode::Record;
    rec.session_path = (dir / "session.jsonl").string();
    if (cli::cmd_run(cfg, rec, out, err) != cli::kExitOk) return fail("record run failed: " + err.str());
    for (std::string name : {"a", "b"}) {
        cli::Overrides o;
        o.out_dir = (dir / name).string();
        o.session = lm::SessionMode::Replay;
        o.session_path = (dir / "session.jsonl").string();
        if (cli::cmd_run(cfg, o, out, err) != cli::kExitOk) return fail("replay run failed: " + err.str());
    }
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(dir / "a" / "traces")) {
        if (slurp(e.path()) != slurp(dir / "b" / "traces" / e.path().filename())) {
            return fail("trace " + e.path().filename().string() + " differs");
        }
        ++files;
    }
    for (std::string f : {"report.json", "report.txt", "curve.csv"}) {
        if (slurp(dir / "a" / f) != slurp(dir / "b" / f)) return fail(f + " differs");
    }
    fs::remove_all(dir);
    return {Verdict::Pass, fmt::format("{} traces and 3 report files identical", files)};
}

Outcome criterion7() {
    orchestrator::RunConfig config;
    config.budgets = lm::TokenBudget::for_task(Task::Math);
    for (const auto& s : feedback::default_roster(Task::Math)) {
        if (s.backend == Backend::LmPrompt) config.modules.push_back(s);
    }
    if (config.modules.size() != 4) return fail("expected a 4-module roster");
    auto dataset = eval::load_dataset(kFixtureDir + "/toy/math.jsonl", eval::DatasetFormat::JsonlMath);
    auto client = lm::ScriptedClient::from_file(kFixtureDir + "/toy/script.json");
    auto prompts = orchestrator::PromptSet::load(kPromptDir, Task::Math);
    eval::TaskAnswerOracle oracle;
    eval::RunnerContext ctx;
    ctx.agents = {client.get(), client.get(), client.get()};
    ctx.prompts = &prompts;
    ctx.registry_options.prompt_dir = kPromptDir;
    ctx.registry_options.task = Task::Math;
    ctx.oracle = &oracle;

    auto reports = eval::run_ablation(config, dataset, eval::AblationPlan::LeaveOneOut, ctx);
    if (reports.size() != 4) return fail(fmt::format("{} leave-one-out reports", reports.size()));
    json full = config;
    std::set<std::string> digests;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        json variant = reports[i].config;
        json expected = full;
        expected["modules"].erase(i);
        if (variant != expected) return fail("variant " + reports[i].variant + " differs beyond its removed module");
        if (reports[i].variant != "-" + config.modules[i].name) return fail("unexpected label " + reports[i].variant);
        digests.insert(reports[i].config_digest);
    }
    if (digests.size() != 4 || digests.count(eval::config_digest(full))) return fail("config digests collide");

    auto sweep = eval::plan_ablation(config, eval::AblationPlan::StrategySweep, Task::Math);
    std::vector<std::string> labels;
    for (const auto& v : sweep) labels.push_back(v.label);
    if (labels != std::vector<std::string>{"mixed", "all-eager", "all-lazy"}) return fail("strategy sweep labels");
    return {Verdict::Pass, "4 leave-one-out variants; sweep is mixed/all-eager/all-lazy"};
}

Outcome criterion8() {
    fs::path dir = scratch("overrefine");
    std::ostringstream out, err;
    cli::Overrides o;
    o.out_dir = (dir / "run").string();
    if (cli::cmd_run(toy_config(dir, "overrefine"), o, out, err) != cli::kExitOk) return fail("run failed: " + err.str());
    std::ostringstream rep;
    if (cli::cmd_report((dir / "run").string(), (dir / "rep").string(), rep, err) != cli::kExitOk) {
        return fail("report failed: " + err.str());
    }
    std::istringstream csv(slurp(dir / "rep" / "curve.csv"));
    std::string line;
    std::getline(csv, line);
    std::vector<double> standard, oracle_rate;
    while (std::getline(csv, line)) {
        std::istringstream cells(line);
        std::string k, s, o2;
        std::getline(cells, k, ',');
        std::getline(cells, s, ',');
        std::getline(cells, o2, ',');
        standard.push_back(std::stod(s));
        oracle_rate.push_back(std::stod(o2));
    }
    if (standard.size() != 5) return fail("curve has wrong length");
    bool peak = standard[2] > standard[1] && standard[2] > standard[3] && standard[3] > standard[4];
    if (!peak) return fail("standard curve does not peak at iteration 2");
    for (std::size_t k = 1; k < oracle_rate.size(); ++k) {
        if (oracle_rate[k] < oracle_rate[k - 1]) return fail("oracle curve decreases");
    }
    if (rep.str().find("2,75.0,75.0\n3,25.0,75.0\n4,0.0,75.0") == std::string::npos) return fail("rendered table");
    fs::remove_all(dir);
    return {Verdict::Pass, fmt::format("standard {:.1f} {:.1f} {:.1f} {:.1f} {:.1f}", standard[0], standard[1],
                                       standard[2], standard[3], standard[4])};
}

Outcome criterion9() {
    const char* endpoint = std::getenv("MAF_LIVE_ENDPOINT");
    if (!endpoint || !*endpoint) return {Verdict::Skip, "set MAF_LIVE_ENDPOINT to run"};
    const char* model = std::getenv("MAF_LIVE_MODEL");
    fs::path dir = scratch("live");
    auto sample = eval::load_dataset(kFixtureDir + "/sample/math500.jsonl", eval::DatasetFormat::JsonlMath);
    sample.resize(10);
    std::ofstream(dir / "ten.jsonl") << eval::dataset_to_jsonl(sample);
    json cfg{{"task", "math"},
             {"dataset", (dir / "ten.jsonl").string()},
             {"prompt_dir", kPromptDir},
             {"out", (dir / "run").string()},
             {"lm", {{"backend", "openai"}, {"endpoint", {{"base_url", endpoint}}}}}};
    if (model) cfg["lm"]["endpoint"]["model"] = model;
    std::ofstream(dir / "config.json") << cfg.dump(2);
    std::ostringstream out, err;
    int code = cli::cmd_run((dir / "config.json").string(), {}, out, err);
    if (code != cli::kExitOk) return fail(fmt::format("exit {}: {}", code, err.str()));
    std::size_t traces = 0;
    for (const auto& e : fs::directory_iterator(dir / "run" / "traces")) {
        try {
            trace_from_jsonl_line(slurp(e.path()));
        } catch (const std::exception& ex) {
            return fail("invalid trace " + e.path().string() + ": " + ex.what());
        }
        ++traces;
    }
    if (traces != 10) return fail(fmt::format("{} traces", traces));
    json report = json::parse(slurp(dir / "run" / "report.json"));
    double standard = report["standard_solve_rate"], oracle_rate = report["oracle_solve_rate"];
    if (oracle_rate < standard) return fail("oracle rate below standard rate");
    return {Verdict::Pass, fmt::format("standard {:.1f}%, oracle {:.1f}%", standard, oracle_rate)};
}

}  // namespace

int main() {
    spdlog::set_level(spdlog::level::off);
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"refinement loop conformance", criterion1},
        {"oracle protocol", criterion2},
        {"selective summarization", criterion3},
        {"arithmetic checker vs independent evaluator", criterion4},
        {"syntax checker and executor fixtures", criterion5},
        {"replay determinism", criterion6},
        {"ablation harness", criterion7},
        {"over-refinement observability", criterion8},
        {"live smoke test", criterion9},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = fail(std::string("exception: ") + e.what());
        }
        const char* tag = o.verdict == Verdict::Pass ? "PASS" : o.verdict == Verdict::Fail ? "FAIL" : "SKIP";
        if (o.verdict == Verdict::Fail) ++failed;
        std::cout << tag << "  " << (i + 1) << ". " << criteria[i].first;
        while (!o.detail.empty() && o.detail.back() == '\n') o.detail.pop_back();
        std::replace(o.detail.begin(), o.detail.end(), '\n', ' ');
        if (!o.detail.empty()) std::cout << " (" << o.detail << ")";
        std::cout << "\n";
    }
    return failed ? 1 : 0;
}

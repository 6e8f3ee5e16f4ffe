#include "maf/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "maf/feedback.hpp"
#include "maf/prompts.hpp"

namespace maf::cli {

namespace fs = std::filesystem;

namespace {

const std::set<std::string> kTopLevelKeys{"task",  "dataset",     "dataset_format", "prompt_dir", "out",
                                          "parallelism", "seed", "lm",           "session",    "interpreter",
                                          "run"};

std::string resolve(const std::string& path, const std::string& base_dir) {
    if (path.empty()) return path;
    fs::path p(path);
    if (p.is_relative()) p = fs::path(base_dir) / p;
    return p.lexically_normal().string();
}

// Reads one field, turning JSON errors into ConfigErrors that name it.
template <typename T>
T field(const json& j, const std::string& key, const std::string& path, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(path + key + ": " + e.what());
    }
}

template <typename F>
auto with_path(const std::string& path, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    } catch (const InputError& e) {
        throw ConfigError(path + ": " + e.what());
    } catch (const SerializationError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

orchestrator::RunConfig parse_run(const json& j, Task task, const std::string& default_model) {
    if (!j.is_object()) throw ConfigError("run: expected an object");
    for (const auto& [key, value] : j.items()) {
        if (key == "modules") continue;
        with_path("run." + key, [&] {
            orchestrator::RunConfig one;
            from_json(json{{key, value}}, one);
            json back = one;
            if (!back.contains(key)) throw ConfigError("unknown field");
            return 0;
        });
    }
    std::vector<FeedbackModuleSpec> modules;
    if (j.contains("modules")) {
        const json& mods = j.at("modules");
        if (!mods.is_array()) throw ConfigError("run.modules: expected a list");
        for (std::size_t i = 0; i < mods.size(); ++i) {
            modules.push_back(with_path(fmt::format("run.modules[{}]", i),
                                        [&] { return mods[i].get<FeedbackModuleSpec>(); }));
        }
    } else {
        modules = feedback::default_roster(task);
    }
    orchestrator::RunConfig run = j.get<orchestrator::RunConfig>();
    run.modules = std::move(modules);
    if (!j.contains("budgets")) run.budgets = lm::TokenBudget::for_task(task);
    if (!j.contains("decoding") || !j.at("decoding").contains("model")) run.decoding.model = default_model;
    return run;
}

std::vector<FeedbackModuleSpec> known_modules(const AppConfig& config) {
    std::vector<FeedbackModuleSpec> known = config.run.modules;
    auto add = [&](const FeedbackModuleSpec& s) {
        auto same = [&](const FeedbackModuleSpec& k) { return k.name == s.name; };
        if (std::none_of(known.begin(), known.end(), same)) known.push_back(s);
    };
    for (const auto& s : feedback::default_roster(config.task)) add(s);
    add(feedback::arithmetic_spec());
    return known;
}

std::string join(const std::vector<std::string>& items, const char* sep = ", ") {
    std::string out;
    for (const auto& s : items) out += (out.empty() ? "" : sep) + s;
    return out;
}

std::vector<FeedbackModuleSpec> pick_modules(const AppConfig& config, const std::vector<std::string>& names) {
    auto known = known_modules(config);
    std::vector<std::string> known_names;
    for (const auto& k : known) known_names.push_back(k.name);
    std::vector<FeedbackModuleSpec> out;
    for (const auto& n : names) {
        auto it = std::find_if(known.begin(), known.end(), [&](const FeedbackModuleSpec& k) { return k.name == n; });
        if (it == known.end()) {
            throw ConfigError("unknown module '" + n + "'; known modules: " + join(known_names));
        }
        out.push_back(*it);
    }
    return out;
}

void write_file(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw InputError("cannot write " + tmp.string());
        f << content;
        if (!f) throw InputError("cannot write " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot read " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// Owns the LM clients for one command.
struct ClientStack {
    std::unique_ptr<lm::Client> base;
    std::unique_ptr<lm::Client> session;

    lm::Client* get() { return session ? session.get() : base.get(); }
};

ClientStack make_clients(const AppConfig& config) {
    ClientStack stack;
    if (config.session.mode != lm::SessionMode::Replay) {
        if (config.lm.backend == "scripted") {
            stack.base = lm::ScriptedClient::from_file(*config.lm.script_path);
        } else {
            stack.base = std::make_unique<lm::OpenAiChatClient>(config.lm.endpoint);
        }
    }
    if (config.session.mode != lm::SessionMode::Live) {
        stack.session = lm::record_and_replay(*config.session.path, config.session.mode, stack.base.get());
    }
    return stack;
}

feedback::RegistryOptions registry_options(const AppConfig& config) {
    feedback::RegistryOptions o;
    o.prompt_dir = config.prompt_dir;
    o.task = config.task;
    o.interpreter = config.interpreter;
    return o;
}

struct Prepared {
    std::vector<ProblemRecord> dataset;
    orchestrator::PromptSet prompts;
};

// Everything that can fail before the first LM call.
Prepared prepare(const AppConfig& config) {
    config.validate();
    Prepared p;
    p.prompts = with_path("prompt_dir", [&] { return orchestrator::PromptSet::load(config.prompt_dir, config.task); });
    with_path("run.modules", [&] {
        feedback::ModuleRegistry(config.run.modules, registry_options(config));
        return 0;
    });
    p.dataset = with_path("dataset", [&] { return eval::load_dataset(config.dataset, config.dataset_format); });
    if (p.dataset.empty()) throw ConfigError("dataset: no records in " + config.dataset);
    return p;
}

void write_report_files(const fs::path& dir, const eval::RunReport& report) {
    write_file(dir / "report.json", eval::report_json(report));
    write_file(dir / "report.txt", eval::render_report_text(report));
    write_file(dir / "curve.csv", eval::render_curve_csv(report));
}

std::vector<std::string> module_names(const orchestrator::RunConfig& run) {
    std::vector<std::string> out;
    for (const auto& m : run.modules) out.push_back(m.name);
    return out;
}

template <typename F>
int guarded(std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const lm::LmError& e) {
        err << "error: " << e.what() << "\n";
        return kExitTransport;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const json::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    }
}

}  // namespace

void AppConfig::validate() const {
    auto need_file = [](const std::string& key, const std::string& path) {
        if (path.empty()) throw ConfigError(key + ": required");
        if (!fs::is_regular_file(path)) throw ConfigError(key + ": file '" + path + "' does not exist");
    };
    need_file("dataset", dataset);
    if (eval::task_for(dataset_format) != task) {
        throw ConfigError("dataset_format: '" + std::string(eval::to_string(dataset_format)) + "' does not hold " +
                          std::string(to_string(task)) + " problems");
    }
    if (prompt_dir.empty()) throw ConfigError("prompt_dir: required");
    if (!fs::is_directory(prompt_dir)) throw ConfigError("prompt_dir: directory '" + prompt_dir + "' does not exist");
    if (out_dir.empty()) throw ConfigError("out: required");
    if (parallelism == 0) throw ConfigError("parallelism: must be at least 1");
    if (lm.backend != "openai" && lm.backend != "scripted") {
        throw ConfigError("lm.backend: expected 'openai' or 'scripted', got '" + lm.backend + "'");
    }
    if (session.mode != lm::SessionMode::Replay && lm.backend == "scripted") {
        need_file("lm.script_path", lm.script_path.value_or(""));
    }
    if (session.mode != lm::SessionMode::Live && !session.path) {
        throw ConfigError("session.path: required in " + std::string(lm::to_string(session.mode)) + " mode");
    }
    if (session.mode == lm::SessionMode::Replay) need_file("session.path", *session.path);
    if (interpreter.run_cmd.empty()) throw ConfigError("interpreter.run_cmd: must not be empty");
    if (interpreter.syntax_cmd.empty()) throw ConfigError("interpreter.syntax_cmd: must not be empty");
    if (interpreter.timeout_s <= 0) throw ConfigError("interpreter.timeout_s: must be positive");
    with_path("run", [&] {
        run.validate();
        return 0;
    });
}

AppConfig parse_app_config(const json& j, const std::string& base_dir) {
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (!kTopLevelKeys.count(key)) throw ConfigError(key + ": unknown field");
    }
    AppConfig c;
    c.task = with_path("task", [&] { return task_from_string(field<std::string>(j, "task", "", "")); });
    c.dataset = resolve(field<std::string>(j, "dataset", "", ""), base_dir);
    c.dataset_format = j.contains("dataset_format")
                           ? with_path("dataset_format",
                                       [&] {
                                           return eval::dataset_format_from_string(
                                               field<std::string>(j, "dataset_format", "", ""));
                                       })
                           : eval::format_for(c.task);
    c.prompt_dir = resolve(field<std::string>(j, "prompt_dir", "", ""), base_dir);
    c.out_dir = resolve(field<std::string>(j, "out", "", "out"), base_dir);
    c.parallelism = field<std::size_t>(j, "parallelism", "", 1);
    c.seed = field<std::uint64_t>(j, "seed", "", 0);

    json lm_j = field<json>(j, "lm", "", json::object());
    c.lm.backend = field<std::string>(lm_j, "backend", "lm.", "openai");
    if (lm_j.contains("script_path")) c.lm.script_path = resolve(field<std::string>(lm_j, "script_path", "lm.", ""), base_dir);
    c.lm.endpoint = field<lm::EndpointConfig>(lm_j, "endpoint", "lm.", {});

    json session_j = field<json>(j, "session", "", json::object());
    c.session.mode = with_path("session.mode", [&] {
        return lm::session_mode_from_string(field<std::string>(session_j, "mode", "session.", "live"));
    });
    if (session_j.contains("path")) c.session.path = resolve(field<std::string>(session_j, "path", "session.", ""), base_dir);

    json interp = field<json>(j, "interpreter", "", json::object());
    checkers::InterpreterConfig d;
    c.interpreter.run_cmd = field(interp, "run_cmd", "interpreter.", d.run_cmd);
    c.interpreter.syntax_cmd = field(interp, "syntax_cmd", "interpreter.", d.syntax_cmd);
    c.interpreter.file_name = field(interp, "file_name", "interpreter.", d.file_name);
    c.interpreter.timeout_s = field(interp, "timeout_s", "interpreter.", d.timeout_s);
    c.interpreter.process_cap = field(interp, "process_cap", "interpreter.", d.process_cap);

    std::string default_model = c.lm.backend == "scripted" ? "scripted" : c.lm.endpoint.model;
    c.run = parse_run(field<json>(j, "run", "", json::object()), c.task, default_model);
    return c;
}

AppConfig load_app_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open '" + path + "'");
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
    }
    return parse_app_config(j, fs::absolute(path).parent_path().string());
}

json app_config_json(const AppConfig& c) {
    json j{{"task", to_string(c.task)},
           {"dataset", c.dataset},
           {"dataset_format", eval::to_string(c.dataset_format)},
           {"prompt_dir", c.prompt_dir},
           {"out", c.out_dir},
           {"parallelism", c.parallelism},
           {"seed", c.seed},
           {"lm", {{"backend", c.lm.backend}, {"endpoint", c.lm.endpoint}}},
           {"session", {{"mode", lm::to_string(c.session.mode)}}},
           {"interpreter",
            {{"run_cmd", c.interpreter.run_cmd},
             {"syntax_cmd", c.interpreter.syntax_cmd},
             {"file_name", c.interpreter.file_name},
             {"timeout_s", c.interpreter.timeout_s},
             {"process_cap", c.interpreter.process_cap}}},
           {"run", c.run}};
    if (c.lm.script_path) j["lm"]["script_path"] = *c.lm.script_path;
    if (c.session.path) j["session"]["path"] = *c.session.path;
    return j;
}

void apply_overrides(AppConfig& c, const Overrides& o) {
    if (o.max_iterations) {
        c.run.max_iterations = *o.max_iterations;
        // Keep the report point inside the shorter run unless it was set too.
        if (!o.report_iteration) c.run.report_iteration = std::min(c.run.report_iteration, c.run.max_iterations);
    }
    if (o.report_iteration) c.run.report_iteration = *o.report_iteration;
    if (o.oracle) c.run.oracle_mode = true;
    if (o.modules) c.run.modules = pick_modules(c, *o.modules);
    if (o.session) c.session.mode = *o.session;
    if (o.session_path) c.session.path = fs::absolute(*o.session_path).lexically_normal().string();
    if (o.out_dir) c.out_dir = fs::absolute(*o.out_dir).lexically_normal().string();
    if (o.parallelism) c.parallelism = *o.parallelism;
}

json experiment_json(const AppConfig& c) {
    return json{{"task", to_string(c.task)}, {"dataset", c.dataset}, {"run", c.run}};
}

std::string trace_file_name(const std::string& id) {
    std::string safe;
    for (char ch : id) {
        bool ok = std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.';
        safe += ok ? ch : '_';
    }
    if (safe.empty() || safe[0] == '.' || safe != id) safe += "-" + lm::sha256_hex(id).substr(0, 8);
    return safe + ".jsonl";
}

int cmd_run(const std::string& config_path, const Overrides& overrides, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        AppConfig config = load_app_config(config_path);
        apply_overrides(config, overrides);
        Prepared prep = prepare(config);

        fs::path out_dir(config.out_dir);
        fs::path trace_dir = out_dir / "traces";
        fs::path config_file = out_dir / "config.json";
        if (fs::exists(config_file)) {
            json previous = json::parse(read_file(config_file));
            if (!previous.contains("run") || experiment_json(parse_app_config(previous, "/")) != experiment_json(config)) {
                throw ConfigError("out: '" + out_dir.string() +
                                  "' holds a run with a different configuration; choose another --out");
            }
        }
        fs::create_directories(trace_dir);
        write_file(config_file, app_config_json(config).dump(2) + "\n");

        // Resume: keep finished traces, rerun missing and aborted ones.
        std::vector<RunTrace> done;
        std::vector<ProblemRecord> todo;
        for (const auto& p : prep.dataset) {
            fs::path f = trace_dir / trace_file_name(p.id);
            if (fs::exists(f)) {
                try {
                    RunTrace t = trace_from_jsonl_line(read_file(f));
                    if (t.problem_id == p.id && t.stop_reason != StopReason::Aborted) {
                        done.push_back(std::move(t));
                        continue;
                    }
                } catch (const std::exception& e) {
                    err << "warning: rerunning " << p.id << ": " << e.what() << "\n";
                }
            }
            todo.push_back(p);
        }
        if (!done.empty()) err << "resuming: " << done.size() << " of " << prep.dataset.size() << " problems done\n";

        ClientStack clients = make_clients(config);
        eval::TaskAnswerOracle oracle(config.interpreter);
        eval::RunnerContext ctx;
        ctx.agents = {clients.get(), clients.get(), clients.get()};
        ctx.prompts = &prep.prompts;
        ctx.registry_options = registry_options(config);
        ctx.oracle = &oracle;
        ctx.parallelism = config.parallelism;
        ctx.on_trace = [&](const RunTrace& t) {
            write_file(trace_dir / trace_file_name(t.problem_id), to_jsonl_line(t));
        };
        std::vector<RunTrace> fresh = todo.empty() ? std::vector<RunTrace>{} : eval::run_dataset(todo, config.run, ctx);

        std::size_t failed = 0;
        for (const auto& t : fresh) {
            if (t.stop_reason == StopReason::Aborted) {
                ++failed;
                err << "error: problem " << t.problem_id << ": " << t.failure.value_or("aborted") << "\n";
            }
        }
        std::vector<RunTrace> all = std::move(done);
        for (auto& t : fresh) all.push_back(std::move(t));
        auto report = eval::build_report(std::move(all), config.run.max_iterations, config.run.report_iteration,
                                         json(config.run), module_names(config.run));
        write_report_files(out_dir, report);
        out << eval::render_report_text(report);
        return failed ? kExitTransport : kExitOk;
    });
}

int cmd_check(const std::string& solution_file, const std::vector<std::string>& names, const std::string& config_path,
              const CheckOptions& options, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        AppConfig config = load_app_config(config_path);
        if (names.empty()) throw ConfigError("modules: name at least one module");
        auto specs = pick_modules(config, names);
        std::string text = read_file(solution_file);
        while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
        if (text.empty()) throw InputError(solution_file + ": empty solution");
        Solution solution = segment_solution(text, options.kind.value_or(solution_kind_for(config.task)));

        feedback::ModuleRegistry registry(specs, registry_options(config));
        bool needs_lm = std::any_of(specs.begin(), specs.end(),
                                    [](const FeedbackModuleSpec& s) { return s.backend == Backend::LmPrompt; });
        ClientStack clients;
        if (needs_lm) clients = make_clients(config);
        feedback::FeedbackContext ctx{needs_lm ? clients.get() : nullptr, config.run.decoding.model,
                                      config.run.ok_marker};
        ProblemRecord problem;
        problem.id = "check";
        problem.task = config.task;
        problem.question = options.problem;

        for (const auto& module : registry.modules()) {
            const auto& spec = module->spec();
            Feedback fb = feedback::generate_feedback(*module, solution, problem, ctx);
            Feedback summary = feedback::summarize_feedback(fb, config.run.ok_marker);
            out << "== " << spec.name << " (" << to_string(spec.category) << ", " << to_string(spec.mode) << ")\n";
            out << (fb.unparsed ? fb.raw_text : feedback::render_steps(fb.step_feedback)) << "\n";
            out << "-- summarized" << (summary.revision_required ? "" : " (no revision needed)") << "\n";
            std::string body = summary.unparsed ? summary.raw_text : feedback::render_steps(summary.step_feedback);
            out << body << (body.empty() ? "" : "\n");
        }
        return kExitOk;
    });
}

int cmd_ablate(const std::string& config_path, eval::AblationPlan plan, const std::vector<std::string>& remove,
               const Overrides& overrides, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        AppConfig config = load_app_config(config_path);
        apply_overrides(config, overrides);
        Prepared prep = prepare(config);
        auto variants = eval::plan_ablation(config.run, plan, config.task, remove);

        ClientStack clients = make_clients(config);
        eval::TaskAnswerOracle oracle(config.interpreter);
        eval::RunnerContext ctx;
        ctx.agents = {clients.get(), clients.get(), clients.get()};
        ctx.prompts = &prep.prompts;
        ctx.registry_options = registry_options(config);
        ctx.oracle = &oracle;
        ctx.parallelism = config.parallelism;

        fs::path out_dir = fs::path(config.out_dir) / "ablation";
        fs::create_directories(out_dir);
        write_file(out_dir / "config.json", app_config_json(config).dump(2) + "\n");
        auto run_variant = [&](const std::string& label, const orchestrator::RunConfig& run) {
            auto traces = eval::run_dataset(prep.dataset, run, ctx);
            auto report = eval::build_report(traces, run.max_iterations, run.report_iteration, json(run),
                                             module_names(run), label);
            fs::path dir = out_dir / (label[0] == '-' ? "without" + label : label);
            fs::create_directories(dir / "traces");
            for (const auto& t : traces) write_file(dir / "traces" / trace_file_name(t.problem_id), to_jsonl_line(t));
            write_report_files(dir, report);
            return report;
        };

        eval::RunReport baseline;
        std::vector<eval::RunReport> rows;
        if (plan == eval::AblationPlan::LeaveOneOut) {
            baseline = run_variant("full", config.run);
            for (const auto& v : variants) rows.push_back(run_variant(v.label, v.config));
        } else {
            baseline = run_variant(variants.front().label, variants.front().config);
            for (std::size_t i = 1; i < variants.size(); ++i) {
                rows.push_back(run_variant(variants[i].label, variants[i].config));
            }
        }
        std::string table = eval::render_ablation_table(baseline, rows);
        write_file(out_dir / "ablation.txt", table);
        out << table;
        return baseline.aborted ? kExitTransport : kExitOk;
    });
}

int cmd_report(const std::string& trace_dir, const std::optional<std::string>& out_dir, std::ostream& out,
               std::ostream& err) {
    return guarded(err, [&] {
        fs::path dir(trace_dir);
        if (!fs::is_directory(dir)) throw ConfigError("trace directory '" + trace_dir + "' does not exist");
        if (fs::is_directory(dir / "traces")) dir /= "traces";

        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(dir)) {
            if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        std::vector<RunTrace> traces;
        for (const auto& f : files) {
            std::vector<RunTrace> in_file;
            try {
                std::istringstream lines(read_file(f));
                std::string line;
                while (std::getline(lines, line)) {
                    if (!line.empty()) in_file.push_back(trace_from_jsonl_line(line));
                }
                if (in_file.empty()) throw InputError("no traces");
            } catch (const std::exception& e) {
                err << "warning: skipping corrupt trace file " << f.string() << ": " << e.what() << "\n";
                continue;
            }
            for (auto& t : in_file) traces.push_back(std::move(t));
        }
        if (traces.empty()) throw InputError("no readable traces in '" + dir.string() + "'");

        // A run directory records its configuration next to the traces.
        std::size_t t_max = 0;
        for (const auto& t : traces) t_max = std::max(t_max, t.max_iterations);
        json run_json = json::object();
        std::vector<std::string> names;
        std::size_t report_iteration = std::min<std::size_t>(2, t_max);
        fs::path config_file = dir.parent_path() / "config.json";
        if (fs::exists(config_file)) {
            json cfg = json::parse(read_file(config_file));
            if (cfg.contains("run")) {
                auto run = cfg.at("run").get<orchestrator::RunConfig>();
                run_json = run;
                names = module_names(run);
                t_max = std::max(t_max, run.max_iterations);
                report_iteration = std::min(run.report_iteration, t_max);
            }
        }
        if (report_iteration == 0) report_iteration = std::min<std::size_t>(1, t_max);
        auto report = eval::build_report(std::move(traces), t_max, report_iteration, run_json, names);
        if (out_dir) {
            fs::create_directories(*out_dir);
            write_report_files(*out_dir, report);
        }
        out << eval::render_report_text(report) << "\n" << eval::render_curve_csv(report);
        return kExitOk;
    });
}

}  // namespace maf::cli

#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "maf/cli.hpp"

namespace {

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto comma = s.find(',', start);
        std::string item = s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!item.empty()) out.push_back(item);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

struct OverrideFlags {
    std::size_t max_iterations = 0;
    std::size_t report_iteration = 0;
    bool oracle = false;
    std::string modules;
    std::string session;
    std::string session_path;
    std::string out;
    std::size_t parallelism = 0;

    void attach(CLI::App* cmd) {
        cmd->add_option("--max-iterations", max_iterations, "Refinement iterations T");
        cmd->add_option("--report-iteration", report_iteration, "Iteration reported under standard accounting");
        cmd->add_flag("--oracle", oracle, "Stop each problem once its answer is correct");
        cmd->add_option("--modules", modules, "Comma-separated feedback modules to keep, in order");
        cmd->add_option("--session", session, "LM session mode")->check(CLI::IsMember({"live", "record", "replay"}));
        cmd->add_option("--session-path", session_path, "Session file for record or replay");
        cmd->add_option("--out", out, "Output directory");
        cmd->add_option("--parallelism", parallelism, "Problems run at once");
    }

    maf::cli::Overrides get(CLI::App* cmd) const {
        maf::cli::Overrides o;
        if (cmd->count("--max-iterations")) o.max_iterations = max_iterations;
        if (cmd->count("--report-iteration")) o.report_iteration = report_iteration;
        o.oracle = oracle;
        if (cmd->count("--modules")) o.modules = split_commas(modules);
        if (cmd->count("--session")) o.session = maf::lm::session_mode_from_string(session);
        if (cmd->count("--session-path")) o.session_path = session_path;
        if (cmd->count("--out")) o.out_dir = out;
        if (cmd->count("--parallelism")) o.parallelism = parallelism;
        return o;
    }
};

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("maf"));

    CLI::App app{"Multi-aspect feedback refinement runner"};
    app.require_subcommand(1);

    std::string config_path;
    OverrideFlags flags;
    auto* run = app.add_subcommand("run", "Refine every problem in the dataset and write traces and a report");
    run->add_option("--config", config_path, "Config file")->required();
    flags.attach(run);

    std::string solution_file, check_modules, problem, kind;
    auto* check = app.add_subcommand("check", "Run feedback modules on one solution");
    check->add_option("solution", solution_file, "Solution file")->required();
    check->add_option("--modules", check_modules, "Comma-separated module names")->required();
    check->add_option("--config", config_path, "Config file")->required();
    check->add_option("--problem", problem, "Problem text shown to LM critics");
    check->add_option("--kind", kind, "Solution kind")
        ->check(CLI::IsMember({"program", "chain-of-thought", "entailment-tree"}));

    std::string plan = "leave-one-out", remove;
    OverrideFlags ablate_flags;
    auto* ablate = app.add_subcommand("ablate", "Run ablation variants and compare solve rates");
    ablate->add_option("--config", config_path, "Config file")->required();
    ablate->add_option("--plan", plan, "Ablation plan")->check(CLI::IsMember({"leave-one-out", "strategy-sweep"}));
    ablate->add_option("--remove", remove, "Comma-separated modules to leave out (default: each in turn)");
    ablate_flags.attach(ablate);

    std::string trace_dir, report_out;
    auto* report = app.add_subcommand("report", "Recompute accuracy curves from saved traces");
    report->add_option("trace_dir", trace_dir, "Run directory or its traces/ directory")->required();
    report->add_option("--out", report_out, "Write report files here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : maf::cli::kExitUsage;
    }

    try {
        if (*run) return maf::cli::cmd_run(config_path, flags.get(run), std::cout, std::cerr);
        if (*check) {
            maf::cli::CheckOptions opts;
            opts.problem = problem;
            if (!kind.empty()) opts.kind = maf::solution_kind_from_string(kind);
            return maf::cli::cmd_check(solution_file, split_commas(check_modules), config_path, opts, std::cout,
                                       std::cerr);
        }
        if (*ablate) {
            return maf::cli::cmd_ablate(config_path, maf::eval::ablation_plan_from_string(plan), split_commas(remove),
                                        ablate_flags.get(ablate), std::cout, std::cerr);
        }
        std::optional<std::string> out;
        if (!report_out.empty()) out = report_out;
        return maf::cli::cmd_report(trace_dir, out, std::cout, std::cerr);
    } catch (const maf::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return maf::cli::kExitConfig;
    }
}

#include "kinlevy/runner.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "kinlevy/benchmarks.hpp"

namespace kinlevy::cli {

namespace {

const char* describe(const std::string& name)
{
    if (name == "sample") return "noise sampler checks (characteristic function, decomposition)";
    if (name == "simulate") return "write trajectories as JSONL";
    if (name == "survival") return "survival curves and the killing rate";
    if (name == "escape") return "velocity escape table";
    if (name == "lyapunov") return "generator oracle, admissible b, drift condition, supermartingale bound";
    if (name == "reach") return "forced-cascade and direct reachability";
    if (name == "qsd-fv") return "Fleming-Viot histogram and eigen-consistency";
    if (name == "qsd-cond") return "conditioned law and forgetting of the start";
    if (name == "ulam") return "Ulam matrix spectrum and band profile";
    if (name == "duhamel") return "perturbative formula residual";
    return "run every task and evaluate the acceptance checks";
}

}  // namespace

int run_cli(int argc, char** argv)
{
    CLI::App app{"Killed kinetic Levy processes: experiments and checks"};
    app.fallthrough();
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::vector<std::string> sets;
    bool print_config = false;
    app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", seed, "master seed");
    auto* threads_opt = app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    app.add_option("--out", out_dir, "output directory (default results/<subcommand>)");
    app.add_option("--set", sets, "override a config value, key.path=value (repeatable)");
    app.add_flag("--print-config", print_config, "print the materialized config and exit");
    for (const auto& name : task_names()) app.add_subcommand(name, describe(name));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitPassed : kExitUsage;
    }
    const std::string task = app.get_subcommands().front()->get_name();

    Json config;
    try {
        Json user = config_path.empty() ? Json::object() : load_config_file(config_path);
        for (const auto& s : sets) apply_override(user, s);
        if (*seed_opt) user["seed"] = seed;
        if (*threads_opt) user["threads"] = threads;
        config = materialize(user);
    } catch (const ConfigError& e) {
        for (const auto& p : e.problems()) std::cerr << "config error: " << p << '\n';
        return kExitSchema;
    } catch (const Error& e) {
        std::cerr << "error [" << e.module() << "/" << e.code() << "]: " << e.what() << '\n';
        return kExitSchema;
    }
    if (print_config) {
        std::cout << config.dump(2) << '\n';
        return kExitPassed;
    }

    const std::string hash = config_hash(config);
    if (out_dir.empty()) out_dir = "results/" + task;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        const OutputDir out(out_dir, hash);
        TaskContext ctx{config, config.at("seed").get<std::uint64_t>(), config.at("threads").get<unsigned>(), &out};
        const TaskResult result = run_task(task, ctx);
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        out.json("summary.json", summary_json(result));
        Json timings(result.timings);
        timings["total"] = wall;
        out.json("timings.json", {{"seconds", timings}});
        out.json("manifest.json", {{"subcommand", task},
                                   {"config", config},
                                   {"seed", ctx.seed},
                                   {"threads", ctx.threads},
                                   {"version", KINLEVY_VERSION},
                                   {"wall_seconds", wall}});
        for (const auto& c : result.checks) {
            std::printf("%s %-34s %s\n", c.passed ? "PASS" : "FAIL", c.id.c_str(), c.name.c_str());
        }
        std::printf("%s: %s (%.1f s, manifest %s, outputs in %s)\n", task.c_str(),
                    result.passed() ? "all checks passed" : "some checks failed", wall, hash.c_str(), out_dir.c_str());
        return result.passed() ? kExitPassed : kExitChecksFailed;
    } catch (const ConfigError& e) {
        for (const auto& p : e.problems()) std::cerr << "config error: " << p << '\n';
        return kExitSchema;
    } catch (const Error& e) {
        std::cerr << "error [" << e.module() << "/" << e.code() << "]: " << e.what() << '\n';
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

}  // namespace kinlevy::cli

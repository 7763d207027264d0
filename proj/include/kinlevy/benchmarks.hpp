#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kinlevy/config.hpp"
#include "kinlevy/output.hpp"

namespace kinlevy::cli {

/// Everything a task needs: the materialized config and where to write.
struct TaskContext {
    Json config;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    const OutputDir* out = nullptr;
};

/// One assertable check of the summary.
struct Check {
    std::string id;
    std::string name;
    bool passed = false;
    Json metrics = Json::object();
};

struct TaskResult {
    std::string task;
    std::vector<Check> checks;
    /// Wall-clock seconds of named stages. Kept out of the numeric outputs.
    std::map<std::string, double> timings;

    bool passed() const;
};

TaskResult task_sample(const TaskContext& ctx);
TaskResult task_simulate(const TaskContext& ctx);
TaskResult task_survival(const TaskContext& ctx);
TaskResult task_escape(const TaskContext& ctx);
TaskResult task_lyapunov(const TaskContext& ctx);
TaskResult task_reach(const TaskContext& ctx);
TaskResult task_qsd_fv(const TaskContext& ctx);
TaskResult task_qsd_cond(const TaskContext& ctx);
TaskResult task_ulam(const TaskContext& ctx);
TaskResult task_duhamel(const TaskContext& ctx);

/// Runs every task and evaluates the acceptance checks AC01..AC11 (AC12,
/// determinism across worker counts, needs two runs and is left to the
/// caller).
TaskResult task_bench_all(const TaskContext& ctx);

/// Names accepted by run_task, in bench-all order.
const std::vector<std::string>& task_names();
TaskResult run_task(const std::string& name, const TaskContext& ctx);

/// {"checks": [...]} with one entry per check.
Json summary_json(const TaskResult& result);

}  // namespace kinlevy::cli

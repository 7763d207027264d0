#pragma once

namespace kinlevy::cli {

/// Exit codes of the command-line runner.
enum ExitCode : int {
    kExitPassed = 0,
    kExitChecksFailed = 1,
    kExitUsage = 2,
    kExitSchema = 3,
    kExitRuntime = 4,
};

/// Parses the command line, materializes the config, runs one subcommand and
/// writes manifest.json, summary.json, timings.json plus the task outputs.
int run_cli(int argc, char** argv);

}  // namespace kinlevy::cli

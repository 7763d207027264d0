#include "kinlevy/runner.hpp"

int main(int argc, char** argv) { return kinlevy::cli::run_cli(argc, argv); }

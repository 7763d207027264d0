#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "kinlevy/config.hpp"
#include "kinlevy/phase_grid.hpp"

namespace kinlevy::cli {

/// Shortest round-trip decimal for a double ("nan", "inf", "-inf" otherwise).
std::string format_number(double x);

/// CSV table whose first line is "# manifest <hash>".
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::string& manifest_hash, const std::vector<std::string>& columns);

    CsvWriter& cell(double x);
    CsvWriter& cell(long long x);
    CsvWriter& cell(const std::string& s);
    void end_row();

private:
    std::ofstream out_;
    std::size_t columns_ = 0;
    std::size_t in_row_ = 0;
};

/// Directory receiving the outputs of one run. Every file it writes carries
/// the manifest hash.
class OutputDir {
public:
    OutputDir(std::filesystem::path root, std::string manifest_hash);

    const std::filesystem::path& root() const noexcept { return root_; }
    const std::string& hash() const noexcept { return hash_; }

    CsvWriter csv(const std::string& name, const std::vector<std::string>& columns) const;
    /// Writes `doc` with a top-level "manifest" field added.
    void json(const std::string& name, Json doc) const;
    /// One JSON object per line; the first line is {"manifest": hash}.
    void jsonl(const std::string& name, const std::vector<Json>& records) const;

    /// Histogram as CSV: cell index, bounds, mass (outside bucket last).
    void histogram(const std::string& name, const PhaseHistogram& h) const;

private:
    std::filesystem::path root_;
    std::string hash_;
};

}  // namespace kinlevy::cli

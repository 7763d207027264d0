#include "kinlevy/output.hpp"

#include <charconv>
#include <cmath>

namespace kinlevy::cli {

std::string format_number(double x)
{
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::string& manifest_hash,
                     const std::vector<std::string>& columns)
    : out_(path), columns_(columns.size())
{
    if (!out_) throw Error("cli_runner", "output_unwritable", "cannot write " + path.string());
    out_ << "# manifest " << manifest_hash << '\n';
    for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
    out_ << '\n';
}

CsvWriter& CsvWriter::cell(double x) { return cell(format_number(x)); }

CsvWriter& CsvWriter::cell(long long x) { return cell(std::to_string(x)); }

CsvWriter& CsvWriter::cell(const std::string& s)
{
    out_ << (in_row_ ? "," : "") << s;
    ++in_row_;
    return *this;
}

void CsvWriter::end_row()
{
    if (in_row_ != columns_) {
        throw Error("cli_runner", "csv_shape", "row has " + std::to_string(in_row_) + " cells, expected " +
                                                   std::to_string(columns_));
    }
    out_ << '\n';
    in_row_ = 0;
}

OutputDir::OutputDir(std::filesystem::path root, std::string manifest_hash)
    : root_(std::move(root)), hash_(std::move(manifest_hash))
{
    std::filesystem::create_directories(root_);
}

CsvWriter OutputDir::csv(const std::string& name, const std::vector<std::string>& columns) const
{
    return CsvWriter(root_ / name, hash_, columns);
}

void OutputDir::json(const std::string& name, Json doc) const
{
    doc["manifest"] = hash_;
    std::ofstream out(root_ / name);
    if (!out) throw Error("cli_runner", "output_unwritable", "cannot write " + (root_ / name).string());
    out << doc.dump(2) << '\n';
}

void OutputDir::jsonl(const std::string& name, const std::vector<Json>& records) const
{
    std::ofstream out(root_ / name);
    if (!out) throw Error("cli_runner", "output_unwritable", "cannot write " + (root_ / name).string());
    out << Json{{"manifest", hash_}}.dump() << '\n';
    for (const auto& r : records) out << r.dump() << '\n';
}

void OutputDir::histogram(const std::string& name, const PhaseHistogram& h) const
{
    const int d = h.grid.dim();
    std::vector<std::string> cols{"cell"};
    for (int a = 0; a < d; ++a) {
        cols.push_back("x" + std::to_string(a) + "_lo");
        cols.push_back("x" + std::to_string(a) + "_hi");
    }
    for (int a = 0; a < d; ++a) {
        cols.push_back("v" + std::to_string(a) + "_lo");
        cols.push_back("v" + std::to_string(a) + "_hi");
    }
    cols.push_back("mass");
    auto w = csv(name, cols);
    for (std::size_t c = 0; c < h.grid.size(); ++c) {
        const State lo = h.grid.cell_lo(c), hi = h.grid.cell_hi(c);
        w.cell(static_cast<long long>(c));
        for (int a = 0; a < d; ++a) w.cell(lo.x[a]).cell(hi.x[a]);
        for (int a = 0; a < d; ++a) w.cell(lo.v[a]).cell(hi.v[a]);
        w.cell(h.mass[c]);
        w.end_row();
    }
    w.cell(std::string("outside"));
    for (int a = 0; a < 4 * d; ++a) w.cell(std::string(""));
    w.cell(h.outside);
    w.end_row();
}

}  // namespace kinlevy::cli

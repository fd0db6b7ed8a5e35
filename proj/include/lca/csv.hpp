#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace lca {

/// Shortest round-trip decimal form; locale independent.
std::string format_double(double x);

/// Artifact table: first line "# config_hash=<hash>", then the header, then rows.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header);

    CsvTable& add_row(std::vector<std::string> cells);
    const std::vector<std::string>& header() const { return header_; }
    std::size_t size() const { return rows_.size(); }

    std::string render(const std::string& config_hash) const;

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace lca

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace essayfb::report {

struct MeanStdCell {
  double mean = 0.0;
  double std = 0.0;
};

/// Empty (monostate) renders as "-".
using Cell = std::variant<std::monostate, std::string, double, long long, MeanStdCell>;

struct Table {
  std::string name;  // file stem
  std::string title;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
  int precision = 3;
};

enum class Format { Plain, Delimited, Markdown };

Format parse_format(std::string_view name);
std::string_view extension(Format format);

/// Deterministic rendering. Delimited output is tab-separated with
/// shortest round-trip numbers; the others use `precision` decimals.
std::string render(const Table& table, Format format);

/// Writes one file per table into `dir`; returns the paths written.
std::vector<std::filesystem::path> emit_report(std::span<const Table> tables, Format format,
                                               const std::filesystem::path& dir);

}  // namespace essayfb::report

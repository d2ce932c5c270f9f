#include "essayfb/report.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "essayfb/errors.hpp"

namespace essayfb::report {

namespace {

std::string fixed(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string shortest(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string cell_text(const Cell& cell, int precision, bool exact) {
  struct Visitor {
    int precision;
    bool exact;
    std::string operator()(std::monostate) const { return "-"; }
    std::string operator()(const std::string& s) const { return s; }
    std::string operator()(double v) const { return exact ? shortest(v) : fixed(v, precision); }
    std::string operator()(long long v) const { return std::to_string(v); }
    std::string operator()(const MeanStdCell& c) const {
      if (exact) return shortest(c.mean) + " (" + shortest(c.std) + ")";
      return fixed(c.mean, precision) + " (" + fixed(c.std, precision) + ")";
    }
  };
  return std::visit(Visitor{precision, exact}, cell);
}

}  // namespace

Format parse_format(std::string_view name) {
  if (name == "plain" || name == "txt") return Format::Plain;
  if (name == "tsv" || name == "delimited") return Format::Delimited;
  if (name == "markdown" || name == "md") return Format::Markdown;
  throw ValidationError("unknown report format '" + std::string(name) + "'");
}

std::string_view extension(Format format) {
  switch (format) {
    case Format::Plain:
      return ".txt";
    case Format::Delimited:
      return ".tsv";
    case Format::Markdown:
      return ".md";
  }
  return ".txt";
}

std::string render(const Table& table, Format format) {
  const bool exact = format == Format::Delimited;
  std::vector<std::vector<std::string>> grid;
  grid.push_back(table.columns);
  for (const auto& row : table.rows) {
    std::vector<std::string> line;
    for (const auto& cell : row) line.push_back(cell_text(cell, table.precision, exact));
    grid.push_back(std::move(line));
  }

  std::ostringstream out;
  if (format == Format::Delimited) {
    for (const auto& line : grid) {
      for (std::size_t i = 0; i < line.size(); ++i) out << (i ? "\t" : "") << line[i];
      out << '\n';
    }
    return out.str();
  }

  std::vector<std::size_t> width(table.columns.size(), 0);
  for (const auto& line : grid) {
    for (std::size_t i = 0; i < line.size() && i < width.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  auto pad = [](const std::string& s, std::size_t w) { return s + std::string(w - std::min(w, s.size()), ' '); };

  if (format == Format::Markdown) {
    if (!table.title.empty()) out << "### " << table.title << "\n\n";
    for (std::size_t r = 0; r < grid.size(); ++r) {
      out << '|';
      for (std::size_t i = 0; i < width.size(); ++i) {
        out << ' ' << pad(i < grid[r].size() ? grid[r][i] : "", width[i]) << " |";
      }
      out << '\n';
      if (r == 0) {
        out << '|';
        for (std::size_t i = 0; i < width.size(); ++i) out << std::string(width[i] + 2, '-') << '|';
        out << '\n';
      }
    }
    return out.str();
  }

  if (!table.title.empty()) out << table.title << "\n";
  for (const auto& line : grid) {
    for (std::size_t i = 0; i < width.size(); ++i) {
      const auto& s = i < line.size() ? line[i] : std::string();
      out << (i ? "  " : "") << (i + 1 == width.size() ? s : pad(s, width[i]));
    }
    out << '\n';
  }
  return out.str();
}

std::vector<std::filesystem::path> emit_report(std::span<const Table> tables, Format format,
                                               const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  for (const auto& table : tables) {
    auto path = dir / (table.name + std::string(extension(format)));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << render(table, format);
    written.push_back(path);
  }
  return written;
}

}  // namespace essayfb::report

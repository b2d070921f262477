#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace lnsr {

/// Shortest text that parses back to exactly `v` (17 significant digits).
std::string format_double(double v);

/// Minimal CSV emitter; fields never contain commas or quotes in our
/// outputs, so no quoting is done.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header, bool append = false);

  CsvWriter& field(const std::string& s);
  CsvWriter& field(double v);
  CsvWriter& field(std::size_t v);
  CsvWriter& field(int v) { return field(static_cast<std::size_t>(v)); }
  void end_row();
  void flush() { os_.flush(); }

 private:
  std::ofstream os_;
  bool first_ = true;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

/// `<command>-<YYYYmmdd-HHMMSS>.csv` in `dir`, with a numeric suffix when
/// the name is taken.
std::filesystem::path timestamped_path(const std::filesystem::path& dir, const std::string& command);

}  // namespace lnsr

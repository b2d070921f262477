#include "lnsr/csv.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <sstream>
#include <stdexcept>

namespace lnsr {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header, bool append) {
  const bool fresh = !append || !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  os_.open(path, append ? std::ios::app : std::ios::trunc);
  if (!os_) throw std::runtime_error("cannot open CSV for writing: " + path.string());
  if (fresh) {
    for (const auto& h : header) field(h);
    end_row();
  }
}

CsvWriter& CsvWriter::field(const std::string& s) {
  if (!first_) os_ << ',';
  os_ << s;
  first_ = false;
  return *this;
}

CsvWriter& CsvWriter::field(double v) { return field(format_double(v)); }
CsvWriter& CsvWriter::field(std::size_t v) { return field(std::to_string(v)); }

void CsvWriter::end_row() {
  os_ << '\n';
  first_ = true;
  if (!os_) throw std::runtime_error("CSV write failed");
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw std::out_of_range("CSV has no column '" + name + "'");
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open CSV: " + path.string());
  CsvTable t;
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> out;
    std::stringstream ss(l);
    for (std::string f; std::getline(ss, f, ',');) out.push_back(f);
    if (!l.empty() && l.back() == ',') out.emplace_back();
    return out;
  };
  if (std::getline(is, line)) t.header = split(line);
  while (std::getline(is, line)) {
    if (!line.empty()) t.rows.push_back(split(line));
  }
  return t;
}

std::filesystem::path timestamped_path(const std::filesystem::path& dir, const std::string& command) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  auto path = dir / (command + "-" + stamp + ".csv");
  for (int i = 1; std::filesystem::exists(path); ++i) {
    path = dir / (command + "-" + stamp + "-" + std::to_string(i) + ".csv");
  }
  return path;
}

}  // namespace lnsr

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "i3/immune.hpp"

namespace i3 {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double to_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    throw std::invalid_argument(where + ": '" + s + "' is not a number");
  }
  return v;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

}  // namespace

ProcessTrace read_trace_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"t", "cpu", "mem", "net"}) {
    throw std::invalid_argument(path.string() + ": header must be t,cpu,mem,net");
  }
  ProcessTrace t;
  t.process_id = path.stem().string();
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    const std::string where = path.string() + ":" + std::to_string(row);
    if (cells.size() != 4) throw std::invalid_argument(where + ": expected 4 columns");
    to_double(cells[0], where);
    t.samples.push_back({to_double(cells[1], where), to_double(cells[2], where), to_double(cells[3], where)});
  }
  t.validate();
  return t;
}

void write_trace_csv(const std::filesystem::path& path, const ProcessTrace& trace) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "t,cpu,mem,net\n";
  char buf[128];
  for (std::size_t k = 0; k < trace.samples.size(); ++k) {
    const auto& s = trace.samples[k];
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", k, s.cpu, s.mem, s.net);
    out << buf;
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<ProcessTrace> read_manifest(const std::filesystem::path& manifest) {
  auto in = open_in(manifest);
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"path", "label"}) {
    throw std::invalid_argument(manifest.string() + ": header must be path,label");
  }
  const auto base = manifest.parent_path();
  std::vector<ProcessTrace> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 2) {
      throw std::invalid_argument(manifest.string() + ":" + std::to_string(row) + ": expected 2 columns");
    }
    std::filesystem::path p(cells[0]);
    if (p.is_relative()) p = base / p;
    auto trace = read_trace_csv(p);
    trace.label = parse_label(cells[1]);
    out.push_back(std::move(trace));
  }
  return out;
}

}  // namespace i3

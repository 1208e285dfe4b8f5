#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rmpflow/simlab.hpp"

namespace rmpflow::io {

/// Shortest representation that round-trips a double: 17 significant digits.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
      : out_(path) {
    if (!out_) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i) out_ << ',';
      out_ << header[i];
    }
    out_ << '\n';
    columns_ = header.size();
  }

  void row(const std::vector<double>& values) {
    if (values.size() != columns_)
      throw std::invalid_argument("CsvWriter: row width does not match the header");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) out_ << ',';
      out_ << format_double(values[i]);
    }
    out_ << '\n';
  }

 private:
  std::ofstream out_;
  std::size_t columns_ = 0;
};

inline std::vector<std::string> trajectory_header(int dof) {
  std::vector<std::string> h{"t"};
  for (int i = 0; i < dof; ++i) h.push_back("q" + std::to_string(i));
  for (int i = 0; i < dof; ++i) h.push_back("qd" + std::to_string(i));
  h.insert(h.end(), {"V", "K", "min_dist"});
  return h;
}

inline void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj,
                                 int dof) {
  CsvWriter csv(path, trajectory_header(dof));
  for (const auto& s : traj.samples) {
    std::vector<double> row{s.t};
    for (int i = 0; i < dof; ++i) row.push_back(s.q(i));
    for (int i = 0; i < dof; ++i) row.push_back(s.qdot(i));
    row.insert(row.end(), {s.V, s.K, s.min_dist});
    csv.row(row);
  }
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << text;
}

}  // namespace rmpflow::io

#include "vsem/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "vsem/error.hpp"

namespace vsem {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

}  // namespace

Dataset read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  Dataset out;
  for (auto& h : split_line(line)) out.names.push_back(trim(h));
  const size_t p = out.names.size();
  for (size_t j = 0; j < p; ++j) {
    if (out.names[j].empty()) throw DataError("CSV header has an empty column name");
    for (size_t i = 0; i < j; ++i) {
      if (out.names[i] == out.names[j]) throw DataError("duplicate column '" + out.names[j] + "'");
    }
  }

  std::vector<double> values;
  size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    ++row;
    auto cells = split_line(line);
    if (cells.size() != p) {
      throw DataError("row " + std::to_string(row) + ": expected " + std::to_string(p) + " cells, found " +
                      std::to_string(cells.size()));
    }
    for (size_t j = 0; j < p; ++j) {
      std::string c = trim(cells[j]);
      if (c.empty() || c == "NA" || c == "NaN") {
        throw DataError("row " + std::to_string(row) + ", column '" + out.names[j] + "': missing value");
      }
      double v = 0.0;
      auto res = std::from_chars(c.data(), c.data() + c.size(), v);
      if (res.ec != std::errc() || res.ptr != c.data() + c.size() || !std::isfinite(v)) {
        throw DataError("row " + std::to_string(row) + ", column '" + out.names[j] + "': not a number '" + c + "'");
      }
      values.push_back(v);
    }
  }
  out.cases.resize(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(p));
  for (size_t i = 0; i < row; ++i) {
    for (size_t j = 0; j < p; ++j) out.cases(i, j) = values[i * p + j];
  }
  return out;
}

Dataset read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_csv(in);
}

void write_csv(std::ostream& out, const Dataset& data) {
  for (size_t j = 0; j < data.names.size(); ++j) out << (j ? "," : "") << data.names[j];
  out << "\n";
  char buf[32];
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    for (Eigen::Index j = 0; j < data.p(); ++j) {
      auto res = std::to_chars(buf, buf + sizeof(buf), data.cases(i, j));
      out << (j ? "," : "") << std::string_view(buf, res.ptr - buf);
    }
    out << "\n";
  }
}

Dataset align_to_model(const Dataset& data, const ModelSpec& spec) {
  Dataset out;
  out.names = spec.manifest_names;
  out.cases.resize(data.n(), spec.p());
  for (int j = 0; j < spec.p(); ++j) {
    auto it = std::find(data.names.begin(), data.names.end(), spec.manifest_names[j]);
    if (it == data.names.end()) throw DataError("data has no column '" + spec.manifest_names[j] + "'");
    out.cases.col(j) = data.cases.col(it - data.names.begin());
  }
  if (out.n() <= spec.p()) {
    throw DataError("need more cases than observed variables (n = " + std::to_string(out.n()) +
                    ", p = " + std::to_string(spec.p()) + ")");
  }
  for (int j = 0; j < spec.p(); ++j) {
    const auto col = out.cases.col(j);
    if ((col.array() == col(0)).all()) throw DataError("column '" + out.names[j] + "' is constant");
  }
  return out;
}

SampleMoments sample_moments(const Eigen::MatrixXd& cases) {
  SampleMoments m;
  m.n = cases.rows();
  m.mean = cases.colwise().mean().transpose();
  Eigen::MatrixXd centered = cases.rowwise() - m.mean.transpose();
  m.cov = (centered.transpose() * centered) / static_cast<double>(m.n);
  return m;
}

}  // namespace vsem

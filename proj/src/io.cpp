#include "gtpde/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "gtpde/common.hpp"

namespace gtpde {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const std::string& where) {
  if (s.empty() || s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto res = std::from_chars(first, s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ConfigError(where + ": not a number: '" + s + "'");
  return v;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (!out) throw ConfigError("write failed: " + path.string());
}

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

CsvTable read_csv(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  std::istringstream in(text);
  std::string line;
  CsvTable t;
  if (!std::getline(in, line)) throw ConfigError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  t.header = split_line(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != t.header.size()) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                        " columns, found " + std::to_string(cells.size()));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_double(c, path.string() + ":" + std::to_string(lineno)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  std::string s;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (i) s += ',';
    s += table.header[i];
  }
  s += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) s += ',';
      if (!std::isnan(row[i])) s += format_double(row[i]);
    }
    s += '\n';
  }
  write_text(path, s);
}

void write_grid_csv(const std::filesystem::path& path, const std::vector<double>& x) {
  CsvTable t;
  t.header = {"x"};
  for (double v : x) t.rows.push_back({v});
  write_csv(path, t);
}

std::vector<double> read_grid_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  if (t.header.size() != 1 || t.header[0] != "x") throw ConfigError(path.string() + ": expected header 'x'");
  std::vector<double> x;
  for (const auto& r : t.rows) x.push_back(r[0]);
  if (x.size() < 2) throw ConfigError(path.string() + ": grid needs at least 2 points");
  return x;
}

void write_fields_csv(const std::filesystem::path& path, const std::vector<DensityField>& fields) {
  CsvTable t;
  t.header = {"t"};
  const std::size_t n = fields.empty() ? 0 : fields.front().size();
  for (std::size_t i = 0; i < n; ++i) t.header.push_back("v_" + std::to_string(i));
  for (const auto& f : fields) {
    if (f.size() != n) throw ConfigError("write_fields_csv: fields of different sizes");
    std::vector<double> row{f.t};
    row.insert(row.end(), f.values.begin(), f.values.end());
    t.rows.push_back(std::move(row));
  }
  write_csv(path, t);
}

std::vector<DensityField> read_fields_csv(const std::filesystem::path& path, const std::vector<double>& grid) {
  const CsvTable t = read_csv(path);
  if (t.header.empty() || t.header[0] != "t") throw ConfigError(path.string() + ": expected first column 't'");
  if (t.header.size() != grid.size() + 1) {
    throw ConfigError(path.string() + ": " + std::to_string(t.header.size() - 1) + " values per row but the grid has " +
                      std::to_string(grid.size()) + " points");
  }
  std::vector<DensityField> out;
  const double dx = kTwoPi / static_cast<double>(grid.size());
  for (const auto& r : t.rows) {
    DensityField f;
    f.t = r[0];
    f.values.assign(r.begin() + 1, r.end());
    f.grid_x = grid;
    f.dx = dx;
    out.push_back(std::move(f));
  }
  return out;
}

void write_particles_csv(const std::filesystem::path& path, const ParticleEnsemble& e) {
  std::string s = "tooth,position\n";
  for (std::size_t g = 0; g < e.groups.size(); ++g) {
    const std::string tooth = std::to_string(g);
    for (double x : e.groups[g]) {
      s += tooth;
      s += ',';
      s += format_double(x);
      s += '\n';
    }
  }
  write_text(path, s);
}

ParticleEnsemble read_particles_csv(const std::filesystem::path& path, const ToothGrid& grid) {
  const CsvTable t = read_csv(path);
  if (t.header != std::vector<std::string>{"tooth", "position"}) throw ConfigError(path.string() + ": expected header 'tooth,position'");
  ParticleEnsemble e;
  e.bounds = grid.teeth();
  e.groups.assign(e.bounds.size(), {});
  e.periodic = false;
  for (const auto& r : t.rows) {
    const double tooth = r[0];
    if (!(tooth >= 0.0) || tooth >= static_cast<double>(grid.N) || tooth != std::floor(tooth)) {
      throw ConfigError(path.string() + ": tooth index out of range");
    }
    e.groups[static_cast<std::size_t>(tooth)].push_back(r[1]);
  }
  return e;
}

void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m, const std::string& prefix) {
  CsvTable t;
  for (Eigen::Index j = 0; j < m.cols(); ++j) t.header.push_back(prefix + "_" + std::to_string(j));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
    t.rows.push_back(std::move(row));
  }
  write_csv(path, t);
}

Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const auto n = static_cast<Eigen::Index>(t.header.size());
  if (static_cast<Eigen::Index>(t.rows.size()) != n) throw ConfigError(path.string() + ": matrix is not square");
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = t.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return m;
}

}  // namespace gtpde

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gtpde/gap_tooth.hpp"
#include "gtpde/micro_particles.hpp"

namespace gtpde {

/// Shortest form with 17 significant digits; parses back to the same double.
std::string format_double(double v);
double parse_double(const std::string& s, const std::string& where);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Header line and numeric rows; empty cells read as NaN.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  int column(const std::string& name) const;  ///< -1 when absent
};
CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

void write_grid_csv(const std::filesystem::path& path, const std::vector<double>& x);
std::vector<double> read_grid_csv(const std::filesystem::path& path);

/// Header "t,v_0,...,v_{N-1}", one row per record time.
void write_fields_csv(const std::filesystem::path& path, const std::vector<DensityField>& fields);
std::vector<DensityField> read_fields_csv(const std::filesystem::path& path, const std::vector<double>& grid);

/// Header "tooth,position" with absolute positions.
void write_particles_csv(const std::filesystem::path& path, const ParticleEnsemble& e);
ParticleEnsemble read_particles_csv(const std::filesystem::path& path, const ToothGrid& grid);

/// Square matrix with header "d_0,...,d_{m-1}".
void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m, const std::string& prefix = "d");
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path);

}  // namespace gtpde

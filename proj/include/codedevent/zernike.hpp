#pragma once

#include <Eigen/Dense>

#include <filesystem>

#include "codedevent/optics.hpp"

namespace codedevent {

struct ZernikeIndex {
  int n;  ///< radial order
  int m;  ///< signed azimuthal order: m > 0 -> cos, m < 0 -> sin
};

/// Noll's single index (j >= 1) to (n, m).
ZernikeIndex noll_to_nm(int j);

/// Noll-normalized Zernike polynomial Z_j at polar pupil coordinates; the
/// polynomials have unit mean square over the unit disk.
double zernike(int j, double rho, double theta);

/// Support-sample x count matrix of Z_1 .. Z_count.
Eigen::MatrixXd zernike_basis(const PupilGrid& grid, int count);

void write_zernike_csv(const std::filesystem::path& path, const Eigen::VectorXd& coeffs);
Eigen::VectorXd read_zernike_csv(const std::filesystem::path& path);

}  // namespace codedevent

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>

#include "codedevent/optics.hpp"

namespace codedevent {

/// Directory holding the shipped baseline files. Overridden by the
/// CODEDEVENT_DATA environment variable.
std::filesystem::path data_dir();

/// Seeded square binary pattern used as the coded-aperture baseline.
Eigen::ArrayXXd make_levin_pattern(int cells = 13, std::uint64_t seed = 2007);

/// Nearest-cell resampling of a square binary pattern over the pupil disk.
Mask levin_mask(const PupilGrid& grid, const Eigen::ArrayXXd& pattern);

Mask zernike_phase_mask(const PupilGrid& grid, const Eigen::VectorXd& coeffs);

struct FisherDesignConfig {
  int terms = 55;
  int iterations = 400;
  double lr = 0.05;
  int depth_planes = 11;
  double depth_range = 1.5e-6;
  std::uint64_t seed = 1;
};

/// Zernike phase mask minimizing the summed single-frame (flashing) CRB over
/// the depth range: the CMOS-optimal 3D localization design.
Eigen::VectorXd design_fisher_coefficients(const PsfModel& model, const FisherDesignConfig& cfg);

/// Resolves "open", "fisher", "levin", or a path to a CEO1 mask file whose
/// ".meta" sidecar names the kind (phase or amplitude). Throws ConfigError
/// for unknown names, missing files, or grid mismatch.
Mask load_mask(const std::string& name_or_path, const PupilGrid& grid);

void write_mask(const std::filesystem::path& path, const Mask& mask);

}  // namespace codedevent

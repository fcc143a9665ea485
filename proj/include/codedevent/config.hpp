#pragma once

#include <map>
#include <stdexcept>
#include <string>

namespace codedevent {

/// Invalid user-facing configuration (maps to CLI exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite loss, singular information matrix, and similar (exit code 3).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Microscope and sensor constants.
///
/// Lateral positions are object-space meters. One image pixel spans
/// `pixel_pitch / magnification` in the object. The pupil is sampled on a
/// `grid` x `grid` array whose FFT is the image, so the pupil disk radius in
/// samples is grid * object_pixel * NA / wavelength; this must not exceed
/// grid / 4, otherwise the intensity image is aliased.
struct OpticalConfig {
  double na = 1.4;
  double n_medium = 1.518;
  double wavelength = 550e-9;
  double magnification = 111.11;
  double focal_length = 0.150;
  /// Sensor-plane pitch. The default places the pupil at exactly 2x
  /// oversampling (pupil diameter = grid / 2 samples).
  double pixel_pitch = 111.11 * 550e-9 / (4.0 * 1.4);
  int grid = 128;
  double signal_photons = 5000.0;
  double background_fraction = 0.01;
  /// Guard on |z| for defocus evaluation.
  double max_defocus = 10e-6;

  void validate() const;

  double object_pixel() const { return pixel_pitch / magnification; }
  double field_of_view() const { return grid * object_pixel(); }
  double pupil_radius_samples() const { return grid * object_pixel() * na / wavelength; }
  /// Constant per-pixel background rate (photons/pixel).
  double background_per_pixel() const {
    return background_fraction * signal_photons / (static_cast<double>(grid) * grid);
  }

  std::map<std::string, std::string> to_metadata() const;
};

}  // namespace codedevent

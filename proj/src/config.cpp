#include "codedevent/config.hpp"

#include <bit>
#include <cmath>
#include <sstream>

namespace codedevent {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void OpticalConfig::validate() const {
  if (!(na > 0.0) || !(na < n_medium)) {
    throw ConfigError("optical config: need 0 < na < n_medium");
  }
  if (!(wavelength > 0.0) || !(magnification > 0.0) || !(pixel_pitch > 0.0) || !(focal_length > 0.0)) {
    throw ConfigError("optical config: wavelength, magnification, focal_length and pixel_pitch must be positive");
  }
  if (grid < 4 || !std::has_single_bit(static_cast<unsigned>(grid))) {
    throw ConfigError("optical config: grid must be a power of two >= 4");
  }
  if (!(signal_photons > 0.0)) {
    throw ConfigError("optical config: signal_photons must be positive");
  }
  if (!(background_fraction >= 0.0) || !(background_fraction < 1.0)) {
    throw ConfigError("optical config: background_fraction must lie in [0, 1)");
  }
  if (!(max_defocus > 0.0)) {
    throw ConfigError("optical config: max_defocus must be positive");
  }
  if (pupil_radius_samples() > grid / 4.0 * (1.0 + 1e-9)) {
    std::ostringstream os;
    os << "optical config: pixel pitch " << pixel_pitch << " m undersamples the PSF (pupil radius "
       << pupil_radius_samples() << " samples > grid/4); use pixel_pitch <= "
       << magnification * wavelength / (4.0 * na);
    throw ConfigError(os.str());
  }
}

std::map<std::string, std::string> OpticalConfig::to_metadata() const {
  return {
      {"na", fmt(na)},
      {"n_medium", fmt(n_medium)},
      {"wavelength_m", fmt(wavelength)},
      {"magnification", fmt(magnification)},
      {"focal_length_m", fmt(focal_length)},
      {"pixel_pitch_m", fmt(pixel_pitch)},
      {"object_pixel_m", fmt(object_pixel())},
      {"grid", std::to_string(grid)},
      {"signal_photons", fmt(signal_photons)},
      {"background_fraction", fmt(background_fraction)},
  };
}

}  // namespace codedevent

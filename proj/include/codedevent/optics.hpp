#pragma once

#include <Eigen/Dense>

#include <memory>
#include <vector>

#include "codedevent/config.hpp"
#include "codedevent/fft.hpp"

namespace codedevent {

/// Sampled pupil plane. Arrays are grid x grid; rows index y, columns index x,
/// and sample (grid/2, grid/2) is the optical axis.
struct PupilGrid {
  int n = 0;
  double object_pixel = 0.0;
  Eigen::ArrayXXd rho;      ///< normalized pupil radius (1 at the NA edge)
  Eigen::ArrayXXd fx, fy;   ///< object-space spatial frequency, cycles/m
  Eigen::ArrayXXd kz;       ///< d(defocus phase)/dz in rad/m, zero off support
  Eigen::ArrayXXd support;  ///< 1 where rho <= 1, else 0
  Eigen::ArrayXXd centering;  ///< (-1)^(row+col): puts the image origin at (n/2, n/2)
  std::vector<Eigen::Index> support_index;  ///< linear (column-major) indices of support samples
  Eigen::Matrix2Xd support_coords;          ///< normalized (u, v) in [-1, 1] per support sample

  Eigen::Index support_count() const { return static_cast<Eigen::Index>(support_index.size()); }

  /// Gathers support samples of a grid array into a vector, and the reverse.
  Eigen::VectorXd gather(const Eigen::ArrayXXd& a) const;
  Eigen::ArrayXXd scatter(const Eigen::VectorXd& v) const;
};

PupilGrid make_pupil_grid(const OpticalConfig& cfg);

enum class MaskKind { Phase, Amplitude };

/// Pupil modulation. Phase values are radians; amplitude values are field
/// transmittance in [0, 1]. Values are zero outside the pupil support.
struct Mask {
  MaskKind kind = MaskKind::Phase;
  Eigen::ArrayXXd values;
};

Mask open_aperture(const PupilGrid& grid);
/// Complex pupil field A exp(i phi) on the support.
Field pupil_field(const Mask& mask, const PupilGrid& grid);
/// Throws ConfigError on shape mismatch, non-finite values, or amplitudes outside [0, 1].
void validate_mask(const Mask& mask, const PupilGrid& grid);

/// PSF intensity (photons/pixel) and, when requested, its derivatives with
/// respect to the emitter position (photons/pixel per meter).
struct PsfEval {
  Image h;
  Image dh_dx, dh_dy, dh_dz;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  bool has_gradients = false;
};

/// Upstream sensitivities dL/dh and dL/d(dh/dtheta) for PsfModel::backward.
struct PsfAdjoint {
  Image h, dh_dx, dh_dy, dh_dz;
};

/// Defocus phase z * (2 pi / lambda) * sqrt(n^2 - (NA rho)^2) on the support.
Image defocus_phase(const OpticalConfig& cfg, const PupilGrid& grid, double z);

/// Scalar Fourier-optics PSF simulator with analytic position derivatives and
/// a reverse-mode adjoint with respect to the pupil field.
///
/// h = c^2 |FFT(P exp(i(z kz + 2 pi (fx x + fy y))))|^2 with c fixed so that a
/// phase-only pupil delivers signal_photons * (1 - background_fraction).
/// Amplitude masks lose signal in proportion to mean(A^2) over the support.
class PsfModel {
 public:
  explicit PsfModel(const OpticalConfig& cfg);

  const OpticalConfig& config() const { return cfg_; }
  const PupilGrid& pupil() const { return *grid_; }
  std::shared_ptr<const PupilGrid> pupil_ptr() const { return grid_; }
  const Fft2& fft() const { return fft_; }
  int size() const { return cfg_.grid; }
  double beta() const { return cfg_.background_per_pixel(); }

  /// Saved forward state needed by backward().
  struct Tape {
    Field phase_factor;  ///< centering * exp(i psi), psi = defocus + shift
    Field e, ex, ey, ez;
  };

  PsfEval evaluate(const Field& pupil, const Eigen::Vector3d& pos, bool gradients,
                   Tape* tape = nullptr) const;

  /// dL/dP (as dL/dRe + i dL/dIm) given upstream sensitivities of a gradient
  /// evaluation that recorded `tape`.
  Field backward(const Tape& tape, const PsfAdjoint& adjoint) const;

  void check_position(const Eigen::Vector3d& pos) const;

 private:
  OpticalConfig cfg_;
  std::shared_ptr<const PupilGrid> grid_;
  Fft2 fft_;
  double scale_;
};

PsfEval compute_psf(const OpticalConfig& cfg, const PupilGrid& grid, const Mask& mask,
                    const Eigen::Vector3d& pos);
PsfEval psf_gradients(const OpticalConfig& cfg, const PupilGrid& grid, const Mask& mask,
                      const Eigen::Vector3d& pos);

/// Convolution with a uniform disk of the emitter's diameter (object meters).
/// The kernel is precomputed; apply() is a cyclic FFT convolution that
/// preserves the image sum.
class EmitterBlur {
 public:
  EmitterBlur(const OpticalConfig& cfg, double diameter);

  bool identity() const { return identity_; }
  Image apply(const Image& img) const;
  /// Blurs an intensity given its (unnormalized) DFT, returning the real image.
  const Field& transfer() const { return transfer_; }

 private:
  int n_;
  bool identity_;
  Fft2 fft_;
  Field transfer_;
};

Image blur_emitter(const Image& psf, double emitter_diameter, const OpticalConfig& cfg);

/// PSF intensities over a set of depth planes at x = y = 0 (ordered as `depths`).
std::vector<Image> psf_stack(const PsfModel& model, const Mask& mask, const std::vector<double>& depths,
                             int workers = 1);

}  // namespace codedevent

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "codedevent/eventsim.hpp"
#include "codedevent/optics.hpp"

namespace codedevent {

/// Axis-aligned box in object space (meters).
struct Volume {
  Eigen::Vector3d lo{-4e-6, -4e-6, -2e-6};
  Eigen::Vector3d hi{4e-6, 4e-6, 2e-6};

  bool contains(const Eigen::Vector3d& p) const;
  Eigen::Vector3d center() const { return 0.5 * (lo + hi); }
  /// Mirrors a point back inside across the walls it crossed.
  Eigen::Vector3d reflect(Eigen::Vector3d p) const;
};

struct Trajectory {
  std::vector<Eigen::Vector3d> positions;
  double dt = 1e-3;  ///< seconds per step
  Volume volume;
  std::size_t steps() const { return positions.empty() ? 0 : positions.size() - 1; }
};

/// `n_positions` poses starting at `start` (the volume centre by default);
/// each step is an isotropic direction scaled by |N(mean, sd)|.
Trajectory brownian_trajectory(int n_positions, std::uint64_t seed, const Volume& volume = {},
                               double mean = 100e-9, double sd = 20e-9,
                               const Eigen::Vector3d* start = nullptr);

struct TrackingConfig {
  int subframes = 16;
  double emitter_diameter = 300e-9;
  /// Gaussian sensor noise sigma as a fraction of the in-focus peak; 0 disables.
  double noise_fraction = 0.01;
  double threshold = 0.1;
  /// Photons; intensities are clamped to this before the log. 0 selects
  /// max(1, 3 sigma).
  double log_floor = 0.0;
  std::uint64_t seed = 0;
  double lateral_window = 500e-9;
  double axial_window = 750e-9;
  int coarse_points = 11;
  int max_iterations = 30;
  int workers = 1;

  void validate() const;
};

/// Everything the renderer and the estimator share for one mask.
class TrackingSetup {
 public:
  TrackingSetup(const PsfModel& model, const Mask& mask, const TrackingConfig& cfg);

  const PsfModel& model() const { return *model_; }
  const TrackingConfig& config() const { return cfg_; }
  const Field& pupil() const { return pupil_; }
  const EmitterBlur& blur() const { return blur_; }
  double noise_sigma() const { return sigma_; }
  double log_floor() const { return floor_; }
  double beta() const { return model_->beta(); }

  /// Blurred noiseless PSF intensity at `pos`.
  Image clean_frame(const Eigen::Vector3d& pos) const;

 private:
  const PsfModel* model_;
  TrackingConfig cfg_;
  Field pupil_;
  EmitterBlur blur_;
  double sigma_ = 0.0;
  double floor_ = 1.0;
};

/// One binned event frame per trajectory step. Each step is rendered as
/// subframes + 1 linearly interpolated poses; the event simulator restarts
/// its reference at the first subframe of every bin.
std::vector<BinnedFrame> render_coded_event_video(const TrackingSetup& setup, const Trajectory& traj);

struct MlEstimate {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  bool no_information = false;
  double log_likelihood = 0.0;
  int iterations = 0;
  /// Expected information about `position` (1/m^2), previous pose marginalized.
  Eigen::Matrix3d precision = Eigen::Matrix3d::Zero();
};

/// Maximum-likelihood current pose from a binned frame. The measurement
/// exp(T counts) is modelled per pixel as Normal with mean nu/mu and variance
/// nu/mu^2 + nu^2/mu^3, where mu and nu are the (floored) previous and
/// candidate intensities plus background. With `prev_precision` null the
/// previous pose is exact; otherwise it is refined too, under a Gaussian
/// prior centred on `prev` with that precision.
class MlEstimator {
 public:
  explicit MlEstimator(const TrackingSetup& setup);

  MlEstimate estimate(const BinnedFrame& frame, const Eigen::Vector3d& prev,
                      const Eigen::Matrix3d* prev_precision = nullptr) const;
  /// Same with the ratio measurement given directly. `log_variance` is an
  /// extra per-pixel variance of log(ratio) (event quantization); empty = none.
  MlEstimate estimate_ratio(const Image& ratio, const Eigen::Vector3d& prev, const Image& log_variance = {},
                            const Eigen::Matrix3d* prev_precision = nullptr) const;

  /// Log-likelihood of `ratio` at candidate `pos`.
  double log_likelihood(const Image& ratio, const Eigen::Vector3d& prev, const Eigen::Vector3d& pos,
                        const Image& log_variance = {}) const;

 private:
  const TrackingSetup* setup_;
};

MlEstimate ml_estimate(const TrackingSetup& setup, const BinnedFrame& frame, const Eigen::Vector3d& prev);

/// Sequential tracking over the rendered bins, seeded with the true start.
/// Each bin's previous pose is refined under the precision carried from the
/// bin before.
/// Returns one estimate per bin (i.e. per trajectory step).
std::vector<Eigen::Vector3d> track(const TrackingSetup& setup, const Trajectory& traj,
                                   const std::vector<BinnedFrame>& frames, int* no_information = nullptr);

struct TrackResult {
  std::vector<Eigen::Vector3d> estimates;
  Eigen::MatrixX3d errors;  ///< estimate - truth per row
  double rmse_3d = 0.0;
  double l1_z = 0.0;
};

TrackResult score(const std::vector<Eigen::Vector3d>& truth, const std::vector<Eigen::Vector3d>& estimates);

/// Header step,x_nm,y_nm,z_nm.
void write_positions_csv(const std::filesystem::path& path, const std::vector<Eigen::Vector3d>& positions);

}  // namespace codedevent

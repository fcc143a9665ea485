#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "codedevent/objective.hpp"
#include "codedevent/param.hpp"

namespace codedevent {

struct OptimizeConfig {
  int epochs = 500;
  int depth_planes = 11;
  double depth_range = 1.5e-6;  ///< planes span [-depth_range, depth_range]
  double beta1 = 0.99;
  double beta2 = 0.999;
  double lr = 1e-3;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  ParamKind parameterization = ParamKind::Neural;
  MaskKind mask_kind = MaskKind::Phase;
  int zernike_terms = 55;
  double speed_mean = 100e-9;
  double speed_sd = 20e-9;
  /// When > 0 every motion has exactly this magnitude.
  double fixed_speed = 0.0;
  int validation_motions = 100;
  int val_every = 10;
  InformationModel model = InformationModel::Event;
  int workers = 1;

  void validate() const;
  std::vector<double> depths() const { return linspace(-depth_range, depth_range, depth_planes); }
  /// Disjoint stream for the held-out motion set.
  std::uint64_t validation_seed() const { return seed ^ 0x9e3779b97f4a7c15ULL; }
};

/// Uniformly random rotation (QR of a Gaussian matrix with the sign fix).
Eigen::Matrix3d random_rotation(std::mt19937_64& rng);

/// Three mutually orthogonal motions: the columns of a random rotation,
/// each scaled by max(|N(mean, sd)|, 1 nm), or by `fixed_speed` when > 0.
std::array<Eigen::Vector3d, 3> sample_motion_batch(std::mt19937_64& rng, double mean = 100e-9, double sd = 20e-9,
                                                   double fixed_speed = 0.0);

/// `count` motions from consecutive orthogonal batches.
std::vector<Eigen::Vector3d> sample_motions(std::uint64_t seed, int count, double mean = 100e-9, double sd = 20e-9,
                                            double fixed_speed = 0.0);

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  int t = 0;
};

/// One bias-corrected Adam update; increments state.t.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state, double lr, double beta1,
               double beta2, double eps = 1e-8);

struct LossRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;  ///< NaN on epochs without validation
};

struct OptimizeResult {
  std::unique_ptr<Parameterization> best;
  std::vector<LossRecord> history;
  double best_val_loss = 0.0;
  int best_epoch = 0;
};

/// Adam on the motion-averaged CRB loss. Epoch 0 records the initial loss.
/// Each epoch draws a fresh orthogonal motion triple, steps, and every
/// `val_every` epochs (and at the last) evaluates the held-out motion set;
/// the parameters with the lowest validation loss are returned.
OptimizeResult optimize_mask(const PsfModel& model, const OptimizeConfig& cfg,
                             const std::function<void(const LossRecord&)>& progress = {});

/// Same loop starting from caller-supplied parameters.
OptimizeResult optimize_mask(const PsfModel& model, const OptimizeConfig& cfg, std::unique_ptr<Parameterization> init,
                             const std::function<void(const LossRecord&)>& progress = {});

}  // namespace codedevent

#include "codedevent/optimize.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace codedevent {

void OptimizeConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (depth_planes < 1) throw ConfigError("depth_planes must be >= 1");
  if (!(depth_range >= 0.0)) throw ConfigError("depth_range must be >= 0");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must be in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be > 0");
  if (!(speed_mean >= 0.0) || !(speed_sd >= 0.0)) throw ConfigError("speed distribution must be non-negative");
  if (fixed_speed < 0.0) throw ConfigError("fixed_speed must be >= 0");
  if (validation_motions < 1) throw ConfigError("validation_motions must be >= 1");
  if (val_every < 1) throw ConfigError("val_every must be >= 1");
  if (zernike_terms < 1) throw ConfigError("zernike_terms must be >= 1");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (parameterization == ParamKind::Zernike && mask_kind != MaskKind::Phase)
    throw ConfigError("zernike parameterization is phase-only");
}

Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Eigen::Matrix3d g;
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i) g(i, j) = n01(rng);
  Eigen::HouseholderQR<Eigen::Matrix3d> qr(g);
  Eigen::Matrix3d q = qr.householderQ();
  const Eigen::Matrix3d r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < 3; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

std::array<Eigen::Vector3d, 3> sample_motion_batch(std::mt19937_64& rng, double mean, double sd, double fixed_speed) {
  const Eigen::Matrix3d q = random_rotation(rng);
  std::normal_distribution<double> speed(mean, sd > 0.0 ? sd : 1e-30);
  std::array<Eigen::Vector3d, 3> out;
  for (int j = 0; j < 3; ++j) {
    const double s = fixed_speed > 0.0 ? fixed_speed : std::max(std::abs(speed(rng)), 1e-9);
    out[static_cast<std::size_t>(j)] = s * q.col(j);
  }
  return out;
}

std::vector<Eigen::Vector3d> sample_motions(std::uint64_t seed, int count, double mean, double sd,
                                            double fixed_speed) {
  std::mt19937_64 rng(seed);
  std::vector<Eigen::Vector3d> out;
  out.reserve(static_cast<std::size_t>(count));
  while (static_cast<int>(out.size()) < count) {
    for (const auto& m : sample_motion_batch(rng, mean, sd, fixed_speed)) {
      if (static_cast<int>(out.size()) < count) out.push_back(m);
    }
  }
  return out;
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state, double lr, double beta1,
               double beta2, double eps) {
  if (grads.size() != params.size()) throw ConfigError("adam_step: gradient size mismatch");
  if (!grads.allFinite()) throw NumericalError("adam_step: non-finite gradient");
  if (state.m.size() != params.size()) {
    state.m = Eigen::VectorXd::Zero(params.size());
    state.v = Eigen::VectorXd::Zero(params.size());
    state.t = 0;
  }
  ++state.t;
  state.m = beta1 * state.m + (1.0 - beta1) * grads;
  state.v = beta2 * state.v + (1.0 - beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1, state.t);
  const double c2 = 1.0 - std::pow(beta2, state.t);
  params.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + eps);
}

OptimizeResult optimize_mask(const PsfModel& model, const OptimizeConfig& cfg,
                             const std::function<void(const LossRecord&)>& progress) {
  cfg.validate();
  auto param = make_parameterization(cfg.parameterization, cfg.mask_kind, model.pupil_ptr(), cfg.zernike_terms);
  param->init(cfg.seed);
  return optimize_mask(model, cfg, std::move(param), progress);
}

OptimizeResult optimize_mask(const PsfModel& model, const OptimizeConfig& cfg, std::unique_ptr<Parameterization> init,
                             const std::function<void(const LossRecord&)>& progress) {
  cfg.validate();
  ObjectiveSpec spec;
  spec.depths = cfg.depths();
  spec.model = cfg.model;
  spec.workers = cfg.workers;
  const CrbObjective objective(model, spec);
  const auto val_motions =
      sample_motions(cfg.validation_seed(), cfg.validation_motions, cfg.speed_mean, cfg.speed_sd, cfg.fixed_speed);

  auto validate_loss = [&](const Parameterization& p, int epoch) {
    const double v = loss_value(p, objective, val_motions);
    if (!std::isfinite(v)) throw NumericalError("validation loss is not finite at epoch " + std::to_string(epoch));
    return v;
  };

  OptimizeResult res;
  const double v0 = validate_loss(*init, 0);
  res.history.push_back({0, v0, v0});
  if (progress) progress(res.history.back());
  res.best = init->clone();
  res.best_val_loss = v0;
  res.best_epoch = 0;

  std::mt19937_64 rng(cfg.seed);
  AdamState state;
  Eigen::VectorXd params = init->parameters();
  Eigen::VectorXd grad;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto batch = sample_motion_batch(rng, cfg.speed_mean, cfg.speed_sd, cfg.fixed_speed);
    double train;
    try {
      train = grad_loss(*init, objective, batch, grad);
    } catch (const NumericalError& e) {
      throw NumericalError("epoch " + std::to_string(epoch) + ": " + e.what());
    }
    if (!std::isfinite(train)) throw NumericalError("training loss is not finite at epoch " + std::to_string(epoch));
    adam_step(params, grad, state, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
    init->set_parameters(params);

    LossRecord rec{epoch, train, std::numeric_limits<double>::quiet_NaN()};
    if (epoch % cfg.val_every == 0 || epoch == cfg.epochs) {
      rec.val_loss = validate_loss(*init, epoch);
      if (rec.val_loss < res.best_val_loss) {
        res.best_val_loss = rec.val_loss;
        res.best_epoch = epoch;
        res.best = init->clone();
      }
    }
    res.history.push_back(rec);
    if (progress) progress(rec);
  }
  return res;
}

}  // namespace codedevent

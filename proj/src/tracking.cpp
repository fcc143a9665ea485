#include "codedevent/tracking.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <random>

#include "codedevent/objective.hpp"
#include "codedevent/parallel.hpp"

namespace codedevent {

bool Volume::contains(const Eigen::Vector3d& p) const {
  return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
}

Eigen::Vector3d Volume::reflect(Eigen::Vector3d p) const {
  for (int a = 0; a < 3; ++a) {
    if (!(hi(a) > lo(a))) {
      p(a) = lo(a);
      continue;
    }
    for (int guard = 0; guard < 64 && (p(a) < lo(a) || p(a) > hi(a)); ++guard) {
      if (p(a) < lo(a)) p(a) = 2.0 * lo(a) - p(a);
      if (p(a) > hi(a)) p(a) = 2.0 * hi(a) - p(a);
    }
    p(a) = std::clamp(p(a), lo(a), hi(a));
  }
  return p;
}

Trajectory brownian_trajectory(int n_positions, std::uint64_t seed, const Volume& volume, double mean, double sd,
                               const Eigen::Vector3d* start) {
  if (n_positions < 1) throw ConfigError("trajectory: need at least one position");
  if ((volume.hi.array() < volume.lo.array()).any()) throw ConfigError("trajectory: volume bounds are inverted");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::normal_distribution<double> speed(mean, sd > 0.0 ? sd : 1e-30);
  Trajectory t;
  t.volume = volume;
  const Eigen::Vector3d p0 = start != nullptr ? *start : volume.center();
  if (!volume.contains(p0)) throw ConfigError("trajectory: start lies outside the volume");
  t.positions.reserve(static_cast<std::size_t>(n_positions));
  t.positions.push_back(p0);
  for (int i = 1; i < n_positions; ++i) {
    Eigen::Vector3d d(n01(rng), n01(rng), n01(rng));
    d.normalize();
    const double s = std::max(std::abs(speed(rng)), 1e-9);
    t.positions.push_back(volume.reflect(t.positions.back() + s * d));
  }
  return t;
}

void TrackingConfig::validate() const {
  if (subframes < 1) throw ConfigError("tracking: subframes must be >= 1");
  if (!(emitter_diameter >= 0.0)) throw ConfigError("tracking: emitter diameter must be >= 0");
  if (!(noise_fraction >= 0.0)) throw ConfigError("tracking: noise fraction must be >= 0");
  if (!(threshold > 0.0)) throw ConfigError("tracking: threshold must be > 0");
  if (!(log_floor >= 0.0)) throw ConfigError("tracking: log floor must be >= 0");
  if (!(lateral_window >= 0.0) || !(axial_window >= 0.0)) throw ConfigError("tracking: windows must be >= 0");
  if (coarse_points < 1) throw ConfigError("tracking: coarse_points must be >= 1");
  if (max_iterations < 0) throw ConfigError("tracking: max_iterations must be >= 0");
  if (workers < 1) throw ConfigError("tracking: workers must be >= 1");
}

TrackingSetup::TrackingSetup(const PsfModel& model, const Mask& mask, const TrackingConfig& cfg)
    : model_(&model),
      cfg_(cfg),
      pupil_(pupil_field(mask, model.pupil())),
      blur_(model.config(), cfg.emitter_diameter) {
  cfg_.validate();
  const double peak = clean_frame(Eigen::Vector3d::Zero()).maxCoeff();
  sigma_ = cfg_.noise_fraction * peak;
  floor_ = cfg_.log_floor > 0.0 ? cfg_.log_floor : std::max(1.0, 3.0 * sigma_);
}

Image TrackingSetup::clean_frame(const Eigen::Vector3d& pos) const {
  return blur_.apply(model_->evaluate(pupil_, pos, false).h);
}

std::vector<BinnedFrame> render_coded_event_video(const TrackingSetup& setup, const Trajectory& traj) {
  const TrackingConfig& cfg = setup.config();
  const int n = setup.model().size();
  const int s = cfg.subframes;
  const std::size_t bins = traj.steps();
  std::vector<BinnedFrame> out(bins);
  EventSimConfig ecfg;
  ecfg.threshold = cfg.threshold;

  auto frame = [&](const Eigen::Vector3d& pos, std::size_t index) {
    Image img = setup.clean_frame(pos);
    if (setup.noise_sigma() > 0.0) {
      // Seeded by the global subframe index so shared bin edges see the same noise.
      std::seed_seq seq{static_cast<std::uint64_t>(cfg.seed), static_cast<std::uint64_t>(index)};
      std::mt19937_64 rng(seq);
      std::normal_distribution<double> noise(0.0, setup.noise_sigma());
      for (Eigen::Index i = 0; i < img.size(); ++i) img(i) += noise(rng);
    }
    return log_intensity(img.max(0.0), setup.beta(), setup.log_floor());
  };

  parallel_for(bins, cfg.workers, [&](std::size_t k) {
    const Eigen::Vector3d p0 = traj.positions[k];
    const Eigen::Vector3d p1 = traj.positions[k + 1];
    std::vector<Image> logs;
    std::vector<double> times;
    logs.reserve(static_cast<std::size_t>(s) + 1);
    for (int j = 0; j <= s; ++j) {
      const double f = static_cast<double>(j) / s;
      logs.push_back(frame(p0 + f * (p1 - p0), k * static_cast<std::size_t>(s) + static_cast<std::size_t>(j)));
      times.push_back((static_cast<double>(k) + f) * traj.dt);
    }
    const EventStream events = simulate_events(logs, times, ecfg);
    const double t0 = times.front();
    const double t1 = std::nextafter(times.back(), std::numeric_limits<double>::infinity());
    out[k] = bin_events(events, n, n, t0, t1);
    out[k].t_end = times.back();
    out[k].n_subframes = s;
  });
  return out;
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Per-pixel Normal likelihood of a bin given the floored previous (mu) and
/// current (nu) intensities plus background. Two measurement models:
///  ratio: y ~ N(nu/mu, nu/mu^2 + nu^2/mu^3 + q (nu/mu)^2), photon-limited;
///  log:   y ~ N(log nu - log mu, sigma^2 (1/nu^2 + 1/mu^2) + q), read-noise
///         limited, matching the rendered video. q is quantization variance
///         in log units; floored pixels carry no read noise.
struct PixelLikelihood {
  bool log_domain = false;
  Eigen::ArrayXd y, q;
  double sigma2 = 0.0;
  double floor = 0.0;

  struct Moments {
    Eigen::ArrayXd m, s2, dm_mu, dm_nu, ds_mu, ds_nu;
  };

  Moments moments(const Eigen::ArrayXd& mu, const Eigen::ArrayXd& nu, bool derivatives) const {
    Moments o;
    if (log_domain) {
      const Eigen::ArrayXd lm = (mu > floor).cast<double>(), ln = (nu > floor).cast<double>();
      const Eigen::ArrayXd im = mu.inverse(), in = nu.inverse();
      o.m = nu.log() - mu.log();
      o.s2 = sigma2 * (in.square() * ln + im.square() * lm) + q;
      if (derivatives) {
        o.dm_mu = -im;
        o.dm_nu = in;
        o.ds_mu = -2.0 * sigma2 * im.cube() * lm;
        o.ds_nu = -2.0 * sigma2 * in.cube() * ln;
      }
    } else {
      const Eigen::ArrayXd im = mu.inverse(), im2 = im.square(), im3 = im2 * im;
      o.m = nu * im;
      o.s2 = nu * im2 + nu.square() * im3 + q * o.m.square();
      if (derivatives) {
        o.dm_mu = -nu * im2;
        o.dm_nu = im;
        o.ds_mu = -2.0 * nu * im3 - 3.0 * nu.square() * im2.square() + 2.0 * q * o.m * o.dm_mu;
        o.ds_nu = im2 + 2.0 * nu * im3 + 2.0 * q * o.m * o.dm_nu;
      }
    }
    return o;
  }

  double log_likelihood(const Eigen::ArrayXd& mu, const Eigen::ArrayXd& nu) const {
    const Moments o = moments(mu, nu, false);
    return -0.5 * ((y - o.m).square() / o.s2 + o.s2.log()).sum();
  }
};

Eigen::ArrayXd quantization_terms(const Image& log_variance, Eigen::Index size) {
  if (log_variance.size() == 0) return Eigen::ArrayXd::Zero(size);
  if (log_variance.size() != size) throw ConfigError("ml estimate: variance shape mismatch");
  if (!(log_variance >= 0.0).all()) throw ConfigError("ml estimate: variance must be >= 0");
  return log_variance.reshaped();
}

MlEstimate solve(const TrackingSetup& su, const PixelLikelihood& like, const Eigen::Vector3d& prev,
                 const Eigen::Matrix3d* prev_precision) {
  const TrackingConfig& cfg = su.config();
  const PsfModel& model = su.model();
  const int n = model.size();
  const double beta = su.beta(), floor = su.log_floor();
  const double px = model.config().object_pixel();
  const double half_fov = 0.5 * model.config().field_of_view();
  const double zmax = model.config().max_defocus;
  if (like.y.size() != static_cast<Eigen::Index>(n) * n) throw ConfigError("ml estimate: measurement shape mismatch");

  auto level = [&](const Eigen::Vector3d& p) {
    return Eigen::ArrayXd((su.clean_frame(p) + beta).max(floor).reshaped());
  };
  const Eigen::ArrayXd mu = level(prev);

  auto valid = [&](const Eigen::Vector3d& p) {
    return std::abs(p.x()) < half_fov && std::abs(p.y()) < half_fov && std::abs(p.z()) <= zmax;
  };

  // Coarse grid: one PSF per depth, lateral offsets by Fourier shifts of the intensity.
  const std::vector<double> lat = linspace(-cfg.lateral_window, cfg.lateral_window, cfg.coarse_points);
  const std::vector<double> ax = linspace(-cfg.axial_window, cfg.axial_window, cfg.coarse_points);
  std::vector<Eigen::ArrayXcd> ramps(lat.size());
  for (std::size_t i = 0; i < lat.size(); ++i) {
    ramps[i].resize(n);
    for (int q = 0; q < n; ++q) {
      const int f = q < n / 2 ? q : q - n;
      ramps[i](q) = std::polar(1.0, -kTwoPi * f * (lat[i] / px) / n);
    }
  }
  const Fft2& fft = model.fft();
  Eigen::Vector3d best = prev;
  double best_ll = -std::numeric_limits<double>::infinity();
  Field spec(n, n), shifted(n, n), img(n, n);
  for (double dz : ax) {
    const Eigen::Vector3d base(prev.x(), prev.y(), prev.z() + dz);
    if (!valid(base)) continue;
    const Image h = model.evaluate(su.pupil(), base, false).h;
    fft.forward(h.cast<std::complex<double>>(), spec);
    if (!su.blur().identity()) spec *= su.blur().transfer();
    for (std::size_t iy = 0; iy < lat.size(); ++iy) {
      for (std::size_t ix = 0; ix < lat.size(); ++ix) {
        const Eigen::Vector3d cand = base + Eigen::Vector3d(lat[ix], lat[iy], 0.0);
        if (!valid(cand)) continue;
        for (int c = 0; c < n; ++c) shifted.col(c) = spec.col(c) * ramps[ix](c) * ramps[iy];
        fft.backward(shifted, img);
        const Eigen::ArrayXd nu = (img.real() / (static_cast<double>(n) * n) + beta).max(floor).reshaped();
        const double ll = like.log_likelihood(mu, nu);
        if (ll > best_ll) {
          best_ll = ll;
          best = cand;
        }
      }
    }
  }

  // Floored intensity and its position derivatives (zero where floored).
  struct Frame {
    Eigen::ArrayXd v;
    Eigen::Matrix3Xd d;
  };
  auto frame_at = [&](const Eigen::Vector3d& p) {
    const PsfEval e = model.evaluate(su.pupil(), p, true);
    const Eigen::ArrayXd raw = (su.blur().apply(e.h) + beta).reshaped();
    const Eigen::ArrayXd live = (raw > floor).cast<double>();
    Frame f{raw.max(floor), Eigen::Matrix3Xd(3, raw.size())};
    f.d.row(0) = (su.blur().apply(e.dh_dx).reshaped() * live).matrix().transpose();
    f.d.row(1) = (su.blur().apply(e.dh_dy).reshaped() * live).matrix().transpose();
    f.d.row(2) = (su.blur().apply(e.dh_dz).reshaped() * live).matrix().transpose();
    return f;
  };

  const bool joint = prev_precision != nullptr;
  const Eigen::Matrix3d prior = joint ? *prev_precision : Eigen::Matrix3d::Zero();
  auto objective = [&](const Eigen::Vector3d& p, const Eigen::ArrayXd& m0, const Eigen::ArrayXd& n0) {
    const Eigen::Vector3d dp = p - prev;
    return like.log_likelihood(m0, n0) - 0.5 * dp.dot(prior * dp);
  };

  // Score and expected information over (previous, current), prior included.
  struct Linear {
    Eigen::Matrix<double, 6, 1> g;
    Eigen::Matrix<double, 6, 6> info;
  };
  auto linearize = [&](const Eigen::Vector3d& p, const Eigen::Vector3d& c) {
    const Frame fc = frame_at(c);
    const Frame fp = joint ? frame_at(p) : Frame{mu, Eigen::Matrix3Xd::Zero(3, mu.size())};
    const PixelLikelihood::Moments o = like.moments(fp.v, fc.v, true);
    const Eigen::ArrayXd resid = like.y - o.m;
    const Eigen::ArrayXd ga = resid / o.s2, gb = 0.5 * (resid.square() / o.s2.square() - o.s2.inverse());
    const Eigen::ArrayXd is2 = o.s2.inverse(), is4 = 0.5 * is2.square();
    const Eigen::ArrayXd j_pp = o.dm_mu.square() * is2 + o.ds_mu.square() * is4;
    const Eigen::ArrayXd j_pc = o.dm_mu * o.dm_nu * is2 + o.ds_mu * o.ds_nu * is4;
    const Eigen::ArrayXd j_cc = o.dm_nu.square() * is2 + o.ds_nu.square() * is4;
    Linear l;
    l.g << fp.d * (ga * o.dm_mu + gb * o.ds_mu).matrix() - prior * (p - prev),
        fc.d * (ga * o.dm_nu + gb * o.ds_nu).matrix();
    const Eigen::Matrix3d i_pc = fp.d * j_pc.matrix().asDiagonal() * fc.d.transpose();
    l.info << fp.d * j_pp.matrix().asDiagonal() * fp.d.transpose() + prior, i_pc, i_pc.transpose(),
        fc.d * j_cc.matrix().asDiagonal() * fc.d.transpose();
    return l;
  };

  // Fisher scoring with backtracking. Without a prior precision the previous
  // pose is taken as exact; with one it is refined jointly, since the bin
  // constrains it as much as the current pose and a slightly wrong previous
  // estimate would otherwise bias the fit and let errors random-walk.
  Eigen::Vector3d p0 = prev;
  Eigen::ArrayXd mu_cur = mu;
  MlEstimate est;
  est.position = best;
  est.log_likelihood = objective(p0, mu_cur, level(best));
  for (int it = 0; it < cfg.max_iterations; ++it) {
    est.iterations = it + 1;
    const Linear l = linearize(p0, est.position);
    Eigen::Matrix<double, 6, 1> step = Eigen::Matrix<double, 6, 1>::Zero();
    if (joint) {
      step = l.info.ldlt().solve(l.g);
    } else {
      step.tail<3>() = l.info.bottomRightCorner<3, 3>().ldlt().solve(l.g.tail<3>());
    }
    if (!step.allFinite()) break;
    const double cap = 200e-9;
    for (int b = 0; b < 2; ++b) {
      const double len = step.segment<3>(3 * b).norm();
      if (len > cap) step *= cap / len;
    }
    bool improved = false;
    for (int h = 0; h < 12; ++h, step *= 0.5) {
      const Eigen::Vector3d pc = p0 + step.head<3>(), cc = est.position + step.tail<3>();
      if (!valid(cc) || !valid(pc)) continue;
      const Eigen::ArrayXd mp = joint ? level(pc) : mu_cur;
      const double ll = objective(pc, mp, level(cc));
      if (ll > est.log_likelihood) {
        p0 = pc;
        mu_cur = mp;
        est.position = cc;
        est.log_likelihood = ll;
        improved = true;
        break;
      }
    }
    if (!improved || step.norm() < 1e-11) break;
  }
  // Information left for the current pose once the previous one is marginalized.
  const Linear l = linearize(p0, est.position);
  const Eigen::Matrix3d i_cc = l.info.bottomRightCorner<3, 3>();
  if (joint) {
    const Eigen::Matrix3d i_pc = l.info.topRightCorner<3, 3>();
    est.precision = i_cc - i_pc.transpose() * l.info.topLeftCorner<3, 3>().ldlt().solve(i_pc);
  } else {
    est.precision = i_cc;
  }
  return est;
}

}  // namespace

MlEstimator::MlEstimator(const TrackingSetup& setup) : setup_(&setup) {}

MlEstimate MlEstimator::estimate(const BinnedFrame& frame, const Eigen::Vector3d& prev,
                                 const Eigen::Matrix3d* prev_precision) const {
  if ((frame.counts == 0).all()) {
    MlEstimate e;
    e.position = prev;
    e.no_information = true;
    return e;
  }
  // Net counts truncate the log change toward zero: k != 0 means
  // T*|k| <= |dL| < T*(|k|+1), k == 0 means |dL| < T. Use interval midpoints
  // and their uniform variances.
  const double t = setup_->config().threshold;
  const Image k = frame.counts.cast<double>();
  PixelLikelihood like;
  like.log_domain = true;
  like.y = (t * (k + 0.5 * k.sign())).reshaped();
  like.q = (k == 0.0).select(Image::Constant(k.rows(), k.cols(), t * t / 3.0), t * t / 12.0).reshaped();
  like.sigma2 = setup_->noise_sigma() * setup_->noise_sigma();
  like.floor = setup_->log_floor();
  return solve(*setup_, like, prev, prev_precision);
}

double MlEstimator::log_likelihood(const Image& ratio, const Eigen::Vector3d& prev, const Eigen::Vector3d& pos,
                                   const Image& log_variance) const {
  const double beta = setup_->beta(), floor = setup_->log_floor();
  const Eigen::ArrayXd mu = (setup_->clean_frame(prev) + beta).max(floor).reshaped();
  const Eigen::ArrayXd nu = (setup_->clean_frame(pos) + beta).max(floor).reshaped();
  PixelLikelihood like;
  like.y = ratio.reshaped();
  like.q = quantization_terms(log_variance, ratio.size());
  return like.log_likelihood(mu, nu);
}

MlEstimate MlEstimator::estimate_ratio(const Image& ratio, const Eigen::Vector3d& prev, const Image& log_variance,
                                       const Eigen::Matrix3d* prev_precision) const {
  PixelLikelihood like;
  like.y = ratio.reshaped();
  like.q = quantization_terms(log_variance, ratio.size());
  return solve(*setup_, like, prev, prev_precision);
}

MlEstimate ml_estimate(const TrackingSetup& setup, const BinnedFrame& frame, const Eigen::Vector3d& prev) {
  return MlEstimator(setup).estimate(frame, prev);
}

std::vector<Eigen::Vector3d> track(const TrackingSetup& setup, const Trajectory& traj,
                                   const std::vector<BinnedFrame>& frames, int* no_information) {
  if (frames.size() != traj.steps()) throw ConfigError("track: one binned frame per trajectory step is required");
  const MlEstimator est(setup);
  std::vector<Eigen::Vector3d> out;
  out.reserve(frames.size());
  Eigen::Vector3d prev = traj.positions.front();
  std::optional<Eigen::Matrix3d> precision;  // none: the start is known exactly
  int empty = 0;
  for (const auto& f : frames) {
    const MlEstimate e = est.estimate(f, prev, precision ? &*precision : nullptr);
    if (e.no_information) {
      ++empty;
    } else {
      precision = e.precision;
    }
    out.push_back(e.position);
    prev = e.position;
  }
  if (no_information != nullptr) *no_information = empty;
  return out;
}

TrackResult score(const std::vector<Eigen::Vector3d>& truth, const std::vector<Eigen::Vector3d>& estimates) {
  if (truth.size() != estimates.size()) throw ConfigError("score: truth and estimates differ in length");
  TrackResult r;
  r.estimates = estimates;
  const auto n = static_cast<Eigen::Index>(truth.size());
  r.errors.resize(n, 3);
  for (Eigen::Index i = 0; i < n; ++i)
    r.errors.row(i) = (estimates[static_cast<std::size_t>(i)] - truth[static_cast<std::size_t>(i)]).transpose();
  if (n > 0) {
    r.rmse_3d = std::sqrt(r.errors.rowwise().squaredNorm().mean());
    r.l1_z = r.errors.col(2).cwiseAbs().mean();
  }
  return r;
}

void write_positions_csv(const std::filesystem::path& path, const std::vector<Eigen::Vector3d>& positions) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os.precision(10);
  os << "step,x_nm,y_nm,z_nm\n";
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const Eigen::Vector3d p = positions[i] * 1e9;
    os << i << ',' << p.x() << ',' << p.y() << ',' << p.z() << '\n';
  }
}

}  // namespace codedevent

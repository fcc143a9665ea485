#include "codedevent/optics.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "codedevent/parallel.hpp"

namespace codedevent {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
using cd = std::complex<double>;

}  // namespace

Eigen::VectorXd PupilGrid::gather(const Eigen::ArrayXXd& a) const {
  Eigen::VectorXd v(support_count());
  for (Eigen::Index k = 0; k < support_count(); ++k) v(k) = a(support_index[k]);
  return v;
}

Eigen::ArrayXXd PupilGrid::scatter(const Eigen::VectorXd& v) const {
  if (v.size() != support_count()) throw std::invalid_argument("pupil scatter: size mismatch");
  Eigen::ArrayXXd a = Eigen::ArrayXXd::Zero(n, n);
  for (Eigen::Index k = 0; k < support_count(); ++k) a(support_index[k]) = v(k);
  return a;
}

PupilGrid make_pupil_grid(const OpticalConfig& cfg) {
  cfg.validate();
  PupilGrid g;
  const int n = cfg.grid;
  g.n = n;
  g.object_pixel = cfg.object_pixel();
  const double df = 1.0 / (n * g.object_pixel);
  const double cutoff = cfg.na / cfg.wavelength;
  g.rho.resize(n, n);
  g.fx.resize(n, n);
  g.fy.resize(n, n);
  g.kz = Eigen::ArrayXXd::Zero(n, n);
  g.support = Eigen::ArrayXXd::Zero(n, n);
  g.centering.resize(n, n);
  std::vector<Eigen::Vector2d> coords;
  for (int c = 0; c < n; ++c) {
    for (int r = 0; r < n; ++r) {
      const double fx = (c - n / 2) * df;
      const double fy = (r - n / 2) * df;
      g.fx(r, c) = fx;
      g.fy(r, c) = fy;
      const double rho = std::hypot(fx, fy) / cutoff;
      g.rho(r, c) = rho;
      g.centering(r, c) = ((r + c) % 2 == 0) ? 1.0 : -1.0;
      if (rho <= 1.0) {
        g.support(r, c) = 1.0;
        const double s = cfg.n_medium * cfg.n_medium - (cfg.na * rho) * (cfg.na * rho);
        g.kz(r, c) = kTwoPi / cfg.wavelength * std::sqrt(s);
        g.support_index.push_back(static_cast<Eigen::Index>(r) + static_cast<Eigen::Index>(c) * n);
        coords.emplace_back(fx / cutoff, fy / cutoff);
      }
    }
  }
  g.support_coords.resize(2, static_cast<Eigen::Index>(coords.size()));
  for (std::size_t k = 0; k < coords.size(); ++k) g.support_coords.col(static_cast<Eigen::Index>(k)) = coords[k];
  return g;
}

Mask open_aperture(const PupilGrid& grid) {
  return Mask{MaskKind::Phase, Eigen::ArrayXXd::Zero(grid.n, grid.n)};
}

void validate_mask(const Mask& mask, const PupilGrid& grid) {
  if (mask.values.rows() != grid.n || mask.values.cols() != grid.n) {
    throw ConfigError("mask: dimensions do not match the pupil grid");
  }
  if (!mask.values.allFinite()) throw ConfigError("mask: non-finite values");
  if (mask.kind == MaskKind::Amplitude &&
      ((mask.values < 0.0).any() || (mask.values > 1.0).any())) {
    throw ConfigError("mask: amplitude values must lie in [0, 1]");
  }
}

Field pupil_field(const Mask& mask, const PupilGrid& grid) {
  validate_mask(mask, grid);
  Field p(grid.n, grid.n);
  if (mask.kind == MaskKind::Phase) {
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      p(i) = grid.support(i) * std::polar(1.0, mask.values(i));
    }
  } else {
    p = (mask.values * grid.support).cast<cd>();
  }
  return p;
}

Image defocus_phase(const OpticalConfig& cfg, const PupilGrid& grid, double z) {
  if (std::abs(z) > cfg.max_defocus) {
    std::ostringstream os;
    os << "defocus: |z| = " << std::abs(z) << " m exceeds the guard " << cfg.max_defocus << " m";
    throw ConfigError(os.str());
  }
  return z * grid.kz;
}

PsfModel::PsfModel(const OpticalConfig& cfg)
    : cfg_(cfg),
      grid_(std::make_shared<const PupilGrid>(make_pupil_grid(cfg))),
      fft_(cfg.grid) {
  const double n2 = static_cast<double>(cfg.grid) * cfg.grid;
  scale_ = std::sqrt(cfg.signal_photons * (1.0 - cfg.background_fraction) /
                     (n2 * static_cast<double>(grid_->support_count())));
}

void PsfModel::check_position(const Eigen::Vector3d& pos) const {
  if (!pos.allFinite()) throw ConfigError("psf: non-finite position");
  const double half = 0.5 * cfg_.field_of_view();
  if (std::abs(pos.x()) > half || std::abs(pos.y()) > half) {
    std::ostringstream os;
    os << "psf: lateral position (" << pos.x() << ", " << pos.y() << ") m is outside the field of view (+/-"
       << half << " m)";
    throw ConfigError(os.str());
  }
  if (std::abs(pos.z()) > cfg_.max_defocus) {
    std::ostringstream os;
    os << "psf: |z| = " << std::abs(pos.z()) << " m exceeds the guard " << cfg_.max_defocus << " m";
    throw ConfigError(os.str());
  }
}

PsfEval PsfModel::evaluate(const Field& pupil, const Eigen::Vector3d& pos, bool gradients, Tape* tape) const {
  const int n = cfg_.grid;
  if (pupil.rows() != n || pupil.cols() != n) throw ConfigError("psf: pupil field does not match grid");
  if (!pupil.allFinite()) throw ConfigError("psf: non-finite pupil field");
  check_position(pos);
  const PupilGrid& g = *grid_;

  Field factor(n, n);
  for (Eigen::Index i = 0; i < factor.size(); ++i) {
    const double psi = pos.z() * g.kz(i) + kTwoPi * (g.fx(i) * pos.x() + g.fy(i) * pos.y());
    factor(i) = g.centering(i) * std::polar(1.0, psi);
  }
  const Field q = pupil * factor;

  PsfEval out;
  out.position = pos;
  Field e = fft_.forward(q) * scale_;
  out.h = e.abs2();
  if (gradients) {
    const cd i1(0.0, 1.0);
    Field ex = fft_.forward(q * (i1 * kTwoPi * g.fx.cast<cd>())) * scale_;
    Field ey = fft_.forward(q * (i1 * kTwoPi * g.fy.cast<cd>())) * scale_;
    Field ez = fft_.forward(q * (i1 * g.kz.cast<cd>())) * scale_;
    out.dh_dx = 2.0 * (e.conjugate() * ex).real();
    out.dh_dy = 2.0 * (e.conjugate() * ey).real();
    out.dh_dz = 2.0 * (e.conjugate() * ez).real();
    out.has_gradients = true;
    if (tape != nullptr) {
      tape->phase_factor = std::move(factor);
      tape->e = std::move(e);
      tape->ex = std::move(ex);
      tape->ey = std::move(ey);
      tape->ez = std::move(ez);
    }
  } else if (tape != nullptr) {
    throw std::logic_error("psf: a tape requires a gradient evaluation");
  }
  return out;
}

Field PsfModel::backward(const Tape& tape, const PsfAdjoint& adj) const {
  const PupilGrid& g = *grid_;
  const cd i1(0.0, 1.0);
  // h = |E|^2 and h_i = 2 Re(conj(E) E_i).
  const Field ge = 2.0 * (adj.h.cast<cd>() * tape.e + adj.dh_dx.cast<cd>() * tape.ex +
                          adj.dh_dy.cast<cd>() * tape.ey + adj.dh_dz.cast<cd>() * tape.ez);
  Field gq = fft_.backward(ge);
  gq -= (i1 * kTwoPi * g.fx.cast<cd>()) * fft_.backward(2.0 * adj.dh_dx.cast<cd>() * tape.e);
  gq -= (i1 * kTwoPi * g.fy.cast<cd>()) * fft_.backward(2.0 * adj.dh_dy.cast<cd>() * tape.e);
  gq -= (i1 * g.kz.cast<cd>()) * fft_.backward(2.0 * adj.dh_dz.cast<cd>() * tape.e);
  return (scale_ * gq) * tape.phase_factor.conjugate() * g.support.cast<cd>();
}

PsfEval compute_psf(const OpticalConfig& cfg, const PupilGrid& grid, const Mask& mask,
                    const Eigen::Vector3d& pos) {
  PsfModel model(cfg);
  return model.evaluate(pupil_field(mask, grid), pos, false);
}

PsfEval psf_gradients(const OpticalConfig& cfg, const PupilGrid& grid, const Mask& mask,
                      const Eigen::Vector3d& pos) {
  PsfModel model(cfg);
  return model.evaluate(pupil_field(mask, grid), pos, true);
}

EmitterBlur::EmitterBlur(const OpticalConfig& cfg, double diameter)
    : n_(cfg.grid), identity_(diameter <= 0.0), fft_(cfg.grid) {
  if (diameter < 0.0 || !std::isfinite(diameter)) throw ConfigError("blur: emitter diameter must be >= 0");
  if (identity_) return;
  // Disk coverage per pixel by 16x16 supersampling, centred on pixel (0, 0)
  // with cyclic wrap so the convolution does not translate the image.
  const double radius = 0.5 * diameter / cfg.object_pixel();
  const int reach = static_cast<int>(std::ceil(radius + 1.0));
  if (2 * reach + 1 > n_) throw ConfigError("blur: emitter larger than the field of view");
  constexpr int kSub = 16;
  Field kernel = Field::Zero(n_, n_);
  double total = 0.0;
  for (int dy = -reach; dy <= reach; ++dy) {
    for (int dx = -reach; dx <= reach; ++dx) {
      int inside = 0;
      for (int sy = 0; sy < kSub; ++sy) {
        for (int sx = 0; sx < kSub; ++sx) {
          const double px = dx - 0.5 + (sx + 0.5) / kSub;
          const double py = dy - 0.5 + (sy + 0.5) / kSub;
          if (px * px + py * py <= radius * radius) ++inside;
        }
      }
      // Always keep the centre pixel so tiny disks degrade to identity.
      double w = static_cast<double>(inside) / (kSub * kSub);
      if (dx == 0 && dy == 0 && w == 0.0) w = 1.0;
      kernel((dy + n_) % n_, (dx + n_) % n_) += w;
      total += w;
    }
  }
  kernel /= total;
  transfer_ = fft_.forward(kernel);
}

Image EmitterBlur::apply(const Image& img) const {
  if (img.rows() != n_ || img.cols() != n_) throw ConfigError("blur: image shape mismatch");
  if (identity_) return img;
  const Field spec = fft_.forward(img.cast<std::complex<double>>());
  return (fft_.backward(spec * transfer_) / (static_cast<double>(n_) * n_)).real();
}

Image blur_emitter(const Image& psf, double emitter_diameter, const OpticalConfig& cfg) {
  return EmitterBlur(cfg, emitter_diameter).apply(psf);
}

std::vector<Image> psf_stack(const PsfModel& model, const Mask& mask, const std::vector<double>& depths,
                             int workers) {
  const Field p = pupil_field(mask, model.pupil());
  std::vector<Image> out(depths.size());
  parallel_for(depths.size(), workers, [&](std::size_t i) {
    out[i] = model.evaluate(p, Eigen::Vector3d(0.0, 0.0, depths[i]), false).h;
  });
  return out;
}

}  // namespace codedevent

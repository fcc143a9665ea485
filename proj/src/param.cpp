#include "codedevent/param.hpp"

#include <cmath>

#include "codedevent/grid_io.hpp"
#include "codedevent/zernike.hpp"

namespace codedevent {

std::string to_string(ParamKind k) {
  switch (k) {
    case ParamKind::PixelWise: return "pixel";
    case ParamKind::Zernike: return "zernike";
    case ParamKind::Neural: return "neural";
  }
  return "?";
}

std::string to_string(MaskKind k) { return k == MaskKind::Phase ? "phase" : "amplitude"; }

ParamKind parse_param_kind(const std::string& s) {
  if (s == "pixel" || s == "pixelwise" || s == "pixel-wise") return ParamKind::PixelWise;
  if (s == "zernike") return ParamKind::Zernike;
  if (s == "neural" || s == "npm" || s == "nam") return ParamKind::Neural;
  throw ConfigError("unknown parameterization '" + s + "' (pixel, zernike, neural)");
}

MaskKind parse_mask_kind(const std::string& s) {
  if (s == "phase") return MaskKind::Phase;
  if (s == "amplitude") return MaskKind::Amplitude;
  throw ConfigError("unknown mask kind '" + s + "' (phase, amplitude)");
}

PixelWiseParams::PixelWiseParams(std::shared_ptr<const PupilGrid> grid, MaskKind kind)
    : Parameterization(std::move(grid)), kind_(kind), values_(Eigen::VectorXd::Zero(grid_->support_count())) {}

void PixelWiseParams::set_parameters(const Eigen::VectorXd& p) {
  if (p.size() != values_.size()) throw ConfigError("pixel-wise mask: parameter count mismatch");
  values_ = p;
}

void PixelWiseParams::init(std::uint64_t) { values_.setZero(); }

Eigen::VectorXd PixelWiseParams::render_support() const {
  if (kind_ == MaskKind::Phase) return values_;
  return (1.0 / (1.0 + (-values_.array()).exp())).matrix();
}

Eigen::VectorXd PixelWiseParams::backward(const Eigen::VectorXd& support_grad) const {
  if (kind_ == MaskKind::Phase) return support_grad;
  const Eigen::ArrayXd s = 1.0 / (1.0 + (-values_.array()).exp());
  return (support_grad.array() * s * (1.0 - s)).matrix();
}

ZernikeParams::ZernikeParams(std::shared_ptr<const PupilGrid> grid, int count)
    : Parameterization(std::move(grid)), basis_(zernike_basis(*grid_, count)), coeffs_(Eigen::VectorXd::Zero(count)) {}

void ZernikeParams::set_parameters(const Eigen::VectorXd& p) {
  if (p.size() != coeffs_.size()) throw ConfigError("zernike mask: coefficient count mismatch");
  coeffs_ = p;
}

void ZernikeParams::init(std::uint64_t) { coeffs_.setZero(); }

NeuralParams::NeuralParams(std::shared_ptr<const PupilGrid> grid, MaskKind kind)
    : Parameterization(std::move(grid)),
      kind_(kind),
      net_(kind == MaskKind::Phase ? Activation::Sinusoidal : Activation::SoftplusSigmoid) {}

std::unique_ptr<Parameterization> make_parameterization(ParamKind pk, MaskKind mk,
                                                        std::shared_ptr<const PupilGrid> grid, int zernike_terms) {
  switch (pk) {
    case ParamKind::PixelWise: return std::make_unique<PixelWiseParams>(std::move(grid), mk);
    case ParamKind::Zernike:
      if (mk != MaskKind::Phase) throw ConfigError("zernike parameterization is phase-only");
      return std::make_unique<ZernikeParams>(std::move(grid), zernike_terms);
    case ParamKind::Neural: return std::make_unique<NeuralParams>(std::move(grid), mk);
  }
  throw ConfigError("unknown parameterization");
}

Mask render_mask(const Parameterization& param) {
  const Eigen::VectorXd v = param.render_support();
  if (!v.allFinite()) throw NumericalError("render_mask: non-finite mask values from " + param.name());
  return Mask{param.mask_kind(), param.grid().scatter(v)};
}

Mask binarize(const Mask& mask, double threshold) {
  if (mask.kind != MaskKind::Amplitude) throw ConfigError("binarize: only amplitude masks can be binarized");
  return Mask{MaskKind::Amplitude, (mask.values >= threshold).cast<double>()};
}

double grad_loss(const Parameterization& param, const CrbObjective& objective,
                 std::span<const Eigen::Vector3d> motions, Eigen::VectorXd& grad) {
  const PupilGrid& g = param.grid();
  const Mask mask = render_mask(param);
  const Field pupil = pupil_field(mask, g);
  Field gp;
  const double loss = objective.value_and_gradient(pupil, motions, gp);
  if (!gp.allFinite()) throw NumericalError("grad_loss: non-finite gradient at the pupil field");
  Eigen::VectorXd support_grad(g.support_count());
  for (Eigen::Index k = 0; k < g.support_count(); ++k) {
    const Eigen::Index i = g.support_index[static_cast<std::size_t>(k)];
    if (mask.kind == MaskKind::Phase) {
      // P = exp(i phi): dL/dphi = Re(conj(G) i P).
      support_grad(k) = std::real(std::conj(gp(i)) * std::complex<double>(0.0, 1.0) * pupil(i));
    } else {
      support_grad(k) = std::real(gp(i));
    }
  }
  if (!support_grad.allFinite()) throw NumericalError("grad_loss: non-finite gradient at the mask values");
  grad = param.backward(support_grad);
  if (!grad.allFinite()) throw NumericalError("grad_loss: non-finite gradient at the " + param.name() + " parameters");
  return loss;
}

double loss_value(const Parameterization& param, const CrbObjective& objective,
                  std::span<const Eigen::Vector3d> motions) {
  return objective.value(pupil_field(render_mask(param), param.grid()), motions);
}

void write_parameters(const std::filesystem::path& path, const Parameterization& param) {
  const Eigen::VectorXd p = param.parameters();
  write_ceo1(path, p.transpose().array());
  write_metadata(path, {{"type", param.name()},
                        {"count", std::to_string(p.size())},
                        {"units", param.mask_kind() == MaskKind::Phase ? "radians" : "logit"}});
}

}  // namespace codedevent

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>

#include "codedevent/neural.hpp"
#include "codedevent/objective.hpp"
#include "codedevent/optics.hpp"

namespace codedevent {

enum class ParamKind { PixelWise, Zernike, Neural };

std::string to_string(ParamKind k);
std::string to_string(MaskKind k);
ParamKind parse_param_kind(const std::string& s);
MaskKind parse_mask_kind(const std::string& s);

/// A differentiable mask representation evaluated on the pupil support.
class Parameterization {
 public:
  explicit Parameterization(std::shared_ptr<const PupilGrid> grid) : grid_(std::move(grid)) {}
  virtual ~Parameterization() = default;

  virtual ParamKind param_kind() const = 0;
  virtual MaskKind mask_kind() const = 0;
  virtual Eigen::VectorXd parameters() const = 0;
  virtual void set_parameters(const Eigen::VectorXd& p) = 0;
  virtual void init(std::uint64_t seed) = 0;
  /// Mask values (phase radians or amplitude) at the support samples.
  virtual Eigen::VectorXd render_support() const = 0;
  /// Chain rule from dL/d(mask value) per support sample to dL/dparams.
  virtual Eigen::VectorXd backward(const Eigen::VectorXd& support_grad) const = 0;
  virtual std::unique_ptr<Parameterization> clone() const = 0;

  const PupilGrid& grid() const { return *grid_; }
  std::shared_ptr<const PupilGrid> grid_ptr() const { return grid_; }
  std::string name() const { return to_string(param_kind()) + "_" + to_string(mask_kind()); }

 protected:
  std::shared_ptr<const PupilGrid> grid_;
};

/// One unconstrained value per support sample; amplitude goes through a sigmoid.
class PixelWiseParams final : public Parameterization {
 public:
  PixelWiseParams(std::shared_ptr<const PupilGrid> grid, MaskKind kind);

  ParamKind param_kind() const override { return ParamKind::PixelWise; }
  MaskKind mask_kind() const override { return kind_; }
  Eigen::VectorXd parameters() const override { return values_; }
  void set_parameters(const Eigen::VectorXd& p) override;
  void init(std::uint64_t seed) override;
  Eigen::VectorXd render_support() const override;
  Eigen::VectorXd backward(const Eigen::VectorXd& support_grad) const override;
  std::unique_ptr<Parameterization> clone() const override { return std::make_unique<PixelWiseParams>(*this); }

 private:
  MaskKind kind_;
  Eigen::VectorXd values_;
};

/// Phase as a sum of Noll-ordered Zernike polynomials (radians).
class ZernikeParams final : public Parameterization {
 public:
  ZernikeParams(std::shared_ptr<const PupilGrid> grid, int count = 55);

  ParamKind param_kind() const override { return ParamKind::Zernike; }
  MaskKind mask_kind() const override { return MaskKind::Phase; }
  Eigen::VectorXd parameters() const override { return coeffs_; }
  void set_parameters(const Eigen::VectorXd& p) override;
  void init(std::uint64_t seed) override;
  Eigen::VectorXd render_support() const override { return basis_ * coeffs_; }
  Eigen::VectorXd backward(const Eigen::VectorXd& support_grad) const override {
    return basis_.transpose() * support_grad;
  }
  std::unique_ptr<Parameterization> clone() const override { return std::make_unique<ZernikeParams>(*this); }

 private:
  Eigen::MatrixXd basis_;
  Eigen::VectorXd coeffs_;
};

/// Coordinate network: sinusoidal for phase, softplus/sigmoid for amplitude.
class NeuralParams final : public Parameterization {
 public:
  NeuralParams(std::shared_ptr<const PupilGrid> grid, MaskKind kind);

  ParamKind param_kind() const override { return ParamKind::Neural; }
  MaskKind mask_kind() const override { return kind_; }
  Eigen::VectorXd parameters() const override { return net_.parameters(); }
  void set_parameters(const Eigen::VectorXd& p) override { net_.set_parameters(p); }
  void init(std::uint64_t seed) override { net_.init(seed); }
  Eigen::VectorXd render_support() const override { return net_.forward(grid_->support_coords); }
  Eigen::VectorXd backward(const Eigen::VectorXd& support_grad) const override {
    return net_.backward(grid_->support_coords, support_grad);
  }
  std::unique_ptr<Parameterization> clone() const override { return std::make_unique<NeuralParams>(*this); }

  NeuralMaskNet& net() { return net_; }
  const NeuralMaskNet& net() const { return net_; }

 private:
  MaskKind kind_;
  NeuralMaskNet net_;
};

std::unique_ptr<Parameterization> make_parameterization(ParamKind pk, MaskKind mk,
                                                        std::shared_ptr<const PupilGrid> grid,
                                                        int zernike_terms = 55);

/// Evaluates the representation at every pupil sample (zero off support).
Mask render_mask(const Parameterization& param);

/// Thresholds an amplitude mask (values >= threshold -> 1, else 0).
Mask binarize(const Mask& mask, double threshold = 0.5);

/// Loss and its gradient with respect to all parameters, by reverse mode
/// through mask, pupil field, PSF model and the CRB objective.
double grad_loss(const Parameterization& param, const CrbObjective& objective,
                 std::span<const Eigen::Vector3d> motions, Eigen::VectorXd& grad);

/// Loss only.
double loss_value(const Parameterization& param, const CrbObjective& objective,
                  std::span<const Eigen::Vector3d> motions);

/// Stores the parameter vector as a 1 x P CEO1 grid with a type tag in the
/// metadata sidecar.
void write_parameters(const std::filesystem::path& path, const Parameterization& param);

}  // namespace codedevent

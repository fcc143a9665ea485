#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace codedevent {

enum class Activation {
  Sinusoidal,       ///< sin(omega0 (W x + b)) hidden layers, linear output (phase, radians)
  SoftplusSigmoid,  ///< softplus hidden layers, sigmoid output (amplitude)
};

/// Coordinate MLP mapping pupil coordinates in [-1, 1]^2 to one value per
/// coordinate. Coordinates are columns of a 2 x M matrix.
class NeuralMaskNet {
 public:
  explicit NeuralMaskNet(Activation act, std::vector<int> widths = {2, 128, 128, 128, 1}, double omega0 = 30.0);

  Activation activation() const { return act_; }
  const std::vector<int>& widths() const { return widths_; }
  double omega0() const { return omega0_; }

  /// Sinusoidal: first layer U(-1/fan_in, 1/fan_in), later layers
  /// U(-sqrt(6/fan_in)/omega0, +); softplus: U(-1/sqrt(fan_in), +) for
  /// weights. Biases U(-1/sqrt(fan_in), +). Deterministic in the seed.
  void init(std::uint64_t seed);

  Eigen::VectorXd forward(const Eigen::Matrix2Xd& coords) const;
  /// dL/dparams for dL/doutput, evaluated at `coords`.
  Eigen::VectorXd backward(const Eigen::Matrix2Xd& coords, const Eigen::VectorXd& output_grad) const;

  Eigen::Index parameter_count() const;
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& p);

  std::vector<Eigen::MatrixXd>& weights() { return weights_; }
  std::vector<Eigen::VectorXd>& biases() { return biases_; }

 private:
  void run(const Eigen::Matrix2Xd& coords, std::vector<Eigen::MatrixXd>& pre,
           std::vector<Eigen::MatrixXd>& act) const;

  Activation act_;
  std::vector<int> widths_;
  double omega0_;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

}  // namespace codedevent

#include "codedevent/neural.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "codedevent/config.hpp"

namespace codedevent {

namespace {

Eigen::ArrayXXd softplus(const Eigen::ArrayXXd& x) {
  return x.max(0.0) + (-x.abs()).exp().log1p();
}

Eigen::ArrayXXd sigmoid(const Eigen::ArrayXXd& x) { return 1.0 / (1.0 + (-x).exp()); }

}  // namespace

NeuralMaskNet::NeuralMaskNet(Activation act, std::vector<int> widths, double omega0)
    : act_(act), widths_(std::move(widths)), omega0_(omega0) {
  if (widths_.size() < 2 || widths_.front() != 2 || widths_.back() != 1) {
    throw ConfigError("neural mask: widths must start at 2 and end at 1");
  }
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    weights_.push_back(Eigen::MatrixXd::Zero(widths_[l + 1], widths_[l]));
    biases_.push_back(Eigen::VectorXd::Zero(widths_[l + 1]));
  }
}

void NeuralMaskNet::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const double fan_in = static_cast<double>(widths_[l]);
    double wb = 0.0;
    if (act_ == Activation::Sinusoidal) {
      wb = (l == 0) ? 1.0 / fan_in : std::sqrt(6.0 / fan_in) / omega0_;
    } else {
      wb = 1.0 / std::sqrt(fan_in);
    }
    const double bb = 1.0 / std::sqrt(fan_in);
    std::uniform_real_distribution<double> uw(-wb, wb), ub(-bb, bb);
    for (Eigen::Index i = 0; i < weights_[l].size(); ++i) weights_[l](i) = uw(rng);
    for (Eigen::Index i = 0; i < biases_[l].size(); ++i) biases_[l](i) = ub(rng);
  }
}

void NeuralMaskNet::run(const Eigen::Matrix2Xd& coords, std::vector<Eigen::MatrixXd>& pre,
                        std::vector<Eigen::MatrixXd>& act) const {
  const std::size_t layers = weights_.size();
  pre.resize(layers);
  act.resize(layers + 1);
  act[0] = coords;
  for (std::size_t l = 0; l < layers; ++l) {
    pre[l] = (weights_[l] * act[l]).colwise() + biases_[l];
    const bool last = (l + 1 == layers);
    if (act_ == Activation::Sinusoidal) {
      act[l + 1] = last ? pre[l] : Eigen::MatrixXd((omega0_ * pre[l].array()).sin().matrix());
    } else {
      act[l + 1] = last ? Eigen::MatrixXd(sigmoid(pre[l].array()).matrix())
                        : Eigen::MatrixXd(softplus(pre[l].array()).matrix());
    }
  }
}

Eigen::VectorXd NeuralMaskNet::forward(const Eigen::Matrix2Xd& coords) const {
  std::vector<Eigen::MatrixXd> pre, act;
  run(coords, pre, act);
  return act.back().row(0).transpose();
}

Eigen::VectorXd NeuralMaskNet::backward(const Eigen::Matrix2Xd& coords, const Eigen::VectorXd& output_grad) const {
  if (output_grad.size() != coords.cols()) throw std::invalid_argument("neural mask: gradient size mismatch");
  std::vector<Eigen::MatrixXd> pre, act;
  run(coords, pre, act);
  const std::size_t layers = weights_.size();
  std::vector<Eigen::MatrixXd> gw(layers);
  std::vector<Eigen::VectorXd> gb(layers);
  Eigen::MatrixXd upstream = output_grad.transpose();  // dL/d(act[layers])
  for (std::size_t li = layers; li-- > 0;) {
    const bool last = (li + 1 == layers);
    Eigen::MatrixXd dpre;
    if (act_ == Activation::Sinusoidal) {
      dpre = last ? upstream
                  : Eigen::MatrixXd((upstream.array() * omega0_ * (omega0_ * pre[li].array()).cos()).matrix());
    } else if (last) {
      const Eigen::ArrayXXd s = act[li + 1].array();
      dpre = (upstream.array() * s * (1.0 - s)).matrix();
    } else {
      dpre = (upstream.array() * sigmoid(pre[li].array())).matrix();
    }
    gw[li] = dpre * act[li].transpose();
    gb[li] = dpre.rowwise().sum();
    if (li > 0) upstream = weights_[li].transpose() * dpre;
  }
  Eigen::VectorXd g(parameter_count());
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    g.segment(k, gw[l].size()) = gw[l].reshaped();
    k += gw[l].size();
    g.segment(k, gb[l].size()) = gb[l];
    k += gb[l].size();
  }
  return g;
}

Eigen::Index NeuralMaskNet::parameter_count() const {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
  return n;
}

Eigen::VectorXd NeuralMaskNet::parameters() const {
  Eigen::VectorXd p(parameter_count());
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    p.segment(k, weights_[l].size()) = weights_[l].reshaped();
    k += weights_[l].size();
    p.segment(k, biases_[l].size()) = biases_[l];
    k += biases_[l].size();
  }
  return p;
}

void NeuralMaskNet::set_parameters(const Eigen::VectorXd& p) {
  if (p.size() != parameter_count()) throw ConfigError("neural mask: parameter count mismatch");
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    weights_[l].reshaped() = p.segment(k, weights_[l].size());
    k += weights_[l].size();
    biases_[l] = p.segment(k, biases_[l].size());
    k += biases_[l].size();
  }
}

}  // namespace codedevent

#include "codedevent/fisher.hpp"

#include <cmath>
#include <sstream>

#include "codedevent/config.hpp"

namespace codedevent {

namespace {

void require_gradients(const PsfEval& p, const char* what) {
  if (!p.has_gradients) throw ConfigError(std::string(what) + ": PSF evaluation lacks derivative images");
}

Eigen::Matrix3Xd stack_rows(const Image& a, const Image& b, const Image& c) {
  Eigen::Matrix3Xd s(3, a.size());
  s.row(0) = a.reshaped().transpose();
  s.row(1) = b.reshaped().transpose();
  s.row(2) = c.reshaped().transpose();
  return s;
}

}  // namespace

double FisherMatrix::min_eigen_ratio() const {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  const double hi = ev.cwiseAbs().maxCoeff();
  return hi == 0.0 ? 0.0 : ev.minCoeff() / hi;
}

FisherMatrix fisher_flashing(const PsfEval& psf, double beta) {
  require_gradients(psf, "fisher_flashing");
  if (beta < 0.0) throw ConfigError("fisher_flashing: beta must be >= 0");
  const Eigen::ArrayXd lambda = (psf.h + beta).reshaped();
  Eigen::Matrix3Xd g = stack_rows(psf.dh_dx, psf.dh_dy, psf.dh_dz);
  Eigen::ArrayXd w(lambda.size());
  for (Eigen::Index n = 0; n < lambda.size(); ++n) {
    if (lambda(n) > 0.0) {
      w(n) = 1.0 / lambda(n);
    } else if (g.col(n).isZero(0.0)) {
      w(n) = 0.0;
    } else {
      throw NumericalError("fisher_flashing: zero intensity with nonzero gradient (set beta > 0)");
    }
  }
  FisherMatrix fi;
  fi.m = Eigen::Matrix3d::Zero();
  fi.m.selfadjointView<Eigen::Lower>().rankUpdate(g * w.sqrt().matrix().asDiagonal());
  fi.m = fi.m.selfadjointView<Eigen::Lower>();
  if (!fi.m.allFinite()) throw NumericalError("fisher_flashing: non-finite information");
  return fi;
}

RatioMoments ratio_moments(double mu, double nu) {
  if (!(mu > 0.0) || !(nu > 0.0)) throw ConfigError("ratio_moments: rates must be positive");
  return {nu / mu, nu / (mu * mu) + nu * nu / (mu * mu * mu)};
}

EventWeights event_weights(double mu, double nu) {
  const double mu2 = mu * mu, nu2 = nu * nu, mn = mu * nu;
  return {2.0 * mu2 * nu + 4.0 * mu2 + 2.0 * mu * nu2 + 12.0 * mn + 9.0 * nu2,
          -(2.0 * mu2 * nu + 2.0 * mu2 + 2.0 * mu * nu2 + 7.0 * mn + 6.0 * nu2),
          2.0 * mu2 * nu + mu2 + 2.0 * mu * nu2 + 4.0 * mn + 4.0 * nu2};
}

Eigen::Matrix<double, 6, 6> fisher_event_pixel(double mu, const Eigen::Vector3d& dmu, double nu,
                                                const Eigen::Vector3d& dnu) {
  Eigen::Matrix<double, 6, 1> d;
  d << dmu / mu, dnu / nu;
  const EventWeights w = event_weights(mu, nu);
  Eigen::Matrix<double, 6, 6> block;
  block << Eigen::Matrix3d::Constant(w.a), Eigen::Matrix3d::Constant(w.b), Eigen::Matrix3d::Constant(w.b),
      Eigen::Matrix3d::Constant(w.c);
  const double s = mu + nu;
  return (d * d.transpose()).cwiseProduct(block) / (2.0 * s * s);
}

FisherMatrix fisher_event(const PsfEval& current, const PsfEval& previous, double beta) {
  require_gradients(current, "fisher_event");
  require_gradients(previous, "fisher_event");
  if (current.h.rows() != previous.h.rows() || current.h.cols() != previous.h.cols()) {
    throw ConfigError("fisher_event: PSF grids differ");
  }
  if (!(beta > 0.0)) throw ConfigError("fisher_event: beta must be positive");
  const Eigen::ArrayXd mu = (previous.h + beta).reshaped();
  const Eigen::ArrayXd nu = (current.h + beta).reshaped();
  if ((mu <= 0.0).any() || (nu <= 0.0).any()) throw NumericalError("fisher_event: non-positive rate");
  Eigen::Matrix3Xd p = stack_rows(previous.dh_dx, previous.dh_dy, previous.dh_dz);
  Eigen::Matrix3Xd q = stack_rows(current.dh_dx, current.dh_dy, current.dh_dz);
  p = p * mu.inverse().matrix().asDiagonal();
  q = q * nu.inverse().matrix().asDiagonal();
  const Eigen::ArrayXd mu2 = mu * mu, nu2 = nu * nu, mn = mu * nu;
  const Eigen::ArrayXd norm = 0.5 / ((mu + nu) * (mu + nu));
  const Eigen::ArrayXd wa = norm * (2.0 * mu2 * nu + 4.0 * mu2 + 2.0 * mu * nu2 + 12.0 * mn + 9.0 * nu2);
  const Eigen::ArrayXd wb = -norm * (2.0 * mu2 * nu + 2.0 * mu2 + 2.0 * mu * nu2 + 7.0 * mn + 6.0 * nu2);
  const Eigen::ArrayXd wc = norm * (2.0 * mu2 * nu + mu2 + 2.0 * mu * nu2 + 4.0 * mn + 4.0 * nu2);

  Eigen::Matrix3d ipp = p * wa.matrix().asDiagonal() * p.transpose();
  const Eigen::Matrix3d ipq = p * wb.matrix().asDiagonal() * q.transpose();
  Eigen::Matrix3d iqq = q * wc.matrix().asDiagonal() * q.transpose();
  // Diagonal blocks are Gram-type products; take one triangle so the result
  // is symmetric bit-for-bit.
  ipp = ipp.triangularView<Eigen::Lower>().toDenseMatrix() +
        ipp.triangularView<Eigen::StrictlyLower>().toDenseMatrix().transpose();
  iqq = iqq.triangularView<Eigen::Lower>().toDenseMatrix() +
        iqq.triangularView<Eigen::StrictlyLower>().toDenseMatrix().transpose();
  FisherMatrix fi;
  fi.m.resize(6, 6);
  fi.m << ipp, ipq, ipq.transpose(), iqq;
  if (!fi.m.allFinite()) throw NumericalError("fisher_event: non-finite information");
  return fi;
}

CrbResult crb(const FisherMatrix& fi, double ridge) {
  const Eigen::Index d = fi.dim();
  if (d == 0 || fi.m.cols() != d) throw ConfigError("crb: information matrix must be square");
  if (!(fi.m.array() == fi.m.transpose().array()).all()) throw ConfigError("crb: information matrix not symmetric");
  const double tr = fi.m.trace();
  const Eigen::MatrixXd r = fi.m + (ridge * tr / static_cast<double>(d)) * Eigen::MatrixXd::Identity(d, d);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(r);
  if (!lu.isInvertible()) throw NumericalError("crb: information matrix singular after ridge");
  const Eigen::VectorXd diag = lu.inverse().diagonal();
  if (!(diag.array() > 0.0).all() || !diag.allFinite()) {
    throw NumericalError("crb: inverse has non-positive diagonal");
  }
  CrbResult out;
  out.per_parameter = diag.array().sqrt();
  return out;
}

}  // namespace codedevent

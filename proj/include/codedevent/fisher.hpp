#pragma once

#include <Eigen/Dense>

#include "codedevent/optics.hpp"

namespace codedevent {

/// Fisher information over emitter coordinates, in 1/m^2.
///
/// Flashing model: 3x3 over (x, y, z). Event model: 6x6 over
/// (x, y, z) of the previous pose followed by (x, y, z) of the current pose.
struct FisherMatrix {
  Eigen::MatrixXd m;

  Eigen::Index dim() const { return m.rows(); }
  /// Smallest eigenvalue divided by the largest (negative => indefinite).
  double min_eigen_ratio() const;
};

/// Square-rooted diagonal of the (ridge-regularized) inverse, in meters.
struct CrbResult {
  Eigen::VectorXd per_parameter;
  double depth = 0.0;
  Eigen::Vector3d motion = Eigen::Vector3d::Zero();

  double sum() const { return per_parameter.sum(); }
  double mean() const { return per_parameter.mean(); }
};

/// Poisson information of a blinking emitter: sum_n dh_i dh_j / (h + beta).
FisherMatrix fisher_flashing(const PsfEval& psf, double beta);

/// Normal approximation of the ratio nu/mu of Poisson counts with means nu, mu.
struct RatioMoments {
  double mean;
  double variance;
};
RatioMoments ratio_moments(double mu, double nu);

/// Per-pixel block weights of the event information; they satisfy
/// a + 2b + c = (mu + nu)^2.
struct EventWeights {
  double a;
  double b;
  double c;
};
EventWeights event_weights(double mu, double nu);

/// Event-camera information for a pixelwise log-ratio measurement between
/// the previous pose (mu = h_prev + beta) and the current pose (nu = h + beta).
FisherMatrix fisher_event(const PsfEval& current, const PsfEval& previous, double beta);

/// Direct scalar evaluation of one pixel's 6x6 event-information term.
Eigen::Matrix<double, 6, 6> fisher_event_pixel(double mu, const Eigen::Vector3d& dmu, double nu,
                                                const Eigen::Vector3d& dnu);

/// sqrt(diag((m + ridge * tr(m) / dim * I)^-1)).
CrbResult crb(const FisherMatrix& fi, double ridge = 1e-9);

}  // namespace codedevent

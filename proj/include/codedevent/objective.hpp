#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "codedevent/fisher.hpp"
#include "codedevent/optics.hpp"

namespace codedevent {

enum class InformationModel {
  Event,     ///< 6x6 log-ratio information between two poses
  Flashing,  ///< 3x3 Poisson information of a single frame (CMOS / blinking)
};

/// n evenly spaced values over [lo, hi] inclusive.
std::vector<double> linspace(double lo, double hi, int n);

struct ObjectiveSpec {
  std::vector<double> depths;
  double ridge = 1e-9;
  InformationModel model = InformationModel::Event;
  int workers = 1;
};

/// Sum over depth planes of the summed per-parameter CRB, averaged over the
/// motion set. For each plane z and motion d the previous pose is (0, 0, z)
/// and the current pose is (d.x, d.y, z + d.z). The flashing model ignores
/// motions and uses the single pose (0, 0, z).
///
/// value_and_gradient() also returns dL/dP for the complex pupil field P by
/// reverse-mode differentiation through the matrix inverse, the information
/// assembly, and the PSF model.
class CrbObjective {
 public:
  CrbObjective(const PsfModel& model, ObjectiveSpec spec);

  const ObjectiveSpec& spec() const { return spec_; }
  const PsfModel& model() const { return *model_; }

  double value(const Field& pupil, std::span<const Eigen::Vector3d> motions) const;
  double value_and_gradient(const Field& pupil, std::span<const Eigen::Vector3d> motions, Field& grad) const;

  /// Motion-averaged CRB per parameter at every depth plane.
  std::vector<CrbResult> curve(const Field& pupil, std::span<const Eigen::Vector3d> motions) const;

 private:
  double plane(const Field& pupil, double z, std::span<const Eigen::Vector3d> motions, Field* grad,
               CrbResult* mean_crb) const;

  const PsfModel* model_;
  ObjectiveSpec spec_;
};

/// Adjoint of L = weight * sum_i sqrt([ (M + ridge tr(M)/d I)^-1 ]_ii) with
/// respect to M.
Eigen::MatrixXd crb_sum_backward(const FisherMatrix& fi, double ridge, double weight);

/// Adjoints of L = <S, I_event> (S symmetric) for the previous and current PSF.
void fisher_event_backward(const PsfEval& current, const PsfEval& previous, double beta,
                           const Eigen::MatrixXd& sensitivity, PsfAdjoint& current_adj,
                           PsfAdjoint& previous_adj);

/// Adjoint of L = <S, I_flashing> for the PSF.
PsfAdjoint fisher_flashing_backward(const PsfEval& psf, double beta, const Eigen::MatrixXd& sensitivity);

}  // namespace codedevent

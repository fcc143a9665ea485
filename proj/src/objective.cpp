#include "codedevent/objective.hpp"

#include <cmath>
#include <sstream>

#include "codedevent/parallel.hpp"

namespace codedevent {

namespace {

Eigen::Matrix3Xd stack_rows(const Image& a, const Image& b, const Image& c) {
  Eigen::Matrix3Xd s(3, a.size());
  s.row(0) = a.reshaped().transpose();
  s.row(1) = b.reshaped().transpose();
  s.row(2) = c.reshaped().transpose();
  return s;
}

void unstack_rows(const Eigen::Matrix3Xd& s, Eigen::Index n, Image& a, Image& b, Image& c) {
  a = s.row(0).transpose().array().reshaped(n, n);
  b = s.row(1).transpose().array().reshaped(n, n);
  c = s.row(2).transpose().array().reshaped(n, n);
}

void add_adjoint(PsfAdjoint& acc, const PsfAdjoint& a) {
  if (acc.h.size() == 0) {
    acc = a;
    return;
  }
  acc.h += a.h;
  acc.dh_dx += a.dh_dx;
  acc.dh_dy += a.dh_dy;
  acc.dh_dz += a.dh_dz;
}

}  // namespace

std::vector<double> linspace(double lo, double hi, int n) {
  if (n < 1) throw ConfigError("linspace: need n >= 1");
  std::vector<double> v(static_cast<std::size_t>(n));
  if (n == 1) {
    v[0] = 0.5 * (lo + hi);
    return v;
  }
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  return v;
}

Eigen::MatrixXd crb_sum_backward(const FisherMatrix& fi, double ridge, double weight) {
  const Eigen::Index d = fi.dim();
  const double tr = fi.m.trace();
  const Eigen::MatrixXd r = fi.m + (ridge * tr / static_cast<double>(d)) * Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd c = r.fullPivLu().inverse();
  Eigen::MatrixXd cbar = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) cbar(i, i) = weight * 0.5 / std::sqrt(c(i, i));
  // d(R^-1) = -R^-1 dR R^-1.
  const Eigen::MatrixXd rbar = -c.transpose() * cbar * c.transpose();
  Eigen::MatrixXd mbar = rbar;
  mbar.diagonal().array() += ridge / static_cast<double>(d) * rbar.trace();
  return mbar;
}

void fisher_event_backward(const PsfEval& current, const PsfEval& previous, double beta,
                           const Eigen::MatrixXd& sensitivity, PsfAdjoint& current_adj,
                           PsfAdjoint& previous_adj) {
  const Eigen::MatrixXd s = 0.5 * (sensitivity + sensitivity.transpose());
  const Eigen::Matrix3d spp = s.topLeftCorner<3, 3>();
  const Eigen::Matrix3d spq = s.topRightCorner<3, 3>();
  const Eigen::Matrix3d sqq = s.bottomRightCorner<3, 3>();
  const Eigen::Index n = current.h.rows();

  const Eigen::ArrayXd mu = (previous.h + beta).reshaped();
  const Eigen::ArrayXd nu = (current.h + beta).reshaped();
  const Eigen::Matrix3Xd p = stack_rows(previous.dh_dx, previous.dh_dy, previous.dh_dz) *
                             mu.inverse().matrix().asDiagonal();
  const Eigen::Matrix3Xd q = stack_rows(current.dh_dx, current.dh_dy, current.dh_dz) *
                             nu.inverse().matrix().asDiagonal();
  const Eigen::ArrayXd mu2 = mu * mu, nu2 = nu * nu, mn = mu * nu;
  const Eigen::ArrayXd sum = mu + nu;
  const Eigen::ArrayXd norm = 0.5 / (sum * sum);
  const Eigen::ArrayXd dnorm = -1.0 / (sum * sum * sum);  // d(norm)/dmu = d(norm)/dnu

  const Eigen::ArrayXd a = 2.0 * mu2 * nu + 4.0 * mu2 + 2.0 * mu * nu2 + 12.0 * mn + 9.0 * nu2;
  const Eigen::ArrayXd b = -(2.0 * mu2 * nu + 2.0 * mu2 + 2.0 * mu * nu2 + 7.0 * mn + 6.0 * nu2);
  const Eigen::ArrayXd c = 2.0 * mu2 * nu + mu2 + 2.0 * mu * nu2 + 4.0 * mn + 4.0 * nu2;
  const Eigen::ArrayXd a_mu = 4.0 * mn + 8.0 * mu + 2.0 * nu2 + 12.0 * nu;
  const Eigen::ArrayXd a_nu = 2.0 * mu2 + 4.0 * mn + 12.0 * mu + 18.0 * nu;
  const Eigen::ArrayXd b_mu = -(4.0 * mn + 4.0 * mu + 2.0 * nu2 + 7.0 * nu);
  const Eigen::ArrayXd b_nu = -(2.0 * mu2 + 4.0 * mn + 7.0 * mu + 12.0 * nu);
  const Eigen::ArrayXd c_mu = 4.0 * mn + 2.0 * mu + 2.0 * nu2 + 4.0 * nu;
  const Eigen::ArrayXd c_nu = 2.0 * mu2 + 4.0 * mn + 4.0 * mu + 8.0 * nu;

  const Eigen::ArrayXd wa = norm * a, wb = norm * b, wc = norm * c;

  const Eigen::Matrix3Xd spp_p = spp * p;
  const Eigen::Matrix3Xd spq_q = spq * q;
  const Eigen::Matrix3Xd sqq_q = sqq * q;
  const Eigen::Matrix3Xd sqp_p = spq.transpose() * p;

  const Eigen::Matrix3Xd pbar =
      2.0 * (spp_p * wa.matrix().asDiagonal() + spq_q * wb.matrix().asDiagonal());
  const Eigen::Matrix3Xd qbar =
      2.0 * (sqq_q * wc.matrix().asDiagonal() + sqp_p * wb.matrix().asDiagonal());
  const Eigen::ArrayXd wa_bar = p.cwiseProduct(spp_p).colwise().sum().transpose().array();
  const Eigen::ArrayXd wb_bar = 2.0 * p.cwiseProduct(spq_q).colwise().sum().transpose().array();
  const Eigen::ArrayXd wc_bar = q.cwiseProduct(sqq_q).colwise().sum().transpose().array();

  const Eigen::ArrayXd mu_bar = wa_bar * (norm * a_mu + dnorm * a) + wb_bar * (norm * b_mu + dnorm * b) +
                                wc_bar * (norm * c_mu + dnorm * c) -
                                pbar.cwiseProduct(p).colwise().sum().transpose().array() / mu;
  const Eigen::ArrayXd nu_bar = wa_bar * (norm * a_nu + dnorm * a) + wb_bar * (norm * b_nu + dnorm * b) +
                                wc_bar * (norm * c_nu + dnorm * c) -
                                qbar.cwiseProduct(q).colwise().sum().transpose().array() / nu;

  previous_adj.h = mu_bar.reshaped(n, n);
  current_adj.h = nu_bar.reshaped(n, n);
  unstack_rows(pbar * mu.inverse().matrix().asDiagonal(), n, previous_adj.dh_dx, previous_adj.dh_dy,
               previous_adj.dh_dz);
  unstack_rows(qbar * nu.inverse().matrix().asDiagonal(), n, current_adj.dh_dx, current_adj.dh_dy,
               current_adj.dh_dz);
}

PsfAdjoint fisher_flashing_backward(const PsfEval& psf, double beta, const Eigen::MatrixXd& sensitivity) {
  const Eigen::Matrix3d s = 0.5 * (sensitivity + sensitivity.transpose());
  const Eigen::Index n = psf.h.rows();
  const Eigen::ArrayXd lambda = (psf.h + beta).reshaped();
  const Eigen::ArrayXd inv = (lambda > 0.0).select(lambda.inverse(), 0.0);
  const Eigen::Matrix3Xd g = stack_rows(psf.dh_dx, psf.dh_dy, psf.dh_dz);
  const Eigen::Matrix3Xd sg = s * g;
  PsfAdjoint adj;
  adj.h = (-g.cwiseProduct(sg).colwise().sum().transpose().array() * inv * inv).reshaped(n, n);
  unstack_rows(2.0 * sg * inv.matrix().asDiagonal(), n, adj.dh_dx, adj.dh_dy, adj.dh_dz);
  return adj;
}

CrbObjective::CrbObjective(const PsfModel& model, ObjectiveSpec spec) : model_(&model), spec_(std::move(spec)) {
  if (spec_.depths.empty()) throw ConfigError("crb objective: need at least one depth plane");
}

double CrbObjective::plane(const Field& pupil, double z, std::span<const Eigen::Vector3d> motions, Field* grad,
                           CrbResult* mean_crb) const {
  const PsfModel& m = *model_;
  const double beta = m.beta();
  const Eigen::Vector3d base(0.0, 0.0, z);
  auto check = [&](const CrbResult& r, const Eigen::Vector3d& motion) {
    if (!r.per_parameter.allFinite()) {
      std::ostringstream os;
      os << "crb objective: non-finite bound at z=" << z << " motion=(" << motion.transpose() << ")";
      throw NumericalError(os.str());
    }
  };

  if (spec_.model == InformationModel::Flashing) {
    PsfModel::Tape tape;
    const PsfEval psf = m.evaluate(pupil, base, true, grad != nullptr ? &tape : nullptr);
    const FisherMatrix fi = fisher_flashing(psf, beta);
    CrbResult r = crb(fi, spec_.ridge);
    r.depth = z;
    check(r, Eigen::Vector3d::Zero());
    if (mean_crb != nullptr) *mean_crb = r;
    if (grad != nullptr) {
      const Eigen::MatrixXd sens = crb_sum_backward(fi, spec_.ridge, 1.0);
      *grad = m.backward(tape, fisher_flashing_backward(psf, beta, sens));
    }
    return r.sum();
  }

  if (motions.empty()) throw ConfigError("crb objective: the event model needs at least one motion");
  PsfModel::Tape prev_tape;
  const PsfEval prev = m.evaluate(pupil, base, true, grad != nullptr ? &prev_tape : nullptr);
  const double weight = 1.0 / static_cast<double>(motions.size());
  PsfAdjoint prev_adj;
  double loss = 0.0;
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(6);
  if (grad != nullptr) *grad = Field::Zero(pupil.rows(), pupil.cols());
  for (const auto& d : motions) {
    PsfModel::Tape tape;
    const PsfEval cur = m.evaluate(pupil, base + d, true, grad != nullptr ? &tape : nullptr);
    const FisherMatrix fi = fisher_event(cur, prev, beta);
    const CrbResult r = crb(fi, spec_.ridge);
    check(r, d);
    loss += weight * r.sum();
    acc += weight * r.per_parameter;
    if (grad != nullptr) {
      const Eigen::MatrixXd sens = crb_sum_backward(fi, spec_.ridge, weight);
      PsfAdjoint cur_adj, p_adj;
      fisher_event_backward(cur, prev, beta, sens, cur_adj, p_adj);
      add_adjoint(prev_adj, p_adj);
      *grad += m.backward(tape, cur_adj);
    }
  }
  if (grad != nullptr) *grad += m.backward(prev_tape, prev_adj);
  if (mean_crb != nullptr) {
    mean_crb->per_parameter = acc;
    mean_crb->depth = z;
  }
  return loss;
}

double CrbObjective::value(const Field& pupil, std::span<const Eigen::Vector3d> motions) const {
  std::vector<double> parts(spec_.depths.size());
  parallel_for(parts.size(), spec_.workers,
               [&](std::size_t i) { parts[i] = plane(pupil, spec_.depths[i], motions, nullptr, nullptr); });
  double total = 0.0;
  for (double v : parts) total += v;
  return total;
}

double CrbObjective::value_and_gradient(const Field& pupil, std::span<const Eigen::Vector3d> motions,
                                        Field& grad) const {
  std::vector<double> parts(spec_.depths.size());
  std::vector<Field> grads(spec_.depths.size());
  parallel_for(parts.size(), spec_.workers,
               [&](std::size_t i) { parts[i] = plane(pupil, spec_.depths[i], motions, &grads[i], nullptr); });
  double total = 0.0;
  grad = Field::Zero(pupil.rows(), pupil.cols());
  for (std::size_t i = 0; i < parts.size(); ++i) {
    total += parts[i];
    grad += grads[i];
  }
  if (!std::isfinite(total) || !grad.allFinite()) throw NumericalError("crb objective: non-finite gradient");
  return total;
}

std::vector<CrbResult> CrbObjective::curve(const Field& pupil, std::span<const Eigen::Vector3d> motions) const {
  std::vector<CrbResult> out(spec_.depths.size());
  parallel_for(out.size(), spec_.workers,
               [&](std::size_t i) { plane(pupil, spec_.depths[i], motions, nullptr, &out[i]); });
  return out;
}

}  // namespace codedevent

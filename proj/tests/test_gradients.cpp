#include <doctest.h>

#include <random>

#include "codedevent/objective.hpp"
#include "helpers.hpp"

using namespace codedevent;

namespace {

Field random_pupil(const PupilGrid& g, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd v(g.support_count());
  for (auto& x : v) x = n(rng);
  return pupil_field(Mask{MaskKind::Phase, g.scatter(v)}, g);
}

Field random_direction(const PupilGrid& g, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Field d(g.n, g.n);
  for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = g.support(i) * std::complex<double>(n(rng), n(rng));
  return d;
}

double inner(const Field& g, const Field& d) { return (g.conjugate() * d).real().sum(); }

Image random_image(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> u(0.0, 1.0);
  Image a(n, n);
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = u(rng);
  return a;
}

}  // namespace

TEST_SUITE("gradients") {
  TEST_CASE("CRB-sum adjoint matches finite differences") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int k = 0; k < 10; ++k) {
      Eigen::MatrixXd a(6, 6);
      for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = n(rng);
      FisherMatrix fi;
      fi.m = a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(6, 6);
      Eigen::MatrixXd e(6, 6);
      for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = n(rng);
      e = 0.5 * (e + e.transpose()).eval();
      const double ridge = 1e-3;
      const Eigen::MatrixXd bar = crb_sum_backward(fi, ridge, 1.0);
      const double h = 1e-6;
      FisherMatrix p = fi, m = fi;
      p.m += h * e;
      m.m -= h * e;
      const double fd = (crb(p, ridge).sum() - crb(m, ridge).sum()) / (2 * h);
      CHECK(testutil::rel_err((bar.array() * e.array()).sum(), fd) < 1e-6);
    }
  }

  TEST_CASE("event-information adjoint matches finite differences") {
    const PsfModel model(testutil::small_config(32));
    std::mt19937_64 rng(2);
    const Field p = random_pupil(model.pupil(), rng);
    PsfEval prev = model.evaluate(p, Eigen::Vector3d(0, 0, 0.2e-6), true);
    PsfEval cur = model.evaluate(p, Eigen::Vector3d(50e-9, 20e-9, 0.3e-6), true);
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd s(6, 6);
    for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = n(rng);
    s = (s + s.transpose()).eval();
    const double beta = model.beta();
    PsfAdjoint ca, pa;
    fisher_event_backward(cur, prev, beta, s, ca, pa);
    auto loss = [&](const PsfEval& c, const PsfEval& q) { return (s.array() * fisher_event(c, q, beta).m.array()).sum(); };

    // Perturb every input image of both poses along random directions.
    const Eigen::Index nn = cur.h.rows();
    PsfEval dc = cur, dp = prev;
    dc.h = random_image(nn, rng) * cur.h.maxCoeff() * 1e-2;
    dp.h = random_image(nn, rng) * prev.h.maxCoeff() * 1e-2;
    for (Image* im : {&dc.dh_dx, &dc.dh_dy, &dc.dh_dz}) *im = random_image(nn, rng) * cur.dh_dx.abs().maxCoeff();
    for (Image* im : {&dp.dh_dx, &dp.dh_dy, &dp.dh_dz}) *im = random_image(nn, rng) * prev.dh_dx.abs().maxCoeff();
    auto axpy = [](const PsfEval& a, const PsfEval& d, double t) {
      PsfEval r = a;
      r.h = (a.h + t * d.h).max(0.0);
      r.dh_dx = a.dh_dx + t * d.dh_dx;
      r.dh_dy = a.dh_dy + t * d.dh_dy;
      r.dh_dz = a.dh_dz + t * d.dh_dz;
      return r;
    };
    // Keep h strictly positive under the perturbation.
    dc.h = dc.h.min(cur.h * 0.5).max(-cur.h * 0.5);
    dp.h = dp.h.min(prev.h * 0.5).max(-prev.h * 0.5);
    const double t = 1e-4;
    const double fd = (loss(axpy(cur, dc, t), axpy(prev, dp, t)) - loss(axpy(cur, dc, -t), axpy(prev, dp, -t))) / (2 * t);
    double an = 0.0;
    an += (ca.h * dc.h).sum() + (ca.dh_dx * dc.dh_dx).sum() + (ca.dh_dy * dc.dh_dy).sum() + (ca.dh_dz * dc.dh_dz).sum();
    an += (pa.h * dp.h).sum() + (pa.dh_dx * dp.dh_dx).sum() + (pa.dh_dy * dp.dh_dy).sum() + (pa.dh_dz * dp.dh_dz).sum();
    CHECK(testutil::rel_err(an, fd) < 1e-6);
  }

  TEST_CASE("PSF adjoint with respect to the pupil field matches finite differences") {
    const PsfModel model(testutil::small_config(32));
    std::mt19937_64 rng(3);
    const Field p = random_pupil(model.pupil(), rng);
    const Eigen::Vector3d pos(30e-9, -70e-9, -0.6e-6);
    PsfAdjoint adj;
    for (Image* im : {&adj.h, &adj.dh_dx, &adj.dh_dy, &adj.dh_dz}) *im = random_image(32, rng);
    adj.dh_dx *= 1e-7;
    adj.dh_dy *= 1e-7;
    adj.dh_dz *= 1e-7;
    auto loss = [&](const Field& q) {
      const PsfEval e = model.evaluate(q, pos, true);
      return (adj.h * e.h).sum() + (adj.dh_dx * e.dh_dx).sum() + (adj.dh_dy * e.dh_dy).sum() +
             (adj.dh_dz * e.dh_dz).sum();
    };
    PsfModel::Tape tape;
    model.evaluate(p, pos, true, &tape);
    const Field g = model.backward(tape, adj);
    const Field d = random_direction(model.pupil(), rng);
    const double t = 1e-6;
    const double fd = (loss(p + t * d) - loss(p - t * d)) / (2 * t);
    CHECK(testutil::rel_err(inner(g, d), fd) < 1e-6);
  }

  TEST_CASE("objective gradient matches finite differences for both information models") {
    const PsfModel model(testutil::small_config(32));
    std::mt19937_64 rng(4);
    const std::vector<Eigen::Vector3d> motions{{80e-9, 10e-9, -30e-9}, {-20e-9, 90e-9, 40e-9}};
    for (auto kind : {InformationModel::Event, InformationModel::Flashing}) {
      ObjectiveSpec spec;
      spec.depths = {-0.8e-6, 0.1e-6, 1.2e-6};
      spec.model = kind;
      const CrbObjective obj(model, spec);
      const Field p = random_pupil(model.pupil(), rng);
      Field g;
      const double v = obj.value_and_gradient(p, motions, g);
      CHECK(v == doctest::Approx(obj.value(p, motions)).epsilon(1e-12));
      for (int k = 0; k < 3; ++k) {
        const Field d = random_direction(model.pupil(), rng);
        const double t = 1e-6;
        const double fd = (obj.value(p + t * d, motions) - obj.value(p - t * d, motions)) / (2 * t);
        CHECK(testutil::rel_err(inner(g, d), fd) < 1e-5);
      }
    }
  }

  TEST_CASE("event objective needs at least one motion") {
    const PsfModel model(testutil::small_config(32));
    ObjectiveSpec spec;
    spec.depths = {0.0};
    const CrbObjective obj(model, spec);
    const std::vector<Eigen::Vector3d> none;
    CHECK_THROWS_AS(obj.value(pupil_field(open_aperture(model.pupil()), model.pupil()), none), ConfigError);
  }
}

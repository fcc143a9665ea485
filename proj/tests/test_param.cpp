#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <random>

#include "codedevent/grid_io.hpp"
#include "codedevent/param.hpp"
#include "codedevent/zernike.hpp"
#include "helpers.hpp"

using namespace codedevent;

namespace {

struct Fixture {
  OpticalConfig cfg = testutil::small_config(32);
  PsfModel model{cfg};
  ObjectiveSpec spec() const {
    ObjectiveSpec s;
    s.depths = {-1.0e-6, 0.0, 1.0e-6};
    return s;
  }
  std::vector<Eigen::Vector3d> motions{{70e-9, -40e-9, 50e-9}, {-30e-9, -60e-9, -80e-9}, {50e-9, 80e-9, -20e-9}};
};

/// Central-difference check of grad_loss on `count` parameters with sizeable gradients.
void check_gradient(Parameterization& p, const CrbObjective& obj, std::span<const Eigen::Vector3d> motions,
                    double step, std::uint64_t seed, int count = 10) {
  Eigen::VectorXd g;
  grad_loss(p, obj, motions, g);
  const Eigen::VectorXd theta = p.parameters();
  const double gmax = g.cwiseAbs().maxCoeff();
  REQUIRE(gmax > 0.0);
  std::vector<Eigen::Index> candidates;
  for (Eigen::Index i = 0; i < g.size(); ++i)
    if (std::abs(g(i)) > 1e-2 * gmax) candidates.push_back(i);
  std::mt19937_64 rng(seed);
  std::shuffle(candidates.begin(), candidates.end(), rng);
  candidates.resize(std::min<std::size_t>(candidates.size(), static_cast<std::size_t>(count)));
  for (Eigen::Index i : candidates) {
    Eigen::VectorXd tp = theta, tm = theta;
    tp(i) += step;
    tm(i) -= step;
    p.set_parameters(tp);
    const double lp = loss_value(p, obj, motions);
    p.set_parameters(tm);
    const double lm = loss_value(p, obj, motions);
    const double fd = (lp - lm) / (2 * step);
    CHECK_MESSAGE(testutil::rel_err(g(i), fd) < 1e-3, p.name() << " parameter " << i);
  }
  p.set_parameters(theta);
}

}  // namespace

TEST_SUITE("param") {
  TEST_CASE("zero pixel-wise phase renders the open aperture") {
    Fixture f;
    PixelWiseParams p(f.model.pupil_ptr(), MaskKind::Phase);
    p.init(1);
    const Mask m = render_mask(p);
    CHECK(m.kind == MaskKind::Phase);
    CHECK(m.values.isZero(0.0));
    const CrbObjective obj(f.model, f.spec());
    const Field open = pupil_field(open_aperture(f.model.pupil()), f.model.pupil());
    CHECK(loss_value(p, obj, f.motions) == obj.value(open, f.motions));
  }

  TEST_CASE("a single defocus coefficient renders the defocus polynomial") {
    Fixture f;
    ZernikeParams z(f.model.pupil_ptr());
    CHECK(z.parameters().size() == 55);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(55);
    c(3) = 0.7;
    z.set_parameters(c);
    const Eigen::VectorXd v = z.render_support();
    const auto& g = f.model.pupil();
    double worst = 0.0;
    for (Eigen::Index k = 0; k < g.support_count(); ++k) {
      const double r2 = g.support_coords.col(k).squaredNorm();
      worst = std::max(worst, std::abs(v(k) - 0.7 * std::sqrt(3.0) * (2.0 * r2 - 1.0)));
    }
    CHECK(worst < 1e-10);
    CHECK_THROWS_AS(z.set_parameters(Eigen::VectorXd::Zero(54)), ConfigError);
  }

  TEST_CASE("Noll indices follow the standard ordering") {
    CHECK(noll_to_nm(1).n == 0);
    CHECK(noll_to_nm(2).m == 1);
    CHECK(noll_to_nm(3).m == -1);
    CHECK(noll_to_nm(4).n == 2);
    CHECK(noll_to_nm(4).m == 0);
    CHECK(noll_to_nm(5).m == -2);
    CHECK(noll_to_nm(6).m == 2);
    CHECK(noll_to_nm(11).n == 4);
    CHECK(noll_to_nm(11).m == 0);
    CHECK(noll_to_nm(55).n == 9);
  }

  TEST_CASE("Zernike terms are orthonormal over the sampled disk") {
    OpticalConfig cfg;
    cfg.grid = 256;
    const PupilGrid g = make_pupil_grid(cfg);
    const Eigen::MatrixXd b = zernike_basis(g, 15);
    const Eigen::MatrixXd gram = b.transpose() * b / static_cast<double>(g.support_count());
    CHECK((gram - Eigen::MatrixXd::Identity(15, 15)).cwiseAbs().maxCoeff() < 0.05);
  }

  TEST_CASE("an untrained amplitude net with zero output layer transmits one half") {
    Fixture f;
    NeuralParams p(f.model.pupil_ptr(), MaskKind::Amplitude);
    p.init(3);
    p.net().weights().back().setZero();
    p.net().biases().back().setZero();
    const Mask m = render_mask(p);
    CHECK(m.kind == MaskKind::Amplitude);
    const Eigen::VectorXd v = f.model.pupil().gather(m.values);
    CHECK((v.array() - 0.5).abs().maxCoeff() == 0.0);
    // Off the pupil the mask is zero.
    CHECK(((1.0 - f.model.pupil().support) * m.values).abs().maxCoeff() == 0.0);
  }

  TEST_CASE("amplitude outputs stay inside (0, 1)") {
    Fixture f;
    NeuralParams p(f.model.pupil_ptr(), MaskKind::Amplitude);
    p.init(9);
    const Eigen::VectorXd v = p.render_support();
    CHECK((v.array() > 0.0).all());
    CHECK((v.array() < 1.0).all());
  }

  TEST_CASE("initialization is deterministic in the seed") {
    Fixture f;
    for (auto mk : {MaskKind::Phase, MaskKind::Amplitude}) {
      NeuralParams a(f.model.pupil_ptr(), mk), b(f.model.pupil_ptr(), mk), c(f.model.pupil_ptr(), mk);
      a.init(42);
      b.init(42);
      c.init(43);
      CHECK(a.parameters() == b.parameters());
      CHECK(a.parameters() != c.parameters());
    }
  }

  TEST_CASE("sinusoidal init keeps outputs within a few radians") {
    NeuralMaskNet net(Activation::Sinusoidal);
    net.init(7);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::Matrix2Xd x(2, 10000);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = u(rng);
    const Eigen::VectorXd y = net.forward(x);
    CHECK(y.allFinite());
    CHECK(y.cwiseAbs().maxCoeff() <= 3.0);
    CHECK(net.parameter_count() == 2 * 128 + 128 + 2 * (128 * 128 + 128) + 128 + 1);
  }

  TEST_CASE("reverse-mode gradients match finite differences for every parameterization") {
    Fixture f;
    const CrbObjective obj(f.model, f.spec());
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 0.5);

    PixelWiseParams pp(f.model.pupil_ptr(), MaskKind::Phase);
    Eigen::VectorXd v(pp.parameters().size());
    for (auto& x : v) x = n(rng);
    pp.set_parameters(v);
    check_gradient(pp, obj, f.motions, 1e-5, 1);

    PixelWiseParams pa(f.model.pupil_ptr(), MaskKind::Amplitude);
    for (auto& x : v) x = n(rng);
    pa.set_parameters(v);
    check_gradient(pa, obj, f.motions, 1e-5, 2);

    ZernikeParams z(f.model.pupil_ptr());
    Eigen::VectorXd c(55);
    for (auto& x : c) x = 0.3 * n(rng);
    z.set_parameters(c);
    check_gradient(z, obj, f.motions, 1e-6, 3);

    NeuralParams np(f.model.pupil_ptr(), MaskKind::Phase);
    np.init(11);
    check_gradient(np, obj, f.motions, 1e-6, 4);

    NeuralParams na(f.model.pupil_ptr(), MaskKind::Amplitude);
    na.init(12);
    check_gradient(na, obj, f.motions, 1e-5, 5);
  }

  TEST_CASE("a Zernike mask reproduced pixel by pixel gives the same loss") {
    Fixture f;
    const CrbObjective obj(f.model, f.spec());
    ZernikeParams z(f.model.pupil_ptr());
    Eigen::VectorXd c = Eigen::VectorXd::Zero(55);
    c(4) = 0.8;
    c(10) = -0.5;
    c(20) = 0.3;
    z.set_parameters(c);
    PixelWiseParams p(f.model.pupil_ptr(), MaskKind::Phase);
    p.set_parameters(z.render_support());
    CHECK((render_mask(z).values - render_mask(p).values).abs().maxCoeff() < 1e-10);
    CHECK(testutil::rel_err(loss_value(z, obj, f.motions), loss_value(p, obj, f.motions)) < 1e-9);
  }

  TEST_CASE("adding 2 pi to every phase sample leaves the loss unchanged") {
    Fixture f;
    const CrbObjective obj(f.model, f.spec());
    PixelWiseParams p(f.model.pupil_ptr(), MaskKind::Phase);
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::VectorXd v(p.parameters().size());
    for (auto& x : v) x = n(rng);
    p.set_parameters(v);
    const double a = loss_value(p, obj, f.motions);
    p.set_parameters(v.array() + 2.0 * std::numbers::pi);
    CHECK(testutil::rel_err(a, loss_value(p, obj, f.motions)) < 1e-10);
  }

  TEST_CASE("binarization thresholds amplitude at one half") {
    Mask m{MaskKind::Amplitude, Eigen::ArrayXXd(1, 4)};
    m.values << 0.1, 0.5, 0.49, 0.9;
    const Mask b = binarize(m);
    CHECK(b.values(0, 0) == 0.0);
    CHECK(b.values(0, 1) == 1.0);
    CHECK(b.values(0, 2) == 0.0);
    CHECK(b.values(0, 3) == 1.0);
    CHECK_THROWS_AS(binarize(Mask{MaskKind::Phase, m.values}), ConfigError);
  }

  TEST_CASE("parameters serialize with a type tag") {
    Fixture f;
    NeuralParams p(f.model.pupil_ptr(), MaskKind::Phase);
    p.init(1);
    const auto path = std::filesystem::temp_directory_path() / "codedevent_params.ceo1";
    write_parameters(path, p);
    const Eigen::ArrayXXd back = read_ceo1(path);
    CHECK(back.size() == p.parameters().size());
    CHECK((back.reshaped() - p.parameters().array()).abs().maxCoeff() < 1e-6);
    CHECK(read_metadata(path).at("type") == "neural_phase");
    std::filesystem::remove(path);
    std::filesystem::remove(metadata_path(path));
  }

  TEST_CASE("parameterization names parse") {
    CHECK(parse_param_kind("pixel") == ParamKind::PixelWise);
    CHECK(parse_param_kind("zernike") == ParamKind::Zernike);
    CHECK(parse_mask_kind("amplitude") == MaskKind::Amplitude);
    CHECK_THROWS_AS(parse_param_kind("cnn"), ConfigError);
    Fixture f;
    CHECK_THROWS_AS(make_parameterization(ParamKind::Zernike, MaskKind::Amplitude, f.model.pupil_ptr()), ConfigError);
  }
}

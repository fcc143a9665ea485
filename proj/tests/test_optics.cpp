#include <doctest.h>

#include <filesystem>
#include <numbers>
#include <random>

#include "codedevent/grid_io.hpp"
#include "codedevent/optics.hpp"
#include "helpers.hpp"

using namespace codedevent;

namespace {

Mask random_phase(const PupilGrid& g, std::mt19937_64& rng, double scale = 2.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::VectorXd v(g.support_count());
  for (auto& x : v) x = n(rng);
  return Mask{MaskKind::Phase, g.scatter(v)};
}

}  // namespace

TEST_SUITE("optics") {
  TEST_CASE("default sampling puts the pupil at 2x oversampling") {
    OpticalConfig c;
    CHECK(c.pupil_radius_samples() == doctest::Approx(c.grid / 4.0).epsilon(1e-3));
    CHECK_NOTHROW(c.validate());
    c.pixel_pitch = 49.58e-6;  // undersampled: the pupil would overflow grid/4
    CHECK_THROWS_AS(c.validate(), ConfigError);
    OpticalConfig d;
    d.grid = 100;
    CHECK_THROWS_AS(d.validate(), ConfigError);
  }

  TEST_CASE("phase-only masks conserve the photon budget") {
    const auto cfg = testutil::small_config();
    const PsfModel model(cfg);
    std::mt19937_64 rng(3);
    const double expected = cfg.signal_photons * (1.0 - cfg.background_fraction);
    for (double z : {-1.5e-6, 0.0, 0.7e-6}) {
      const Mask m = random_phase(model.pupil(), rng);
      const PsfEval e = compute_psf(cfg, model.pupil(), m, Eigen::Vector3d(0, 0, z));
      CHECK(e.h.sum() == doctest::Approx(expected).epsilon(1e-10));
      CHECK((e.h >= 0.0).all());
    }
  }

  TEST_CASE("amplitude transmittance scales the signal by the mean of A^2") {
    const auto cfg = testutil::small_config();
    const PsfModel model(cfg);
    Mask m{MaskKind::Amplitude, 0.5 * model.pupil().support};
    const PsfEval e = compute_psf(cfg, model.pupil(), m, Eigen::Vector3d::Zero());
    CHECK(e.h.sum() == doctest::Approx(0.25 * cfg.signal_photons * (1.0 - cfg.background_fraction)).epsilon(1e-10));
    Mask bad{MaskKind::Amplitude, 1.5 * model.pupil().support};
    CHECK_THROWS_AS(pupil_field(bad, model.pupil()), ConfigError);
  }

  TEST_CASE("open aperture PSF is symmetric in defocus sign") {
    const auto cfg = testutil::small_config();
    const PsfModel model(cfg);
    const Mask open = open_aperture(model.pupil());
    const Image a = compute_psf(cfg, model.pupil(), open, Eigen::Vector3d(0, 0, 0.8e-6)).h;
    const Image b = compute_psf(cfg, model.pupil(), open, Eigen::Vector3d(0, 0, -0.8e-6)).h;
    CHECK((a - b).abs().maxCoeff() <= 1e-10 * a.maxCoeff());
    // In focus the peak sits at the image centre.
    const Image f = compute_psf(cfg, model.pupil(), open, Eigen::Vector3d::Zero()).h;
    Eigen::Index r = 0, c = 0;
    f.maxCoeff(&r, &c);
    CHECK(r == cfg.grid / 2);
    CHECK(c == cfg.grid / 2);
  }

  TEST_CASE("a whole-pixel lateral move shifts the image by one pixel") {
    const auto cfg = testutil::small_config();
    const PsfModel model(cfg);
    std::mt19937_64 rng(11);
    const Mask m = random_phase(model.pupil(), rng, 0.5);
    const double px = cfg.object_pixel();
    const Image h0 = compute_psf(cfg, model.pupil(), m, Eigen::Vector3d(0, 0, 0.3e-6)).h;
    const Image hx = compute_psf(cfg, model.pupil(), m, Eigen::Vector3d(px, 0, 0.3e-6)).h;
    const Image hy = compute_psf(cfg, model.pupil(), m, Eigen::Vector3d(0, 2 * px, 0.3e-6)).h;
    const int n = cfg.grid;
    double ex = 0.0, ey = 0.0;
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        ex = std::max(ex, std::abs(hx(r, c) - h0(r, (c - 1 + n) % n)));
        ey = std::max(ey, std::abs(hy(r, c) - h0((r - 2 + n) % n, c)));
      }
    }
    CHECK(ex <= 1e-9 * h0.maxCoeff());
    CHECK(ey <= 1e-9 * h0.maxCoeff());
  }

  TEST_CASE("analytic position derivatives match central differences") {
    const auto cfg = testutil::small_config();
    const PsfModel model(cfg);
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> lat(-1e-6, 1e-6), ax(-1.5e-6, 1.5e-6);
    const double step = 1e-10;
    for (int k = 0; k < 20; ++k) {
      const Mask m = random_phase(model.pupil(), rng, 1.0);
      const Field p = pupil_field(m, model.pupil());
      const Eigen::Vector3d pos(lat(rng), lat(rng), ax(rng));
      const PsfEval e = model.evaluate(p, pos, true);
      const Image* an[3] = {&e.dh_dx, &e.dh_dy, &e.dh_dz};
      for (int a = 0; a < 3; ++a) {
        Eigen::Vector3d d = Eigen::Vector3d::Zero();
        d(a) = step;
        const Image fd = (model.evaluate(p, pos + d, false).h - model.evaluate(p, pos - d, false).h) / (2 * step);
        const double rel = (fd - *an[a]).matrix().norm() / an[a]->matrix().norm();
        CHECK(rel < 1e-4);
      }
    }
  }

  TEST_CASE("phase wrapping leaves the PSF unchanged") {
    const auto cfg = testutil::small_config();
    const PsfModel model(cfg);
    std::mt19937_64 rng(5);
    Mask m = random_phase(model.pupil(), rng);
    const Image a = compute_psf(cfg, model.pupil(), m, Eigen::Vector3d(0, 0, 0.4e-6)).h;
    m.values += 2.0 * std::numbers::pi * model.pupil().support;
    const Image b = compute_psf(cfg, model.pupil(), m, Eigen::Vector3d(0, 0, 0.4e-6)).h;
    CHECK((a - b).abs().maxCoeff() <= 1e-10 * a.maxCoeff());
  }

  TEST_CASE("defocus beyond the guard is rejected") {
    const auto cfg = testutil::small_config();
    const PsfModel model(cfg);
    const Field p = pupil_field(open_aperture(model.pupil()), model.pupil());
    CHECK_THROWS_AS(model.evaluate(p, Eigen::Vector3d(0, 0, 11e-6), false), ConfigError);
    CHECK_THROWS_AS(model.evaluate(p, Eigen::Vector3d(1e-3, 0, 0), false), ConfigError);
  }

  TEST_CASE("emitter blur preserves the sum and zero diameter is identity") {
    const auto cfg = testutil::small_config();
    const PsfModel model(cfg);
    const Image h = compute_psf(cfg, model.pupil(), open_aperture(model.pupil()), Eigen::Vector3d::Zero()).h;
    const Image b = blur_emitter(h, 300e-9, cfg);
    CHECK(b.sum() == doctest::Approx(h.sum()).epsilon(1e-10));
    CHECK(b.maxCoeff() < h.maxCoeff());
    CHECK((blur_emitter(h, 0.0, cfg) - h).abs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(EmitterBlur(cfg, -1.0), ConfigError);
  }

  TEST_CASE("psf_stack follows the requested depth order") {
    const auto cfg = testutil::small_config();
    const PsfModel model(cfg);
    const Mask open = open_aperture(model.pupil());
    const std::vector<double> z{0.5e-6, -0.2e-6, 0.0};
    const auto stack = psf_stack(model, open, z);
    REQUIRE(stack.size() == 3);
    for (std::size_t i = 0; i < z.size(); ++i) {
      const Image ref = compute_psf(cfg, model.pupil(), open, Eigen::Vector3d(0, 0, z[i])).h;
      CHECK((stack[i] - ref).abs().maxCoeff() == 0.0);
    }
  }

  TEST_CASE("CEO1 files round-trip at float32 precision with metadata") {
    const auto path = std::filesystem::temp_directory_path() / "codedevent_roundtrip.ceo1";
    Eigen::ArrayXXd a(3, 5);
    for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = 0.1 * static_cast<double>(i) - 0.7;
    write_ceo1(path, a);
    write_metadata(path, {{"kind", "phase"}, {"z_m", "1e-06"}});
    const Eigen::ArrayXXd b = read_ceo1(path);
    REQUIRE(b.rows() == 3);
    REQUIRE(b.cols() == 5);
    CHECK((a - b).abs().maxCoeff() < 1e-6);
    const auto meta = read_metadata(path);
    CHECK(meta.at("kind") == "phase");
    CHECK(meta.at("z_m") == "1e-06");
    std::filesystem::remove(path);
    std::filesystem::remove(metadata_path(path));
    CHECK_THROWS(read_ceo1(path));
  }
}

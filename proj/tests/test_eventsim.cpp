#include <doctest.h>

#include <filesystem>
#include <random>

#include "codedevent/eventsim.hpp"
#include "codedevent/optics.hpp"
#include "helpers.hpp"

using namespace codedevent;

namespace {

std::vector<double> ramp_times(std::size_t n) {
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = 1e-3 * static_cast<double>(i);
  return t;
}

}  // namespace

TEST_SUITE("eventsim") {
  TEST_CASE("binned counts stay within one threshold of the log change") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> step(0.0, 0.3);
    for (double T : {0.05, 0.1, 0.25}) {
      EventSimConfig cfg;
      cfg.threshold = T;
      for (int trial = 0; trial < 50; ++trial) {
        std::vector<Image> frames(40, Image(1, 1));
        frames[0](0, 0) = step(rng);
        for (std::size_t j = 1; j < frames.size(); ++j) frames[j](0, 0) = frames[j - 1](0, 0) + step(rng);
        const auto t = ramp_times(frames.size());
        const auto ev = simulate_events(frames, t, cfg);
        const BinnedFrame b = bin_events(ev, 1, 1, t.front(), t.back() + 1.0);
        const double dl = frames.back()(0, 0) - frames.front()(0, 0);
        CHECK(std::abs(T * b.counts(0, 0) - dl) < T);
      }
    }
  }

  TEST_CASE("a constant video produces no events") {
    std::vector<Image> frames(5, Image::Constant(4, 3, 1.7));
    const auto ev = simulate_events(frames, ramp_times(5), EventSimConfig{});
    CHECK(ev.empty());
  }

  TEST_CASE("a single ramp emits k events of the right polarity at interpolated times") {
    std::vector<Image> frames{Image::Constant(1, 1, 0.0), Image::Constant(1, 1, 0.35)};
    EventSimConfig cfg;
    cfg.threshold = 0.1;
    const std::vector<double> t{0.0, 1.0};
    const auto up = simulate_events(frames, t, cfg);
    REQUIRE(up.size() == 3);
    for (std::size_t k = 0; k < up.size(); ++k) {
      CHECK(up[k].polarity == 1);
      CHECK(up[k].t == doctest::Approx((k + 1) * 0.1 / 0.35));
    }
    std::swap(frames[0], frames[1]);
    const auto down = simulate_events(frames, t, cfg);
    REQUIRE(down.size() == 3);
    for (const auto& e : down) CHECK(e.polarity == -1);
  }

  TEST_CASE("refractory period drops events but still moves the reference") {
    std::vector<Image> frames{Image::Constant(1, 1, 0.0), Image::Constant(1, 1, 0.55), Image::Constant(1, 1, 0.55)};
    EventSimConfig cfg;
    cfg.threshold = 0.1;
    cfg.refractory = 0.5;
    const std::vector<double> t{0.0, 1.0, 2.0};
    const auto ev = simulate_events(frames, t, cfg);
    CHECK(ev.size() == 2);  // crossings at 0.18 .. 0.91; only 0.18 and 0.73 survive
    // No further events once the signal is flat: the reference kept up.
    for (const auto& e : ev) CHECK(e.t <= 1.0);
  }

  TEST_CASE("events are sorted by time, then row, then column") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Image> frames;
    for (int j = 0; j < 6; ++j) {
      Image f(5, 4);
      for (Eigen::Index i = 0; i < f.size(); ++i) f(i) = u(rng);
      frames.push_back(f);
    }
    const auto ev = simulate_events(frames, ramp_times(6), EventSimConfig{});
    REQUIRE(!ev.empty());
    for (std::size_t i = 1; i < ev.size(); ++i) {
      const auto& a = ev[i - 1];
      const auto& b = ev[i];
      CHECK(std::tie(a.t, a.v, a.u) <= std::tie(b.t, b.v, b.u));
    }
  }

  TEST_CASE("bins are half open and count signed polarities") {
    EventStream s{{0, 0, 0.0, 1}, {0, 0, 0.5, 1}, {0, 0, 0.7, -1}, {1, 0, 1.0, 1}};
    const BinnedFrame b = bin_events(s, 1, 2, 0.0, 1.0);
    CHECK(b.counts(0, 0) == 1);
    CHECK(b.counts(0, 1) == 0);
    CHECK_THROWS_AS(bin_events(s, 1, 2, 1.0, 1.0), ConfigError);
  }

  TEST_CASE("invalid inputs are rejected") {
    std::vector<Image> one{Image::Zero(2, 2)};
    CHECK_THROWS_AS(simulate_events(one, ramp_times(1), EventSimConfig{}), ConfigError);
    std::vector<Image> two{Image::Zero(2, 2), Image::Zero(2, 2)};
    const std::vector<double> same{1.0, 1.0};
    CHECK_THROWS_AS(simulate_events(two, same, EventSimConfig{}), ConfigError);
    EventSimConfig bad;
    bad.threshold = 0.0;
    CHECK_THROWS_AS(simulate_events(two, ramp_times(2), bad), ConfigError);
    std::vector<Image> mixed{Image::Zero(2, 2), Image::Zero(3, 2)};
    CHECK_THROWS_AS(simulate_events(mixed, ramp_times(2), EventSimConfig{}), ConfigError);
    CHECK_THROWS_AS(log_intensity(Image::Constant(1, 1, -1.0), 0.0, 1.0), ConfigError);
  }

  TEST_CASE("PSF motion sequences obey the per-pixel bound") {
    const auto ocfg = testutil::small_config(32);
    const PsfModel model(ocfg);
    const Field p = pupil_field(open_aperture(model.pupil()), model.pupil());
    EventSimConfig cfg;
    std::vector<Image> frames;
    for (int j = 0; j <= 16; ++j) {
      const Eigen::Vector3d pos(j * 20e-9, -j * 10e-9, 0.2e-6 + j * 15e-9);
      frames.push_back(log_intensity(model.evaluate(p, pos, false).h, model.beta(), 1e-3));
    }
    const auto t = ramp_times(frames.size());
    const BinnedFrame b = bin_events(simulate_events(frames, t, cfg), 32, 32, 0.0, 1.0);
    const Image dl = frames.back() - frames.front();
    CHECK((cfg.threshold * b.counts.cast<double>() - dl).abs().maxCoeff() < cfg.threshold);
    CHECK((b.counts != 0).any());
  }

  TEST_CASE("log difference matches the two-frame definition") {
    Image a = Image::Constant(2, 2, 3.0), b = Image::Constant(2, 2, 5.0);
    const Image d = log_diff_measurement(b, a, 1.0);
    CHECK(d(0, 0) == doctest::Approx(std::log(6.0 / 4.0)));
  }

  TEST_CASE("event CSV round-trips exactly") {
    const auto path = std::filesystem::temp_directory_path() / "codedevent_events.csv";
    EventStream s{{3, 1, 0.000123456789012345, 1}, {0, 2, 0.5, -1}};
    write_events_csv(path, s);
    CHECK(read_events_csv(path) == s);
    std::filesystem::remove(path);
  }
}

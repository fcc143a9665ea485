#include "codedevent/eventsim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <tuple>

#include "codedevent/config.hpp"

namespace codedevent {

Image log_intensity(const Image& frame, double beta, double floor) {
  if ((frame < 0.0).any()) throw ConfigError("log_intensity: negative pixel values");
  if (!(floor > 0.0) && ((frame + beta) <= 0.0).any()) {
    throw ConfigError("log_intensity: zero intensity with a non-positive floor");
  }
  return (frame + beta).max(floor).log();
}

EventStream simulate_events(std::span<const Image> log_frames, std::span<const double> timestamps,
                            const EventSimConfig& cfg) {
  if (log_frames.size() < 2) throw ConfigError("simulate_events: need at least two frames");
  if (timestamps.size() != log_frames.size()) throw ConfigError("simulate_events: one timestamp per frame");
  if (!(cfg.threshold > 0.0)) throw ConfigError("simulate_events: threshold must be positive");
  if (cfg.refractory < 0.0) throw ConfigError("simulate_events: refractory must be >= 0");
  for (std::size_t i = 1; i < timestamps.size(); ++i) {
    if (!(timestamps[i] > timestamps[i - 1])) throw ConfigError("simulate_events: timestamps must increase");
  }
  const Eigen::Index rows = log_frames[0].rows();
  const Eigen::Index cols = log_frames[0].cols();
  for (const auto& f : log_frames) {
    if (f.rows() != rows || f.cols() != cols) throw ConfigError("simulate_events: frame shape mismatch");
  }

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<Image> frames(log_frames.begin(), log_frames.end());
  if (cfg.log_noise_sigma > 0.0) {
    for (auto& f : frames) {
      for (Eigen::Index i = 0; i < f.size(); ++i) f(i) += cfg.log_noise_sigma * unit(rng);
    }
  }

  const double T = cfg.threshold;
  EventStream out;
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      const double base = frames[0](r, c);
      long level = 0;  // L_ref = base + level * T
      double last_t = -INFINITY;
      for (std::size_t j = 0; j + 1 < frames.size(); ++j) {
        const double la = frames[j](r, c);
        const double lb = frames[j + 1](r, c);
        if (la == lb) continue;
        const double ta = timestamps[j];
        const double tb = timestamps[j + 1];
        const int dir = lb > la ? 1 : -1;
        while (true) {
          const double next = base + static_cast<double>(level + dir) * T;
          if ((dir > 0 && lb < next) || (dir < 0 && lb > next)) break;
          level += dir;
          const double frac = std::clamp((next - la) / (lb - la), 0.0, 1.0);
          const double t = ta + frac * (tb - ta);
          if (t - last_t >= cfg.refractory) {
            out.push_back(EventRecord{static_cast<int>(c), static_cast<int>(r), t, dir});
            last_t = t;
          }
        }
      }
    }
  }
  if (cfg.timestamp_jitter > 0.0) {
    for (auto& e : out) e.t += cfg.timestamp_jitter * unit(rng);
  }
  std::sort(out.begin(), out.end(), [](const EventRecord& a, const EventRecord& b) {
    return std::tie(a.t, a.v, a.u, a.polarity) < std::tie(b.t, b.v, b.u, b.polarity);
  });
  return out;
}

BinnedFrame bin_events(const EventStream& stream, int rows, int cols, double t_start, double t_end) {
  if (!(t_start < t_end)) throw ConfigError("bin_events: need t_start < t_end");
  BinnedFrame f;
  f.counts = Eigen::ArrayXXi::Zero(rows, cols);
  f.t_start = t_start;
  f.t_end = t_end;
  for (const auto& e : stream) {
    if (e.t < t_start || e.t >= t_end) continue;
    if (e.u < 0 || e.u >= cols || e.v < 0 || e.v >= rows) throw ConfigError("bin_events: event outside frame");
    f.counts(e.v, e.u) += e.polarity;
  }
  return f;
}

Image log_diff_measurement(const Image& current, const Image& previous, double beta) {
  if (current.rows() != previous.rows() || current.cols() != previous.cols()) {
    throw ConfigError("log_diff_measurement: shape mismatch");
  }
  if (((current + beta) <= 0.0).any() || ((previous + beta) <= 0.0).any()) {
    throw ConfigError("log_diff_measurement: non-positive intensity");
  }
  return (current + beta).log() - (previous + beta).log();
}

void write_events_csv(const std::filesystem::path& path, const EventStream& stream) {
  std::ofstream os(path);
  if (!os) throw ConfigError("events: cannot write " + path.string());
  os.precision(17);
  os << "t,u,v,p\n";
  for (const auto& e : stream) os << e.t << ',' << e.u << ',' << e.v << ',' << e.polarity << '\n';
}

EventStream read_events_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("events: cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != "t,u,v,p") throw ConfigError("events: missing header t,u,v,p");
  EventStream out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    EventRecord e;
    char c1 = 0, c2 = 0, c3 = 0;
    if (!(ls >> e.t >> c1 >> e.u >> c2 >> e.v >> c3 >> e.polarity) || c1 != ',' || c2 != ',' || c3 != ',' ||
        (e.polarity != 1 && e.polarity != -1)) {
      throw ConfigError("events: malformed row: " + line);
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace codedevent

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "codedevent/fft.hpp"

namespace codedevent {

/// One asynchronous event. u is the column, v the row.
struct EventRecord {
  int u = 0;
  int v = 0;
  double t = 0.0;
  int polarity = 1;

  bool operator==(const EventRecord&) const = default;
};

using EventStream = std::vector<EventRecord>;

/// Signed per-pixel event sum over [t_start, t_end).
struct BinnedFrame {
  Eigen::ArrayXXi counts;
  double t_start = 0.0;
  double t_end = 0.0;
  int n_subframes = 0;
};

struct EventSimConfig {
  double threshold = 0.1;   ///< natural-log units
  double refractory = 0.0;  ///< seconds; 0 is the idealized sensor
  /// Optional realism knobs, off in the idealized mode.
  double log_noise_sigma = 0.0;
  double timestamp_jitter = 0.0;
  std::uint64_t seed = 0;
};

/// log(max(frame + beta, floor)) elementwise.
Image log_intensity(const Image& frame, double beta, double floor);

/// Idealized per-pixel reference tracking. Each pixel keeps a reference
/// level L_ref (initialized from the first frame). Whenever the log
/// intensity reaches L_ref + k T (or L_ref - k T) during a frame transition,
/// k events are emitted at linearly interpolated times and L_ref moves to
/// the last crossed level. Events inside the refractory window are dropped
/// but the reference still advances. Output is sorted by (t, v, u).
EventStream simulate_events(std::span<const Image> log_frames, std::span<const double> timestamps,
                            const EventSimConfig& cfg);

BinnedFrame bin_events(const EventStream& stream, int rows, int cols, double t_start, double t_end);

/// log(I_t + beta) - log(I_prev + beta).
Image log_diff_measurement(const Image& current, const Image& previous, double beta);

void write_events_csv(const std::filesystem::path& path, const EventStream& stream);
EventStream read_events_csv(const std::filesystem::path& path);

}  // namespace codedevent

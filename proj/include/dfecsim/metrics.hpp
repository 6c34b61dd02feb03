#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "dfecsim/sim_time.hpp"

namespace dfecsim {

// Per-connection counters exported to the workload and runner layers.
struct ConnCounters {
  std::uint64_t data_sent = 0;        // data segments transmitted, incl. rtx
  std::uint64_t data_first_tx = 0;
  std::uint64_t bytes_first_tx = 0;
  std::uint64_t retransmitted = 0;
  std::uint64_t fast_retransmits = 0;
  std::uint64_t rtos = 0;

  std::uint64_t fec_sent = 0;
  std::uint64_t fec_recovered = 0;    // sender view, from feedback
  std::uint64_t fec_failed = 0;
  std::uint64_t fec_unused = 0;
  std::uint64_t fec_lost_timeouts = 0;
  std::uint64_t fec_suppressed = 0;   // block fully acked before parity went out

  std::uint64_t acks_sent = 0;
  std::uint64_t dupacks = 0;
  std::uint64_t cwnd_reductions = 0;

  std::uint64_t delivered_bytes = 0;  // receiver side, in-order
  std::uint64_t recv_recovered = 0;   // receiver-side successful recoveries
  std::uint64_t dup_data_rcvd = 0;
  std::uint64_t protocol_errors = 0;
  std::uint64_t integrity_faults = 0;
  std::uint64_t cwnd_violations = 0;

  double cwnd_sum = 0.0;
  std::uint64_t cwnd_samples = 0;
  double mean_cwnd() const { return cwnd_samples ? cwnd_sum / cwnd_samples : 0.0; }
};

// Tracks an out-of-order queue occupancy: current, max, and time average.
class OfoTracker {
 public:
  void update(SimTime now, std::uint64_t bytes) {
    byte_seconds_ += to_seconds(now - last_change_) * static_cast<double>(bytes_now_);
    last_change_ = now;
    bytes_now_ = bytes;
    max_bytes_ = std::max(max_bytes_, bytes);
  }

  std::uint64_t bytes_now() const { return bytes_now_; }
  std::uint64_t max_bytes() const { return max_bytes_; }

  double time_average(SimTime end) const {
    double total = byte_seconds_ + to_seconds(end - last_change_) * static_cast<double>(bytes_now_);
    double span = to_seconds(end);
    return span > 0 ? total / span : 0.0;
  }

 private:
  std::uint64_t bytes_now_ = 0;
  std::uint64_t max_bytes_ = 0;
  double byte_seconds_ = 0.0;
  SimTime last_change_ = 0;
};

// Long-format time series sink, enabled per run.
class SeriesRecorder {
 public:
  struct Point {
    SimTime t;
    std::string metric;
    double value;
  };

  explicit SeriesRecorder(bool enabled = false) : enabled_(enabled) {}

  bool enabled() const { return enabled_; }

  void record(SimTime t, std::string metric, double value) {
    if (enabled_) points_.push_back({t, std::move(metric), value});
  }

  const std::vector<Point>& points() const { return points_; }

 private:
  bool enabled_;
  std::vector<Point> points_;
};

}  // namespace dfecsim

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dfecsim/event_queue.hpp"
#include "dfecsim/metrics.hpp"
#include "dfecsim/sim_time.hpp"

namespace dfecsim {

// Web download profile: object count and exact total transfer size. Per-object
// sizes come from a deterministic log-normal split seeded by the profile name
// and renormalized to the exact total, so every arm and seed downloads the
// same byte layout.
struct WebProfile {
  std::string name;
  int objects = 1;
  std::uint64_t total_bytes = 0;

  static WebProfile google() { return {"google", 6, 1080 * 1024}; }
  static WebProfile youtube() { return {"youtube", 26, 3204 * 1024}; }
  static WebProfile espn() { return {"espn", 111, 6072 * 1024}; }
  static WebProfile by_name(const std::string& n);

  std::vector<std::uint64_t> object_sizes() const;
};

// Non-adaptive live video: fixed fps, fixed mean bitrate, repeating
// 12-frame group I,B,B,P,B,B,P,B,B,P,B,B with size weights I:P:B = 6:3:1.
// A frame counts as full only when every byte arrives by its play deadline.
struct VideoProfile {
  double duration_s = 60.0;
  double fps = 25.0;
  double bitrate_bps = 3.4e6;
  double startup_delay_s = 1.0;

  struct Frame {
    double t_send_s = 0;
    std::uint64_t bytes = 0;
    char type = 'I';
  };
  std::vector<Frame> frames() const;
  std::uint64_t total_bytes() const;
};

struct RunMetrics {
  std::string arm;
  std::uint64_t seed = 0;

  double completion_s = -1.0;  // negative: never completed
  double handshake_s = 0.0;
  std::uint64_t app_bytes = 0;
  double goodput_bps = 0.0;
  double fec_overhead = 0.0;
  bool byte_integrity_ok = true;
  bool aborted = false;

  double full_frame_ratio = -1.0;  // video only
  std::uint64_t frames_total = 0;
  std::uint64_t frames_full = 0;

  std::uint64_t data_sent = 0;
  std::uint64_t data_first_tx = 0;
  std::uint64_t retransmitted = 0;
  std::uint64_t fast_retransmits = 0;
  std::uint64_t rtos = 0;
  std::uint64_t fec_sent = 0;
  std::uint64_t fec_recovered = 0;
  std::uint64_t fec_failed = 0;
  std::uint64_t fec_unused = 0;
  std::uint64_t fec_lost_timeouts = 0;
  std::uint64_t cwnd_violations = 0;
  std::uint64_t integrity_faults = 0;
  std::uint64_t protocol_errors = 0;
  std::uint64_t model_drops = 0;
  std::uint64_t queue_drops = 0;

  std::vector<double> subflow_util;
  std::vector<double> subflow_overhead;
  std::vector<double> subflow_mean_cwnd;
  std::vector<double> subflow_ofo_max;
  std::vector<double> subflow_ofo_avg;
  double conn_ofo_max = 0.0;
  double conn_ofo_avg = 0.0;

  std::vector<std::pair<double, double>> ratio_updates;  // (seconds, ratio)
  double ratio_time_avg_last_half = 0.0;

  // Fairness pair runs.
  double fair_goodput_self = 0.0;
  double fair_goodput_other = 0.0;
};

// The connection under test, as the workload drivers see it. Built by the
// runner for each protocol variant; single-path and multipath behave alike
// behind this surface.
class FlowHarness {
 public:
  using DeliveryWatch = std::function<void(std::uint64_t conn_seq, std::uint64_t len, SimTime now)>;

  virtual ~FlowHarness() = default;

  virtual EventQueue& eq() = 0;
  virtual void start() = 0;  // kick off handshakes
  virtual void write(std::uint64_t bytes) = 0;
  virtual void close_write() = 0;
  virtual bool sender_established() const = 0;
  virtual SimTime sender_established_at() const = 0;
  virtual void set_on_sender_established(std::function<void()> fn) = 0;
  virtual bool aborted() const = 0;
  virtual std::uint64_t delivered_bytes() const = 0;
  virtual bool integrity_ok() const = 0;
  virtual void set_delivery_watch(DeliveryWatch watch) = 0;
  virtual SimTime base_rtt() const = 0;
  virtual RunMetrics collect(SimTime end) const = 0;
};

// Drives a size-bounded transfer; completion is the in-order delivery of the
// last byte, measured from scenario start (handshake included).
RunMetrics run_bulk(FlowHarness& flow, std::uint64_t size_bytes);

// Time-bounded greedy transfer; reports goodput instead of completion.
RunMetrics run_bulk_duration(FlowHarness& flow, double duration_s, SimTime start_at = 0);

// Single multiplexed connection carrying all objects; one request round trip
// precedes the first byte.
RunMetrics run_web(FlowHarness& flow, const WebProfile& profile);

// Paced frames against play deadlines.
RunMetrics run_video(FlowHarness& flow, const VideoProfile& profile);

struct CompareStats {
  std::vector<double> per_seed_ratio;
  double mean_ratio = 0.0;
  double median_ratio = 0.0;
  double ci95_lo = 0.0;
  double ci95_hi = 0.0;
  double mean_overhead_a = 0.0;
  double mean_overhead_b = 0.0;
};

// Per-seed metric ratios arm_a/arm_b over a shared seed set. Throws
// std::invalid_argument when the seed sets differ.
CompareStats compare(const std::vector<RunMetrics>& arm_a, const std::vector<RunMetrics>& arm_b,
                     const std::function<double(const RunMetrics&)>& metric);

double completion_metric(const RunMetrics& m);
double full_frame_metric(const RunMetrics& m);

}  // namespace dfecsim

#include "dfecsim/workloads.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dfecsim/rng.hpp"

namespace dfecsim {

namespace {

constexpr SimTime kRunHorizon = secs(7200);

}  // namespace

WebProfile WebProfile::by_name(const std::string& n) {
  if (n == "google") return google();
  if (n == "youtube") return youtube();
  if (n == "espn") return espn();
  throw std::invalid_argument("unknown web profile: " + n);
}

std::vector<std::uint64_t> WebProfile::object_sizes() const {
  if (objects <= 0 || total_bytes == 0) {
    throw std::invalid_argument("web profile needs objects >= 1 and a positive total");
  }
  // Log-normal weights (sigma = 1) from a profile-keyed stream, renormalized
  // to hit total_bytes exactly.
  RngStream rng(0x5eb, "web." + name);
  std::vector<double> weights(static_cast<std::size_t>(objects));
  for (double& w : weights) {
    double u1 = rng.uniform();
    double u2 = rng.uniform();
    double z = std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(6.283185307179586 * u2);
    w = std::exp(z);
  }
  double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);

  std::vector<std::uint64_t> sizes(weights.size());
  std::uint64_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    sizes[i] = std::max<std::uint64_t>(
        1, static_cast<std::uint64_t>(weights[i] / wsum * static_cast<double>(total_bytes)));
    assigned += sizes[i];
  }
  // Push the rounding remainder into the largest object.
  std::size_t largest = static_cast<std::size_t>(
      std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  if (assigned > total_bytes) {
    sizes[largest] -= assigned - total_bytes;
  } else {
    sizes[largest] += total_bytes - assigned;
  }
  return sizes;
}

std::vector<VideoProfile::Frame> VideoProfile::frames() const {
  static constexpr char kGop[12] = {'I', 'B', 'B', 'P', 'B', 'B', 'P', 'B', 'B', 'P', 'B', 'B'};
  static constexpr int kWeight[12] = {6, 1, 1, 3, 1, 1, 3, 1, 1, 3, 1, 1};
  static constexpr int kGroupWeight = 23;

  const auto n_frames = static_cast<std::size_t>(std::llround(duration_s * fps));
  const double mean_frame_bytes = bitrate_bps / (8.0 * fps);
  const double group_bytes = mean_frame_bytes * 12.0;

  std::vector<Frame> out;
  out.reserve(n_frames);
  for (std::size_t i = 0; i < n_frames; ++i) {
    int slot = static_cast<int>(i % 12);
    // Largest-remainder split keeps every 12-frame group byte-exact.
    double before = group_bytes * std::accumulate(kWeight, kWeight + slot, 0) / kGroupWeight;
    double after = group_bytes * std::accumulate(kWeight, kWeight + slot + 1, 0) / kGroupWeight;
    Frame f;
    f.t_send_s = static_cast<double>(i) / fps;
    f.bytes = static_cast<std::uint64_t>(std::llround(after) - std::llround(before));
    f.type = kGop[slot];
    out.push_back(f);
  }
  return out;
}

std::uint64_t VideoProfile::total_bytes() const {
  std::uint64_t total = 0;
  for (const Frame& f : frames()) total += f.bytes;
  return total;
}

// ---------------------------------------------------------------------------
// Drivers

RunMetrics run_bulk(FlowHarness& flow, std::uint64_t size_bytes) {
  bool done = false;
  SimTime done_at = 0;

  flow.set_delivery_watch([&](std::uint64_t, std::uint64_t, SimTime now) {
    if (!done && flow.delivered_bytes() >= size_bytes) {
      done = true;
      done_at = now;
    }
  });
  flow.set_on_sender_established([&flow, size_bytes, &done, &done_at] {
    if (size_bytes == 0) {
      done = true;
      done_at = flow.eq().now();
      return;
    }
    flow.write(size_bytes);
    flow.close_write();
  });

  flow.start();
  flow.eq().run_while([&] { return !done && !flow.aborted(); }, kRunHorizon);
  // Let in-flight acknowledgements and feedback settle so counters are whole.
  flow.eq().run_while([&] { return !flow.aborted(); }, flow.eq().now() + secs(3));

  RunMetrics m = flow.collect(flow.eq().now());
  m.app_bytes = size_bytes;
  if (done) {
    m.completion_s = to_seconds(done_at);
    if (m.completion_s > 0) {
      m.goodput_bps = static_cast<double>(size_bytes) * 8.0 / m.completion_s;
    }
  }
  return m;
}

RunMetrics run_bulk_duration(FlowHarness& flow, double duration_s, SimTime start_at) {
  flow.set_on_sender_established([&flow] {
    flow.write(1ull << 50);  // effectively unbounded
  });
  if (start_at > 0) {
    flow.eq().schedule(start_at, [&flow] { flow.start(); });
  } else {
    flow.start();
  }
  SimTime end = start_at + secs(duration_s);
  flow.eq().run_while([&] { return !flow.aborted(); }, end);

  RunMetrics m = flow.collect(end);
  m.app_bytes = flow.delivered_bytes();
  double active = to_seconds(end - start_at);
  if (active > 0) {
    m.fair_goodput_self = static_cast<double>(flow.delivered_bytes()) * 8.0 / active;
    m.goodput_bps = m.fair_goodput_self;
  }
  return m;
}

RunMetrics run_web(FlowHarness& flow, const WebProfile& profile) {
  std::vector<std::uint64_t> sizes = profile.object_sizes();
  std::uint64_t total = std::accumulate(sizes.begin(), sizes.end(), std::uint64_t{0});

  bool done = false;
  SimTime done_at = 0;
  flow.set_delivery_watch([&](std::uint64_t, std::uint64_t, SimTime now) {
    if (!done && flow.delivered_bytes() >= total) {
      done = true;
      done_at = now;
    }
  });
  // The request travels client -> server before the first response byte, so
  // the first byte reaches the client one round trip after establishment.
  flow.set_on_sender_established([&flow, total] {
    flow.eq().schedule_in(flow.base_rtt() / 2, [&flow, total] {
      flow.write(total);
      flow.close_write();
    });
  });

  flow.start();
  flow.eq().run_while([&] { return !done && !flow.aborted(); }, kRunHorizon);
  flow.eq().run_while([&] { return !flow.aborted(); }, flow.eq().now() + secs(3));

  RunMetrics m = flow.collect(flow.eq().now());
  m.app_bytes = total;
  if (done) {
    m.completion_s = to_seconds(done_at);
    if (m.completion_s > 0) m.goodput_bps = static_cast<double>(total) * 8.0 / m.completion_s;
  }
  return m;
}

RunMetrics run_video(FlowHarness& flow, const VideoProfile& profile) {
  const std::vector<VideoProfile::Frame> frames = profile.frames();
  std::vector<std::uint64_t> frame_end_bytes(frames.size());
  std::uint64_t cum = 0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    cum += frames[i].bytes;
    frame_end_bytes[i] = cum;
  }
  const std::uint64_t total = cum;

  std::vector<SimTime> completed_at(frames.size(), -1);
  std::size_t next_frame = 0;
  SimTime t0 = 0;

  flow.set_delivery_watch([&](std::uint64_t, std::uint64_t, SimTime now) {
    while (next_frame < frames.size() && flow.delivered_bytes() >= frame_end_bytes[next_frame]) {
      completed_at[next_frame] = now;
      ++next_frame;
    }
  });
  flow.set_on_sender_established([&] {
    t0 = flow.eq().now();
    for (const VideoProfile::Frame& f : frames) {
      flow.eq().schedule(t0 + secs(f.t_send_s), [&flow, bytes = f.bytes] { flow.write(bytes); });
    }
    flow.eq().schedule(t0 + secs(frames.back().t_send_s), [&flow] { flow.close_write(); });
  });

  flow.start();
  // The transport still delivers everything reliably; frames are judged
  // against their play deadlines afterwards.
  flow.eq().run_while([&] { return !flow.aborted(); }, kRunHorizon);

  RunMetrics m = flow.collect(flow.eq().now());
  m.app_bytes = total;
  m.frames_total = frames.size();
  for (std::size_t i = 0; i < frames.size(); ++i) {
    SimTime deadline = t0 + secs(profile.startup_delay_s + static_cast<double>(i) / profile.fps);
    if (completed_at[i] >= 0 && completed_at[i] <= deadline) ++m.frames_full;
  }
  m.full_frame_ratio =
      frames.empty() ? 1.0 : static_cast<double>(m.frames_full) / static_cast<double>(frames.size());
  if (flow.delivered_bytes() >= total) m.completion_s = to_seconds(flow.eq().now());
  return m;
}

// ---------------------------------------------------------------------------
// Comparison

CompareStats compare(const std::vector<RunMetrics>& arm_a, const std::vector<RunMetrics>& arm_b,
                     const std::function<double(const RunMetrics&)>& metric) {
  if (arm_a.size() != arm_b.size()) {
    throw std::invalid_argument("compare: arms have different run counts");
  }
  for (std::size_t i = 0; i < arm_a.size(); ++i) {
    if (arm_a[i].seed != arm_b[i].seed) {
      throw std::invalid_argument("compare: seed sets are misaligned");
    }
  }
  CompareStats st;
  double overhead_a = 0.0;
  double overhead_b = 0.0;
  for (std::size_t i = 0; i < arm_a.size(); ++i) {
    double a = metric(arm_a[i]);
    double b = metric(arm_b[i]);
    if (b == 0.0) throw std::invalid_argument("compare: zero denominator metric");
    st.per_seed_ratio.push_back(a / b);
    overhead_a += arm_a[i].fec_overhead;
    overhead_b += arm_b[i].fec_overhead;
  }
  const auto n = static_cast<double>(st.per_seed_ratio.size());
  st.mean_overhead_a = overhead_a / n;
  st.mean_overhead_b = overhead_b / n;

  st.mean_ratio = std::accumulate(st.per_seed_ratio.begin(), st.per_seed_ratio.end(), 0.0) / n;
  std::vector<double> sorted = st.per_seed_ratio;
  std::sort(sorted.begin(), sorted.end());
  st.median_ratio = sorted.size() % 2 == 1
                        ? sorted[sorted.size() / 2]
                        : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
  double var = 0.0;
  for (double r : st.per_seed_ratio) var += (r - st.mean_ratio) * (r - st.mean_ratio);
  double sd = st.per_seed_ratio.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  double half = 1.96 * sd / std::sqrt(n);
  st.ci95_lo = st.mean_ratio - half;
  st.ci95_hi = st.mean_ratio + half;
  return st;
}

double completion_metric(const RunMetrics& m) { return m.completion_s; }
double full_frame_metric(const RunMetrics& m) { return m.full_frame_ratio; }

}  // namespace dfecsim

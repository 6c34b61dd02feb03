#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dfecsim/event_queue.hpp"
#include "dfecsim/rng.hpp"
#include "dfecsim/topology.hpp"
#include "dfecsim/transport.hpp"

namespace dfecsim {

// Simplified synthetic cross-traffic: one greedy transport flow, one paced
// datagram stream, and on/off datagram bursts (Pareto on, exponential off)
// sized so the datagram component offers roughly `load` of link capacity.
struct BackgroundSpec {
  double load = 0.0;  // fraction of bottleneck capacity, 0 disables everything
  double paced_rate_pps = 150.0;
  double burst_rate_min_pps = 395.0;
  double burst_rate_max_pps = 995.0;
  double onoff_min_s = 1.0;
  double onoff_max_s = 5.0;
  double pareto_shape = 1.5;
  double mean_pkt_bytes = 1000.0;
  int max_flows = 64;
};

class BackgroundTraffic {
 public:
  BackgroundTraffic(EventQueue& eq, BuiltPath& path, const BackgroundSpec& spec,
                    std::uint64_t seed, const std::string& name);

  std::uint64_t datagrams_sent() const { return *datagrams_sent_; }

  // Self-scheduling on/off datagram flow; `overall_pps` is the long-run mean
  // rate including off periods. Exposed for calibration tests.
  static void spawn_onoff_flow(EventQueue& eq, std::shared_ptr<RngStream> rng, double overall_pps,
                               double mean_on_s, double mean_off_s, double pareto_shape,
                               double mean_pkt_bytes, std::function<void(std::uint32_t)> emit);

  // Steady paced datagram stream with exponential interarrivals.
  static void spawn_paced_flow(EventQueue& eq, std::shared_ptr<RngStream> rng, double rate_pps,
                               double mean_pkt_bytes, std::function<void(std::uint32_t)> emit);

 private:
  EventQueue& eq_;
  std::unique_ptr<TransportConn> greedy_src_;
  std::unique_ptr<TransportConn> greedy_dst_;
  std::uint64_t greedy_next_seq_ = 0;
  std::shared_ptr<std::uint64_t> datagrams_sent_ = std::make_shared<std::uint64_t>(0);
};

void attach_background(EventQueue& eq, Network& net, const BackgroundSpec& spec,
                       std::uint64_t seed);

}  // namespace dfecsim

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "dfecsim/event_queue.hpp"
#include "dfecsim/link.hpp"

namespace dfecsim {

class BackgroundTraffic;

// One bottleneck path of the two-bottleneck, non-shared topology: a duplex
// link with symmetric one-way delay (RTT/2 each way) and a loss model applied
// independently per direction.
struct PathSpec {
  double capacity_bps = 20e6;
  double rtt_s = 0.025;
  LossModel loss;                          // forward (data) direction
  std::optional<LossModel> reverse_loss;   // defaults to the same model
  std::uint64_t queue_bytes = 0;           // 0 = one BDP
  bool strip_fec = false;
};

struct ScenarioTopology {
  PathSpec b1;
  PathSpec b2;
  bool single_path = false;        // B1 only
  bool shared_bottleneck = false;  // competing flows share B1
};

struct BuiltPath {
  std::unique_ptr<Link> fwd;  // data sender -> receiver
  std::unique_ptr<Link> rev;
};

struct Network {
  std::vector<BuiltPath> paths;
  std::vector<std::unique_ptr<BackgroundTraffic>> background;

  Network();
  Network(Network&&) noexcept;
  Network& operator=(Network&&) noexcept;
  ~Network();
};

// Instantiates B1 (and B2 unless single_path). Loss RNG streams derive from
// (seed, path, direction) so directions draw independently.
Network build_topology(EventQueue& eq, const ScenarioTopology& topo, std::uint64_t seed);

}  // namespace dfecsim

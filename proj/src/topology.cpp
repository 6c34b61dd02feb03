#include "dfecsim/topology.hpp"

#include "dfecsim/background.hpp"

namespace dfecsim {

Network::Network() = default;
Network::Network(Network&&) noexcept = default;
Network& Network::operator=(Network&&) noexcept = default;
Network::~Network() = default;

namespace {

BuiltPath build_path(EventQueue& eq, const PathSpec& spec, std::uint64_t seed,
                     const std::string& name) {
  LinkConfig fwd;
  fwd.name = name + ".fwd";
  fwd.capacity_bps = spec.capacity_bps;
  fwd.prop_delay = secs(spec.rtt_s / 2.0);
  fwd.queue_bytes = spec.queue_bytes;
  fwd.loss = spec.loss;
  fwd.strip_fec_option = spec.strip_fec;

  LinkConfig rev = fwd;
  rev.name = name + ".rev";
  rev.loss = spec.reverse_loss.value_or(spec.loss);
  rev.strip_fec_option = false;

  BuiltPath path;
  path.fwd = std::make_unique<Link>(eq, fwd, RngStream(seed, fwd.name + ".loss"));
  path.rev = std::make_unique<Link>(eq, rev, RngStream(seed, rev.name + ".loss"));
  return path;
}

}  // namespace

Network build_topology(EventQueue& eq, const ScenarioTopology& topo, std::uint64_t seed) {
  Network net;
  net.paths.push_back(build_path(eq, topo.b1, seed, "b1"));
  if (!topo.single_path) {
    net.paths.push_back(build_path(eq, topo.b2, seed, "b2"));
  }
  return net;
}

}  // namespace dfecsim

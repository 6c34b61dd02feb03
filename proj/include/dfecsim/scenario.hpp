#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dfecsim/background.hpp"
#include "dfecsim/dfec.hpp"
#include "dfecsim/topology.hpp"
#include "dfecsim/workloads.hpp"

namespace dfecsim {

enum class Protocol : std::uint8_t { Tcp, TcpDfec, TcpIr, Mptcp, MptcpDfec };

std::string protocol_name(Protocol p);
Protocol protocol_from_name(const std::string& name);
bool protocol_is_multipath(Protocol p);
bool protocol_uses_fec(Protocol p);

struct WorkloadSpec {
  enum class Kind : std::uint8_t { Bulk, Web, Video };
  Kind kind = Kind::Bulk;
  std::uint64_t bulk_bytes = 10ull << 20;
  double bulk_duration_s = 0.0;  // > 0: time-bounded greedy transfer
  WebProfile web = WebProfile::google();
  VideoProfile video;

  std::string kind_name() const;
};

struct TransportTuning {
  std::uint32_t mss = 1448;
  double iw_segments = 10.0;
  double initial_ssthresh = 1e9;
  double cwnd_cap = 1e9;
  bool instant_cwnd_reduction = false;
  bool hystart = true;
  std::uint64_t conn_rwnd_bytes = 8ull << 20;
  bool coupled_cc = false;
};

// One runnable experiment cell. Everything a run needs is in here plus the
// seed, so (scenario, seed) fully determines the output.
struct Scenario {
  std::string name = "scenario";
  Protocol protocol = Protocol::Tcp;
  std::optional<Protocol> fairness_with;  // second flow on a shared bottleneck
  double fairness_duration_s = 30.0;
  ScenarioTopology topology;
  WorkloadSpec workload;
  DfecParams dfec;
  TransportTuning transport;
  std::vector<std::uint64_t> seeds = {1};
  double background_load = 0.0;
  bool record_series = false;
  std::string output = "out";

  void validate() const;  // throws std::invalid_argument with a field path
  std::string to_json() const;
  static Scenario from_json(const std::string& text);
};

// Sweep expansion: a base scenario, protocol arms (with optional dFEC
// overrides), and parameter axes crossed cartesianly.
struct Arm {
  std::string label;
  Protocol protocol = Protocol::Tcp;
  std::optional<double> tolerance;
  std::optional<double> delta;
  std::optional<Protocol> fairness_with;
};

struct SweepAxis {
  std::string key;  // b1_loss_pct | b2_rtt_ms | b1_rtt_ms | b2_loss_pct
  std::vector<double> values;
};

struct SweepSpec {
  Scenario base;
  std::vector<Arm> arms;
  std::vector<SweepAxis> axes;

  std::string to_json() const;
  static SweepSpec from_json(const std::string& text);
};

struct RunSpec {
  Scenario scenario;  // fully resolved
  std::string arm;
  std::string cell;   // "b1_loss_pct=3|b2_rtt_ms=100"
  std::uint64_t seed = 0;
};

void apply_axis(Scenario& s, const std::string& key, double value);
std::vector<RunSpec> expand(const SweepSpec& sweep);

// Loss model helpers shared by config parsing and presets.
LossModel loss_from_pct(double pct, const std::string& model = "iid", double ge_burst = 2.0);

}  // namespace dfecsim

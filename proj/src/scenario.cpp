#include "dfecsim/scenario.hpp"

#include <json.hpp>
#include <stdexcept>

namespace dfecsim {

using nlohmann::json;

std::string protocol_name(Protocol p) {
  switch (p) {
    case Protocol::Tcp: return "tcp";
    case Protocol::TcpDfec: return "tcp_dfec";
    case Protocol::TcpIr: return "tcp_ir";
    case Protocol::Mptcp: return "mptcp";
    case Protocol::MptcpDfec: return "mptcp_dfec";
  }
  return "tcp";
}

Protocol protocol_from_name(const std::string& name) {
  if (name == "tcp") return Protocol::Tcp;
  if (name == "tcp_dfec") return Protocol::TcpDfec;
  if (name == "tcp_ir") return Protocol::TcpIr;
  if (name == "mptcp") return Protocol::Mptcp;
  if (name == "mptcp_dfec") return Protocol::MptcpDfec;
  throw std::invalid_argument("protocol: unknown variant '" + name + "'");
}

bool protocol_is_multipath(Protocol p) {
  return p == Protocol::Mptcp || p == Protocol::MptcpDfec;
}

bool protocol_uses_fec(Protocol p) {
  return p == Protocol::TcpDfec || p == Protocol::TcpIr || p == Protocol::MptcpDfec;
}

std::string WorkloadSpec::kind_name() const {
  switch (kind) {
    case Kind::Bulk: return "bulk";
    case Kind::Web: return "web";
    case Kind::Video: return "video";
  }
  return "bulk";
}

LossModel loss_from_pct(double pct, const std::string& model, double ge_burst) {
  if (pct <= 0.0) return LossModel::none();
  if (model == "iid") return LossModel::iid(pct / 100.0);
  if (model == "ge") return LossModel::gilbert_elliot(pct / 100.0, ge_burst);
  throw std::invalid_argument("loss model: expected iid or ge, got '" + model + "'");
}

void Scenario::validate() const {
  dfec.validate();
  if (protocol_is_multipath(protocol) && topology.single_path) {
    throw std::invalid_argument("topology.single_path: multipath protocols need two links");
  }
  if (fairness_with && protocol_is_multipath(*fairness_with)) {
    throw std::invalid_argument("fairness_with: paired fairness flows must be single-path");
  }
  if (fairness_with && fairness_duration_s <= 0) {
    throw std::invalid_argument("fairness_duration_s: must be positive");
  }
  if (topology.b1.capacity_bps <= 0 || topology.b2.capacity_bps <= 0) {
    throw std::invalid_argument("topology: capacities must be positive");
  }
  if (topology.b1.rtt_s <= 0 || topology.b2.rtt_s <= 0) {
    throw std::invalid_argument("topology: RTTs must be positive");
  }
  if (seeds.empty()) throw std::invalid_argument("seeds: at least one required");
  if (workload.kind == WorkloadSpec::Kind::Web) {
    (void)workload.web.object_sizes();
  }
  if (workload.kind == WorkloadSpec::Kind::Video && workload.video.fps <= 0) {
    throw std::invalid_argument("workload.video.fps: must be positive");
  }
  if (background_load < 0) throw std::invalid_argument("background_load: must be >= 0");
}

namespace {

json loss_to_json(const LossModel& m) {
  json j;
  switch (m.kind) {
    case LossModel::Kind::None:
      j["model"] = "none";
      break;
    case LossModel::Kind::Iid:
      j["model"] = "iid";
      j["rate"] = m.iid_p;
      break;
    case LossModel::Kind::GilbertElliot:
      j["model"] = "ge";
      j["p_good_to_bad"] = m.ge.p_good_to_bad;
      j["p_bad_to_good"] = m.ge.p_bad_to_good;
      j["drop_in_bad"] = m.ge.drop_in_bad;
      break;
    case LossModel::Kind::Scripted:
      j["model"] = "scripted";
      j["drops"] = m.scripted_drops;
      break;
  }
  return j;
}

LossModel loss_from_json(const json& j) {
  std::string model = j.value("model", "none");
  if (model == "none") return LossModel::none();
  if (model == "iid") return LossModel::iid(j.at("rate").get<double>());
  if (model == "ge") {
    LossModel m;
    m.kind = LossModel::Kind::GilbertElliot;
    m.ge.p_good_to_bad = j.at("p_good_to_bad").get<double>();
    m.ge.p_bad_to_good = j.at("p_bad_to_good").get<double>();
    m.ge.drop_in_bad = j.value("drop_in_bad", 1.0);
    return m;
  }
  if (model == "scripted") {
    return LossModel::scripted(j.at("drops").get<std::vector<std::uint64_t>>());
  }
  throw std::invalid_argument("loss.model: unknown kind '" + model + "'");
}

json path_to_json(const PathSpec& p) {
  json j;
  j["capacity_mbps"] = p.capacity_bps / 1e6;
  j["rtt_ms"] = p.rtt_s * 1e3;
  j["loss"] = loss_to_json(p.loss);
  if (p.reverse_loss) j["reverse_loss"] = loss_to_json(*p.reverse_loss);
  if (p.queue_bytes > 0) j["queue_bytes"] = p.queue_bytes;
  if (p.strip_fec) j["strip_fec"] = true;
  return j;
}

PathSpec path_from_json(const json& j) {
  PathSpec p;
  p.capacity_bps = j.value("capacity_mbps", 20.0) * 1e6;
  p.rtt_s = j.value("rtt_ms", 25.0) / 1e3;
  if (j.contains("loss")) p.loss = loss_from_json(j.at("loss"));
  if (j.contains("reverse_loss")) p.reverse_loss = loss_from_json(j.at("reverse_loss"));
  p.queue_bytes = j.value("queue_bytes", std::uint64_t{0});
  p.strip_fec = j.value("strip_fec", false);
  return p;
}

json scenario_to_json_obj(const Scenario& s) {
  json j;
  j["name"] = s.name;
  j["protocol"] = protocol_name(s.protocol);
  if (s.fairness_with) {
    j["fairness_with"] = protocol_name(*s.fairness_with);
    j["fairness_duration_s"] = s.fairness_duration_s;
  }
  j["topology"] = {{"b1", path_to_json(s.topology.b1)},
                   {"b2", path_to_json(s.topology.b2)},
                   {"single_path", s.topology.single_path},
                   {"shared_bottleneck", s.topology.shared_bottleneck}};
  json w;
  w["kind"] = s.workload.kind_name();
  switch (s.workload.kind) {
    case WorkloadSpec::Kind::Bulk:
      w["bulk_bytes"] = s.workload.bulk_bytes;
      if (s.workload.bulk_duration_s > 0) w["bulk_duration_s"] = s.workload.bulk_duration_s;
      break;
    case WorkloadSpec::Kind::Web:
      w["profile"] = s.workload.web.name;
      break;
    case WorkloadSpec::Kind::Video:
      w["duration_s"] = s.workload.video.duration_s;
      w["fps"] = s.workload.video.fps;
      w["bitrate_bps"] = s.workload.video.bitrate_bps;
      w["startup_delay_s"] = s.workload.video.startup_delay_s;
      break;
  }
  j["workload"] = w;
  j["dfec"] = {{"target", s.dfec.target},         {"delta", s.dfec.delta},
               {"n_periods", s.dfec.n_periods},   {"period_rtts", s.dfec.period_rtts},
               {"ratio_min", s.dfec.ratio_min},   {"ratio_max", s.dfec.ratio_max},
               {"start_ratio", s.dfec.start_ratio}};
  j["transport"] = {{"mss", s.transport.mss},
                    {"iw_segments", s.transport.iw_segments},
                    {"initial_ssthresh", s.transport.initial_ssthresh},
                    {"cwnd_cap", s.transport.cwnd_cap},
                    {"instant_cwnd_reduction", s.transport.instant_cwnd_reduction},
                    {"hystart", s.transport.hystart},
                    {"conn_rwnd_bytes", s.transport.conn_rwnd_bytes},
                    {"coupled_cc", s.transport.coupled_cc}};
  j["seeds"] = s.seeds;
  j["background_load"] = s.background_load;
  j["record_series"] = s.record_series;
  j["output"] = s.output;
  return j;
}

Scenario scenario_from_json_obj(const json& j) {
  Scenario s;
  s.name = j.value("name", "scenario");
  s.protocol = protocol_from_name(j.value("protocol", "tcp"));
  if (j.contains("fairness_with")) {
    s.fairness_with = protocol_from_name(j.at("fairness_with").get<std::string>());
    s.fairness_duration_s = j.value("fairness_duration_s", 30.0);
  }
  if (j.contains("topology")) {
    const json& t = j.at("topology");
    if (t.contains("b1")) s.topology.b1 = path_from_json(t.at("b1"));
    if (t.contains("b2")) s.topology.b2 = path_from_json(t.at("b2"));
    s.topology.single_path = t.value("single_path", false);
    s.topology.shared_bottleneck = t.value("shared_bottleneck", false);
  }
  if (!protocol_is_multipath(s.protocol) && !j.contains("topology")) {
    s.topology.single_path = true;
  }
  if (j.contains("workload")) {
    const json& w = j.at("workload");
    std::string kind = w.value("kind", "bulk");
    if (kind == "bulk") {
      s.workload.kind = WorkloadSpec::Kind::Bulk;
      s.workload.bulk_bytes = w.value("bulk_bytes", std::uint64_t{10} << 20);
      s.workload.bulk_duration_s = w.value("bulk_duration_s", 0.0);
    } else if (kind == "web") {
      s.workload.kind = WorkloadSpec::Kind::Web;
      s.workload.web = WebProfile::by_name(w.value("profile", "google"));
    } else if (kind == "video") {
      s.workload.kind = WorkloadSpec::Kind::Video;
      s.workload.video.duration_s = w.value("duration_s", 60.0);
      s.workload.video.fps = w.value("fps", 25.0);
      s.workload.video.bitrate_bps = w.value("bitrate_bps", 3.4e6);
      s.workload.video.startup_delay_s = w.value("startup_delay_s", 1.0);
    } else {
      throw std::invalid_argument("workload.kind: unknown kind '" + kind + "'");
    }
  }
  if (j.contains("dfec")) {
    const json& d = j.at("dfec");
    s.dfec.target = d.value("target", 0.01);
    s.dfec.delta = d.value("delta", 0.33);
    s.dfec.n_periods = d.value("n_periods", 2);
    s.dfec.period_rtts = d.value("period_rtts", 3);
    s.dfec.ratio_min = d.value("ratio_min", 4.0);
    s.dfec.ratio_max = d.value("ratio_max", 256.0);
    s.dfec.start_ratio = d.value("start_ratio", 9.0);
  }
  if (j.contains("transport")) {
    const json& t = j.at("transport");
    s.transport.mss = t.value("mss", 1448u);
    s.transport.iw_segments = t.value("iw_segments", 10.0);
    s.transport.initial_ssthresh = t.value("initial_ssthresh", 1e9);
    s.transport.cwnd_cap = t.value("cwnd_cap", 1e9);
    s.transport.instant_cwnd_reduction = t.value("instant_cwnd_reduction", false);
    s.transport.hystart = t.value("hystart", true);
    s.transport.conn_rwnd_bytes = t.value("conn_rwnd_bytes", std::uint64_t{8} << 20);
    s.transport.coupled_cc = t.value("coupled_cc", false);
  }
  if (j.contains("seeds")) s.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  s.background_load = j.value("background_load", 0.0);
  s.record_series = j.value("record_series", false);
  s.output = j.value("output", "out");
  s.validate();
  return s;
}

}  // namespace

std::string Scenario::to_json() const { return scenario_to_json_obj(*this).dump(2); }

Scenario Scenario::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("scenario: invalid JSON: ") + e.what());
  }
  return scenario_from_json_obj(j);
}

std::string SweepSpec::to_json() const {
  json j;
  j["base"] = scenario_to_json_obj(base);
  json arms_j = json::array();
  for (const Arm& a : arms) {
    json aj;
    aj["label"] = a.label;
    aj["protocol"] = protocol_name(a.protocol);
    if (a.tolerance) aj["tolerance"] = *a.tolerance;
    if (a.delta) aj["delta"] = *a.delta;
    if (a.fairness_with) aj["fairness_with"] = protocol_name(*a.fairness_with);
    arms_j.push_back(aj);
  }
  j["arms"] = arms_j;
  json axes_j = json::array();
  for (const SweepAxis& ax : axes) {
    axes_j.push_back({{"key", ax.key}, {"values", ax.values}});
  }
  j["axes"] = axes_j;
  return j.dump(2);
}

SweepSpec SweepSpec::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("sweep: invalid JSON: ") + e.what());
  }
  SweepSpec sw;
  sw.base = scenario_from_json_obj(j.at("base"));
  if (j.contains("arms")) {
    for (const json& aj : j.at("arms")) {
      Arm a;
      a.label = aj.value("label", "");
      a.protocol = protocol_from_name(aj.value("protocol", "tcp"));
      if (aj.contains("tolerance")) a.tolerance = aj.at("tolerance").get<double>();
      if (aj.contains("delta")) a.delta = aj.at("delta").get<double>();
      if (aj.contains("fairness_with")) {
        a.fairness_with = protocol_from_name(aj.at("fairness_with").get<std::string>());
      }
      if (a.label.empty()) a.label = protocol_name(a.protocol);
      sw.arms.push_back(a);
    }
  }
  if (sw.arms.empty()) {
    sw.arms.push_back({protocol_name(sw.base.protocol), sw.base.protocol, {}, {}, {}});
  }
  if (j.contains("axes")) {
    for (const json& xj : j.at("axes")) {
      sw.axes.push_back({xj.at("key").get<std::string>(),
                         xj.at("values").get<std::vector<double>>()});
    }
  }
  return sw;
}

void apply_axis(Scenario& s, const std::string& key, double value) {
  if (key == "b1_loss_pct") {
    bool ge = s.topology.b1.loss.kind == LossModel::Kind::GilbertElliot;
    s.topology.b1.loss = loss_from_pct(value, ge ? "ge" : "iid");
  } else if (key == "b2_loss_pct") {
    s.topology.b2.loss = loss_from_pct(value);
  } else if (key == "b1_rtt_ms") {
    s.topology.b1.rtt_s = value / 1e3;
  } else if (key == "b2_rtt_ms") {
    s.topology.b2.rtt_s = value / 1e3;
  } else if (key == "tolerance_pct") {
    s.dfec.target = value / 100.0;
  } else if (key == "delta") {
    s.dfec.delta = value;
  } else if (key == "b1_ge_burst") {
    // 0 keeps the configured IID model; > 0 switches B1 to Gilbert-Elliot
    // bursts of that mean length at the same stationary rate.
    if (value > 0 && s.topology.b1.loss.kind == LossModel::Kind::Iid) {
      s.topology.b1.loss = LossModel::gilbert_elliot(s.topology.b1.loss.iid_p, value);
    }
  } else {
    throw std::invalid_argument("axis: unknown key '" + key + "'");
  }
}

std::vector<RunSpec> expand(const SweepSpec& sweep) {
  std::vector<std::vector<double>> chosen(sweep.axes.size());
  std::vector<RunSpec> out;

  std::vector<std::size_t> idx(sweep.axes.size(), 0);
  for (;;) {
    Scenario cell = sweep.base;
    std::string cell_id;
    for (std::size_t a = 0; a < sweep.axes.size(); ++a) {
      double v = sweep.axes[a].values[idx[a]];
      apply_axis(cell, sweep.axes[a].key, v);
      if (!cell_id.empty()) cell_id += "|";
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%s=%g", sweep.axes[a].key.c_str(), v);
      cell_id += buf;
    }
    for (const Arm& arm : sweep.arms) {
      Scenario s = cell;
      s.protocol = arm.protocol;
      s.topology.single_path = !protocol_is_multipath(arm.protocol);
      if (arm.tolerance) s.dfec.target = *arm.tolerance;
      if (arm.delta) s.dfec.delta = *arm.delta;
      if (arm.fairness_with) s.fairness_with = arm.fairness_with;
      s.validate();
      for (std::uint64_t seed : sweep.base.seeds) {
        out.push_back({s, arm.label, cell_id, seed});
      }
    }
    // advance the cartesian counter
    std::size_t a = 0;
    for (; a < idx.size(); ++a) {
      if (++idx[a] < sweep.axes[a].values.size()) break;
      idx[a] = 0;
    }
    if (sweep.axes.empty() || a == idx.size()) break;
  }
  return out;
}

}  // namespace dfecsim

#include "dfecsim/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "dfecsim/multipath.hpp"
#include "dfecsim/stream_bytes.hpp"
#include "dfecsim/transport.hpp"

namespace dfecsim {

using nlohmann::json;

namespace {

double loss_pct(const LossModel& m) {
  switch (m.kind) {
    case LossModel::Kind::None:
      return 0.0;
    case LossModel::Kind::Iid:
      return m.iid_p * 100.0;
    case LossModel::Kind::GilbertElliot:
      return m.ge.p_good_to_bad / (m.ge.p_good_to_bad + m.ge.p_bad_to_good) * 100.0;
    case LossModel::Kind::Scripted:
      return -1.0;
  }
  return 0.0;
}

double ratio_time_average(const std::vector<std::pair<double, double>>& updates, double from_s,
                          double to_s) {
  if (updates.empty() || to_s <= from_s) return 0.0;
  double integral = 0.0;
  for (std::size_t i = 0; i < updates.size(); ++i) {
    double seg_start = std::max(updates[i].first, from_s);
    double seg_end = (i + 1 < updates.size()) ? std::min(updates[i + 1].first, to_s) : to_s;
    if (seg_end > seg_start) integral += (seg_end - seg_start) * updates[i].second;
  }
  return integral / (to_s - from_s);
}

TransportConfig transport_config(const Scenario& s, Protocol proto, const std::string& name,
                                 std::uint32_t conn_id) {
  TransportConfig cfg;
  cfg.name = name;
  cfg.conn_id = conn_id;
  cfg.mss = s.transport.mss;
  cfg.iw_segments = s.transport.iw_segments;
  cfg.initial_ssthresh = s.transport.initial_ssthresh;
  cfg.cwnd_cap = s.transport.cwnd_cap;
  cfg.instant_cwnd_reduction = s.transport.instant_cwnd_reduction;
  cfg.hystart = s.transport.hystart;
  cfg.dfec = s.dfec;
  cfg.want_fec = protocol_uses_fec(proto);
  cfg.ir_mode = proto == Protocol::TcpIr;
  return cfg;
}

void wire_pair(TransportConn& sender, TransportConn& receiver, BuiltPath& path) {
  TransportConn* recv = &receiver;
  TransportConn* send = &sender;
  Link* fwd = path.fwd.get();
  Link* rev = path.rev.get();
  sender.set_tx([fwd, recv](Segment&& seg) {
    fwd->transmit(std::move(seg), [recv](Segment&& s, SimTime) { recv->on_segment(std::move(s)); });
  });
  receiver.set_tx([rev, send](Segment&& seg) {
    rev->transmit(std::move(seg), [send](Segment&& s, SimTime) { send->on_segment(std::move(s)); });
  });
}

// ---------------------------------------------------------------------------
// Single-path harness

class SinglePathHarness : public FlowHarness {
 public:
  SinglePathHarness(EventQueue& eq, BuiltPath& path, const Scenario& s, Protocol proto,
                    std::uint64_t seed, const std::string& tag, SeriesRecorder* rec)
      : eq_(eq),
        path_(path),
        sender_(eq, transport_config(s, proto, tag + ".snd", 1)),
        receiver_(eq, transport_config(s, proto, tag + ".rcv", 1)),
        stream_(seed ^ 0x7a5a5u),
        base_rtt_(secs(s.topology.b1.rtt_s)) {
    wire_pair(sender_, receiver_, path_);
    sender_.set_recorder(rec);
    sender_.set_source([this]() -> std::optional<TransportConn::Chunk> {
      if (pending_bytes_ == 0) return std::nullopt;
      std::uint32_t len = static_cast<std::uint32_t>(
          std::min<std::uint64_t>(sender_.config().mss, pending_bytes_));
      TransportConn::Chunk chunk;
      chunk.conn_seq = next_seq_;
      chunk.payload = std::make_shared<const std::vector<std::uint8_t>>(
          stream_.slice(next_seq_, len));
      next_seq_ += len;
      pending_bytes_ -= len;
      return chunk;
    });
    receiver_.set_deliver([this](std::uint64_t conn_seq, const std::vector<std::uint8_t>& bytes) {
      if (!stream_.matches(conn_seq, bytes)) integrity_ = false;
      delivered_ += bytes.size();
      if (watch_) watch_(conn_seq, bytes.size(), eq_.now());
    });
    sender_.set_on_established([this] {
      if (est_cb_) est_cb_();
    });
  }

  EventQueue& eq() override { return eq_; }

  void start() override {
    receiver_.listen();
    sender_.connect();
  }

  void write(std::uint64_t bytes) override {
    pending_bytes_ += bytes;
    sender_.notify_source_ready();
  }

  void close_write() override { sender_.close_write(); }
  bool sender_established() const override { return sender_.established(); }
  SimTime sender_established_at() const override { return sender_.established_at(); }
  void set_on_sender_established(std::function<void()> fn) override { est_cb_ = std::move(fn); }
  bool aborted() const override { return sender_.aborted() || receiver_.aborted(); }
  std::uint64_t delivered_bytes() const override { return delivered_; }
  bool integrity_ok() const override { return integrity_; }
  void set_delivery_watch(DeliveryWatch watch) override { watch_ = std::move(watch); }
  SimTime base_rtt() const override { return base_rtt_; }

  RunMetrics collect(SimTime end) const override {
    RunMetrics m;
    const ConnCounters& cs = sender_.counters();
    const ConnCounters& cr = receiver_.counters();
    m.handshake_s = to_seconds(sender_.established_at());
    m.aborted = aborted();
    m.byte_integrity_ok = integrity_;
    m.data_sent = cs.data_sent;
    m.data_first_tx = cs.data_first_tx;
    m.retransmitted = cs.retransmitted;
    m.fast_retransmits = cs.fast_retransmits;
    m.rtos = cs.rtos;
    m.fec_sent = cs.fec_sent;
    m.fec_recovered = cs.fec_recovered;
    m.fec_failed = cs.fec_failed;
    m.fec_unused = cs.fec_unused;
    m.fec_lost_timeouts = cs.fec_lost_timeouts;
    m.cwnd_violations = cs.cwnd_violations + cr.cwnd_violations;
    m.integrity_faults = cr.integrity_faults;
    m.protocol_errors = cs.protocol_errors + cr.protocol_errors;
    if (m.fec_sent + m.data_first_tx > 0) {
      m.fec_overhead =
          static_cast<double>(m.fec_sent) / static_cast<double>(m.fec_sent + m.data_first_tx);
    }
    m.model_drops = path_.fwd->counters().model_dropped + path_.rev->counters().model_dropped;
    m.queue_drops = path_.fwd->counters().queue_dropped + path_.rev->counters().queue_dropped;
    m.subflow_util = {1.0};
    m.subflow_overhead = {m.fec_overhead};
    m.subflow_mean_cwnd = {cs.mean_cwnd()};
    m.subflow_ofo_max = {static_cast<double>(receiver_.ofo().max_bytes())};
    m.subflow_ofo_avg = {receiver_.ofo().time_average(end)};
    m.conn_ofo_max = m.subflow_ofo_max[0];
    m.conn_ofo_avg = m.subflow_ofo_avg[0];
    if (const DfecController* d = sender_.dfec()) {
      for (const auto& [t, r] : d->updates()) m.ratio_updates.emplace_back(to_seconds(t), r);
      m.ratio_time_avg_last_half =
          ratio_time_average(m.ratio_updates, to_seconds(end) / 2.0, to_seconds(end));
    }
    return m;
  }

  TransportConn& sender() { return sender_; }
  TransportConn& receiver() { return receiver_; }

 private:
  EventQueue& eq_;
  BuiltPath& path_;
  TransportConn sender_;
  TransportConn receiver_;
  StreamBytes stream_;
  SimTime base_rtt_;

  std::uint64_t pending_bytes_ = 0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t delivered_ = 0;
  bool integrity_ = true;
  DeliveryWatch watch_;
  std::function<void()> est_cb_;
};

// ---------------------------------------------------------------------------
// Multipath harness

class MultipathHarness : public FlowHarness {
 public:
  MultipathHarness(EventQueue& eq, Network& net, const Scenario& s, std::uint64_t seed,
                   SeriesRecorder* rec)
      : eq_(eq), net_(net), mp_recv_(eq, 2), base_rtt_(secs(s.topology.b1.rtt_s)) {
    Protocol proto = s.protocol;
    bool fec = protocol_uses_fec(proto);
    for (std::size_t i = 0; i < 2; ++i) {
      std::string tag = "sf" + std::to_string(i);
      Protocol sub_proto = fec ? Protocol::TcpDfec : Protocol::Tcp;
      senders_.push_back(std::make_unique<TransportConn>(
          eq, transport_config(s, sub_proto, tag + ".snd", static_cast<std::uint32_t>(i + 1))));
      receivers_.push_back(std::make_unique<TransportConn>(
          eq, transport_config(s, sub_proto, tag + ".rcv", static_cast<std::uint32_t>(i + 1))));
      wire_pair(*senders_[i], *receivers_[i], net_.paths[i]);
      senders_[i]->set_recorder(rec);
      receivers_[i]->set_recorder(rec);
    }
    if (s.transport.coupled_cc) {
      coupler_ = std::make_unique<CcCoupler>();
      for (auto& sf : senders_) {
        coupler_->attach(sf.get());
        sf->set_cc_coupler(coupler_.get());
      }
    }

    MultipathConfig mp_cfg;
    mp_cfg.mss = s.transport.mss;
    mp_cfg.conn_rwnd_bytes = s.transport.conn_rwnd_bytes;
    mp_cfg.coupled_cc = s.transport.coupled_cc;
    mp_send_ = std::make_unique<MultipathSender>(
        eq, mp_cfg, std::vector<TransportConn*>{senders_[0].get(), senders_[1].get()},
        seed ^ 0x7a5a5u);
    mp_send_->wire();
    mp_send_->set_recorder(rec);

    mp_recv_.set_recorder(rec);
    for (std::size_t i = 0; i < 2; ++i) {
      receivers_[i]->set_deliver(
          [this, i](std::uint64_t conn_seq, const std::vector<std::uint8_t>& bytes) {
            mp_recv_.on_subflow_deliver(i, conn_seq, bytes);
          });
    }
    mp_recv_.set_app_sink([this](std::uint64_t conn_seq, const std::vector<std::uint8_t>& bytes) {
      if (!mp_send_->stream().matches(conn_seq, bytes)) integrity_ = false;
      delivered_ += bytes.size();
      if (watch_) watch_(conn_seq, bytes.size(), eq_.now());
    });
    senders_[0]->set_on_established([this] {
      if (est_cb_) est_cb_();
    });
  }

  EventQueue& eq() override { return eq_; }

  void start() override {
    for (auto& r : receivers_) r->listen();
    for (auto& sf : senders_) sf->connect();
  }

  void write(std::uint64_t bytes) override { mp_send_->app_write(bytes); }
  void close_write() override { mp_send_->close_write(); }
  bool sender_established() const override { return senders_[0]->established(); }
  SimTime sender_established_at() const override { return senders_[0]->established_at(); }
  void set_on_sender_established(std::function<void()> fn) override { est_cb_ = std::move(fn); }

  bool aborted() const override {
    for (const auto& sf : senders_) {
      if (sf->aborted()) return true;
    }
    return false;
  }

  std::uint64_t delivered_bytes() const override { return delivered_; }
  bool integrity_ok() const override { return integrity_ && mp_recv_.integrity_faults() == 0; }
  void set_delivery_watch(DeliveryWatch watch) override { watch_ = std::move(watch); }
  SimTime base_rtt() const override { return base_rtt_; }

  RunMetrics collect(SimTime end) const override {
    RunMetrics m;
    m.handshake_s = to_seconds(senders_[0]->established_at());
    m.aborted = aborted();
    m.byte_integrity_ok = integrity_ok();

    std::vector<ConnCounters> per_subflow;
    for (std::size_t i = 0; i < senders_.size(); ++i) {
      const ConnCounters& cs = senders_[i]->counters();
      per_subflow.push_back(cs);
      m.data_sent += cs.data_sent;
      m.data_first_tx += cs.data_first_tx;
      m.retransmitted += cs.retransmitted;
      m.fast_retransmits += cs.fast_retransmits;
      m.rtos += cs.rtos;
      m.fec_sent += cs.fec_sent;
      m.fec_recovered += cs.fec_recovered;
      m.fec_failed += cs.fec_failed;
      m.fec_unused += cs.fec_unused;
      m.fec_lost_timeouts += cs.fec_lost_timeouts;
      m.cwnd_violations += cs.cwnd_violations;
      m.protocol_errors += cs.protocol_errors + receivers_[i]->counters().protocol_errors;
      m.integrity_faults += receivers_[i]->counters().integrity_faults;
      m.subflow_mean_cwnd.push_back(cs.mean_cwnd());
      double oh = 0.0;
      if (cs.fec_sent + cs.data_first_tx > 0) {
        oh = static_cast<double>(cs.fec_sent) / static_cast<double>(cs.fec_sent + cs.data_first_tx);
      }
      m.subflow_overhead.push_back(oh);
      m.subflow_ofo_max.push_back(static_cast<double>(receivers_[i]->ofo().max_bytes()));
      m.subflow_ofo_avg.push_back(receivers_[i]->ofo().time_average(end));
    }
    m.integrity_faults += mp_recv_.integrity_faults();
    if (m.fec_sent + m.data_first_tx > 0) {
      m.fec_overhead =
          static_cast<double>(m.fec_sent) / static_cast<double>(m.fec_sent + m.data_first_tx);
    }
    if (m.data_first_tx > 0) {
      m.subflow_util = subflow_utilization(per_subflow);
    } else {
      m.subflow_util.assign(per_subflow.size(), 0.0);
    }
    for (const auto& path : net_.paths) {
      m.model_drops += path.fwd->counters().model_dropped + path.rev->counters().model_dropped;
      m.queue_drops += path.fwd->counters().queue_dropped + path.rev->counters().queue_dropped;
    }
    m.conn_ofo_max = static_cast<double>(mp_recv_.ofo().max_bytes());
    m.conn_ofo_avg = mp_recv_.ofo().time_average(end);
    if (const DfecController* d = senders_[0]->dfec()) {
      for (const auto& [t, r] : d->updates()) m.ratio_updates.emplace_back(to_seconds(t), r);
      m.ratio_time_avg_last_half =
          ratio_time_average(m.ratio_updates, to_seconds(end) / 2.0, to_seconds(end));
    }
    return m;
  }

 private:
  EventQueue& eq_;
  Network& net_;
  std::vector<std::unique_ptr<TransportConn>> senders_;
  std::vector<std::unique_ptr<TransportConn>> receivers_;
  std::unique_ptr<MultipathSender> mp_send_;
  MultipathReceiver mp_recv_;
  std::unique_ptr<CcCoupler> coupler_;
  SimTime base_rtt_;

  std::uint64_t delivered_ = 0;
  bool integrity_ = true;
  DeliveryWatch watch_;
  std::function<void()> est_cb_;
};

RunMetrics drive_workload(FlowHarness& flow, const Scenario& s) {
  switch (s.workload.kind) {
    case WorkloadSpec::Kind::Bulk:
      if (s.workload.bulk_duration_s > 0) {
        return run_bulk_duration(flow, s.workload.bulk_duration_s);
      }
      return run_bulk(flow, s.workload.bulk_bytes);
    case WorkloadSpec::Kind::Web:
      return run_web(flow, s.workload.web);
    case WorkloadSpec::Kind::Video:
      return run_video(flow, s.workload.video);
  }
  return {};
}

RunMetrics run_fairness_pair(EventQueue& eq, Network& net, const Scenario& s, std::uint64_t seed,
                             SeriesRecorder* rec) {
  // Two single-path flows share bottleneck B1. A short stagger breaks phase
  // symmetry; its assignment alternates by seed parity so the averaged ratio
  // carries no first-mover bias.
  SinglePathHarness flow_a(eq, net.paths[0], s, s.protocol, seed, "a", rec);
  Scenario s_b = s;
  SinglePathHarness flow_b(eq, net.paths[0], s_b, *s.fairness_with, seed ^ 0x9e37u, "b", rec);

  const SimTime stagger = msec(250);
  const SimTime end = secs(s.fairness_duration_s);
  const bool a_first = (seed % 2) == 0;

  flow_a.set_on_sender_established([&flow_a] { flow_a.write(1ull << 50); });
  flow_b.set_on_sender_established([&flow_b] { flow_b.write(1ull << 50); });
  if (a_first) {
    flow_a.start();
    eq.schedule(stagger, [&flow_b] { flow_b.start(); });
  } else {
    flow_b.start();
    eq.schedule(stagger, [&flow_a] { flow_a.start(); });
  }

  eq.run_while([&] { return !flow_a.aborted() && !flow_b.aborted(); }, end);

  RunMetrics m = flow_a.collect(end);
  double t_a = to_seconds(a_first ? end : end - stagger);
  double t_b = to_seconds(a_first ? end - stagger : end);
  m.fair_goodput_self = static_cast<double>(flow_a.delivered_bytes()) * 8.0 / t_a;
  m.fair_goodput_other = static_cast<double>(flow_b.delivered_bytes()) * 8.0 / t_b;
  m.goodput_bps = m.fair_goodput_self;
  m.app_bytes = flow_a.delivered_bytes();
  m.byte_integrity_ok = flow_a.integrity_ok() && flow_b.integrity_ok();
  return m;
}

}  // namespace

RunMetrics run_one(const Scenario& scenario, std::uint64_t seed, SeriesRecorder* series) {
  scenario.validate();
  EventQueue eq;
  Network net = build_topology(eq, scenario.topology, seed);
  if (series) {
    for (auto& path : net.paths) {
      path.fwd->set_recorder(series);
      path.rev->set_recorder(series);
    }
  }
  BackgroundSpec bg;
  bg.load = scenario.background_load;
  attach_background(eq, net, bg, seed);

  RunMetrics m;
  if (scenario.fairness_with) {
    m = run_fairness_pair(eq, net, scenario, seed, series);
  } else if (protocol_is_multipath(scenario.protocol)) {
    MultipathHarness flow(eq, net, scenario, seed, series);
    m = drive_workload(flow, scenario);
  } else {
    SinglePathHarness flow(eq, net.paths[0], scenario, scenario.protocol, seed, "flow", series);
    m = drive_workload(flow, scenario);
  }
  m.seed = seed;
  return m;
}

std::vector<RunRow> run_sweep(const SweepSpec& sweep, int jobs) {
  std::vector<RunSpec> specs = expand(sweep);
  std::vector<RunRow> rows(specs.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= specs.size()) return;
      RunRow row;
      row.spec = specs[i];
      row.metrics = run_one(specs[i].scenario, specs[i].seed);
      row.metrics.arm = specs[i].arm;
      rows[i] = std::move(row);
    }
  };

  int n_threads = std::max(1, jobs);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Presets

namespace {

Scenario preset_base(int seed_count) {
  Scenario s;
  s.topology.b1 = {20e6, 0.025, LossModel::none(), {}, 0, false};
  s.topology.b2 = {10e6, 0.025, LossModel::none(), {}, 0, false};
  s.seeds.clear();
  for (int i = 1; i <= seed_count; ++i) s.seeds.push_back(static_cast<std::uint64_t>(i));
  return s;
}

const std::vector<double> kLossGrid = {0, 1, 2, 3, 5};
const std::vector<double> kRttGrid = {25, 100, 400};

}  // namespace

std::vector<std::string> preset_names() {
  return {"fig4_tolerance", "fig5_delta",      "fig6_ratio_trace", "fig7_cwnd_trace",
          "fig8_fairness",  "fig10_bulk",      "fig11_video",      "fig12_web_google",
          "fig12_web_youtube", "fig12_web_espn", "fig13_mptcp_bulk", "table2_grid",
          "tcpir_google",   "tcpir_bulk",      "bufferbloat"};
}

SweepSpec make_preset(const std::string& name, int seed_count) {
  SweepSpec sw;
  sw.base = preset_base(seed_count);
  sw.base.name = name;

  if (name == "fig4_tolerance") {
    sw.base.workload.kind = WorkloadSpec::Kind::Bulk;
    sw.axes = {{"b1_loss_pct", kLossGrid}, {"b1_rtt_ms", kRttGrid}};
    sw.arms.push_back({"tcp", Protocol::Tcp, {}, {}, {}});
    for (double tol : {0.0025, 0.005, 0.01, 0.02, 0.03}) {
      char label[32];
      std::snprintf(label, sizeof(label), "dfec_tol%.2f", tol * 100.0);
      sw.arms.push_back({label, Protocol::TcpDfec, tol, {}, {}});
    }
  } else if (name == "fig5_delta") {
    sw.base.workload.kind = WorkloadSpec::Kind::Bulk;
    sw.axes = {{"b1_loss_pct", kLossGrid}, {"b1_rtt_ms", kRttGrid}};
    sw.arms.push_back({"tcp", Protocol::Tcp, {}, {}, {}});
    for (double d : {0.25, 0.33, 0.50, 0.75}) {
      char label[32];
      std::snprintf(label, sizeof(label), "dfec_delta%.2f", d);
      sw.arms.push_back({label, Protocol::TcpDfec, {}, d, {}});
    }
  } else if (name == "fig6_ratio_trace") {
    sw.base.workload.kind = WorkloadSpec::Kind::Bulk;
    sw.base.workload.bulk_duration_s = 10.0;
    sw.base.record_series = true;
    sw.axes = {{"b1_loss_pct", kLossGrid}};
    sw.arms.push_back({"tcp_dfec", Protocol::TcpDfec, {}, {}, {}});
  } else if (name == "fig7_cwnd_trace") {
    sw.base.workload.kind = WorkloadSpec::Kind::Bulk;
    sw.base.workload.bulk_duration_s = 15.0;
    sw.base.record_series = true;
    sw.base.topology.b1.loss = LossModel::iid(0.03);
    sw.axes = {{"b1_ge_burst", {0, 2}}};
    sw.arms.push_back({"tcp_dfec", Protocol::TcpDfec, {}, {}, {}});
  } else if (name == "fig8_fairness") {
    sw.base.topology.shared_bottleneck = true;
    sw.base.topology.single_path = true;
    sw.base.fairness_duration_s = 60.0;
    sw.base.background_load = 0.3;  // measured pair competes with cross-traffic
    sw.axes = {{"b1_loss_pct", kLossGrid}, {"b1_rtt_ms", kRttGrid}};
    sw.arms.push_back({"dfec_vs_tcp", Protocol::TcpDfec, {}, {}, Protocol::Tcp});
    sw.arms.push_back({"dfec_vs_dfec", Protocol::TcpDfec, {}, {}, Protocol::TcpDfec});
  } else if (name == "fig10_bulk") {
    sw.base.workload.kind = WorkloadSpec::Kind::Bulk;
    sw.base.workload.bulk_bytes = 10ull << 20;
    sw.axes = {{"b1_loss_pct", kLossGrid}, {"b1_rtt_ms", kRttGrid}};
    sw.arms.push_back({"tcp", Protocol::Tcp, {}, {}, {}});
    sw.arms.push_back({"tcp_dfec", Protocol::TcpDfec, {}, {}, {}});
  } else if (name == "fig11_video") {
    sw.base.workload.kind = WorkloadSpec::Kind::Video;
    sw.axes = {{"b1_loss_pct", kLossGrid}, {"b1_rtt_ms", kRttGrid}};
    sw.arms.push_back({"tcp", Protocol::Tcp, {}, {}, {}});
    sw.arms.push_back({"tcp_dfec", Protocol::TcpDfec, {}, {}, {}});
  } else if (name.rfind("fig12_web_", 0) == 0) {
    sw.base.workload.kind = WorkloadSpec::Kind::Web;
    sw.base.workload.web = WebProfile::by_name(name.substr(10));
    sw.axes = {{"b1_loss_pct", kLossGrid}, {"b1_rtt_ms", kRttGrid}};
    sw.arms.push_back({"tcp", Protocol::Tcp, {}, {}, {}});
    sw.arms.push_back({"tcp_dfec", Protocol::TcpDfec, {}, {}, {}});
  } else if (name == "fig13_mptcp_bulk" || name == "table2_grid") {
    sw.base.workload.kind = WorkloadSpec::Kind::Bulk;
    sw.base.workload.bulk_bytes = 16ull << 20;
    sw.axes = {{"b1_loss_pct", kLossGrid}, {"b2_rtt_ms", kRttGrid}};
    sw.arms.push_back({"mptcp", Protocol::Mptcp, {}, {}, {}});
    sw.arms.push_back({"mptcp_dfec", Protocol::MptcpDfec, {}, {}, {}});
  } else if (name == "tcpir_google" || name == "tcpir_bulk") {
    if (name == "tcpir_google") {
      sw.base.workload.kind = WorkloadSpec::Kind::Web;
      sw.base.workload.web = WebProfile::google();
    } else {
      sw.base.workload.kind = WorkloadSpec::Kind::Bulk;
      sw.base.workload.bulk_bytes = 10ull << 20;
    }
    sw.axes = {{"b1_loss_pct", kLossGrid}, {"b1_rtt_ms", kRttGrid}};
    sw.arms.push_back({"tcp", Protocol::Tcp, {}, {}, {}});
    sw.arms.push_back({"tcp_ir", Protocol::TcpIr, {}, {}, {}});
    sw.arms.push_back({"tcp_dfec", Protocol::TcpDfec, {}, {}, {}});
  } else if (name == "bufferbloat") {
    sw.base.workload.kind = WorkloadSpec::Kind::Bulk;
    sw.base.workload.bulk_bytes = 16ull << 20;
    sw.base.topology.b1.queue_bytes = 8ull << 20;
    sw.base.topology.b2.queue_bytes = 8ull << 20;
    sw.axes = {{"b2_rtt_ms", kRttGrid}};
    sw.arms.push_back({"mptcp", Protocol::Mptcp, {}, {}, {}});
    sw.arms.push_back({"mptcp_dfec", Protocol::MptcpDfec, {}, {}, {}});
  } else {
    throw std::invalid_argument("unknown preset '" + name + "'");
  }
  return sw;
}

// ---------------------------------------------------------------------------
// CSV and aggregation

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

std::vector<std::string> runs_csv_header() {
  return {"name",           "arm",
          "cell",           "seed",
          "protocol",       "workload",
          "b1_capacity_mbps", "b1_rtt_ms",
          "b1_loss_pct",    "b2_capacity_mbps",
          "b2_rtt_ms",      "b2_loss_pct",
          "background_load", "completion_s",
          "handshake_s",    "goodput_bps",
          "app_bytes",      "fec_overhead",
          "full_frame_ratio", "frames_total",
          "frames_full",    "data_sent",
          "data_first_tx",  "retransmitted",
          "fast_retransmits", "rtos",
          "fec_sent",       "fec_recovered",
          "fec_failed",     "fec_unused",
          "fec_lost_timeouts", "model_drops",
          "queue_drops",    "cwnd_violations",
          "integrity_ok",   "aborted",
          "subflow0_util",  "subflow1_util",
          "subflow0_overhead", "subflow1_overhead",
          "conn_ofo_max",   "conn_ofo_avg",
          "ratio_update_count", "ratio_final",
          "ratio_avg_last_half", "fair_goodput_self",
          "fair_goodput_other"};
}

std::vector<std::string> run_row_values(const RunRow& row) {
  const Scenario& s = row.spec.scenario;
  const RunMetrics& m = row.metrics;
  auto sf = [&](const std::vector<double>& v, std::size_t i) {
    return i < v.size() ? format_double(v[i]) : std::string();
  };
  double ratio_final = m.ratio_updates.empty() ? 0.0 : m.ratio_updates.back().second;
  return {s.name,
          row.spec.arm,
          row.spec.cell,
          std::to_string(row.spec.seed),
          protocol_name(s.protocol),
          s.workload.kind_name(),
          format_double(s.topology.b1.capacity_bps / 1e6),
          format_double(s.topology.b1.rtt_s * 1e3),
          format_double(loss_pct(s.topology.b1.loss)),
          format_double(s.topology.b2.capacity_bps / 1e6),
          format_double(s.topology.b2.rtt_s * 1e3),
          format_double(loss_pct(s.topology.b2.loss)),
          format_double(s.background_load),
          format_double(m.completion_s),
          format_double(m.handshake_s),
          format_double(m.goodput_bps),
          std::to_string(m.app_bytes),
          format_double(m.fec_overhead),
          format_double(m.full_frame_ratio),
          std::to_string(m.frames_total),
          std::to_string(m.frames_full),
          std::to_string(m.data_sent),
          std::to_string(m.data_first_tx),
          std::to_string(m.retransmitted),
          std::to_string(m.fast_retransmits),
          std::to_string(m.rtos),
          std::to_string(m.fec_sent),
          std::to_string(m.fec_recovered),
          std::to_string(m.fec_failed),
          std::to_string(m.fec_unused),
          std::to_string(m.fec_lost_timeouts),
          std::to_string(m.model_drops),
          std::to_string(m.queue_drops),
          std::to_string(m.cwnd_violations),
          m.byte_integrity_ok ? "1" : "0",
          m.aborted ? "1" : "0",
          sf(m.subflow_util, 0),
          sf(m.subflow_util, 1),
          sf(m.subflow_overhead, 0),
          sf(m.subflow_overhead, 1),
          format_double(m.conn_ofo_max),
          format_double(m.conn_ofo_avg),
          std::to_string(m.ratio_updates.empty() ? 0 : m.ratio_updates.size() - 1),
          format_double(ratio_final),
          format_double(m.ratio_time_avg_last_half),
          format_double(m.fair_goodput_self),
          format_double(m.fair_goodput_other)};
}

CsvTable rows_to_table(const std::vector<RunRow>& rows) {
  CsvTable t;
  t.header = runs_csv_header();
  for (const RunRow& r : rows) t.rows.push_back(run_row_values(r));
  return t;
}

std::string write_csv(const CsvTable& table) {
  std::string out;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (i) out += ",";
    out += csv_escape(table.header[i]);
  }
  out += "\r\n";
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ",";
      out += csv_escape(row[i]);
    }
    out += "\r\n";
  }
  return out;
}

CsvTable read_csv(const std::string& text) {
  CsvTable t;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool header_done = false;

  auto end_field = [&] {
    row.push_back(field);
    field.clear();
  };
  auto end_row = [&] {
    if (!row.empty() || !field.empty()) {
      end_field();
      if (!header_done) {
        t.header = row;
        header_done = true;
      } else {
        t.rows.push_back(row);
      }
      row.clear();
    }
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      end_row();
    } else if (c != '\r') {
      field += c;
    }
  }
  end_row();
  return t;
}

void write_runs_csv(const std::string& path, const std::vector<RunRow>& rows) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(path, std::ios::binary);
  f << write_csv(rows_to_table(rows));
}

void write_series_csv(const std::string& path, const SeriesRecorder& rec) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(path, std::ios::binary);
  f << "time_s,metric,value\r\n";
  for (const auto& pt : rec.points()) {
    f << format_double(to_seconds(pt.t)) << "," << csv_escape(pt.metric) << ","
      << format_double(pt.value) << "\r\n";
  }
}

namespace {

int col_index(const CsvTable& t, const std::string& name) {
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (t.header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

CsvTable aggregate_table(const CsvTable& runs) {
  if (runs.rows.empty()) throw std::invalid_argument("aggregate: no input rows");
  for (const auto& row : runs.rows) {
    if (row.size() != runs.header.size()) {
      throw std::invalid_argument("aggregate: heterogeneous row widths");
    }
  }
  const std::vector<std::string> group_cols = {"name", "cell", "arm", "protocol", "workload"};
  const std::vector<std::string> metric_cols = {"completion_s",     "goodput_bps",
                                                "fec_overhead",     "full_frame_ratio",
                                                "fair_goodput_self", "fair_goodput_other",
                                                "retransmitted",    "rtos"};
  std::vector<int> group_idx;
  for (const auto& c : group_cols) {
    int idx = col_index(runs, c);
    if (idx < 0) throw std::invalid_argument("aggregate: missing column " + c);
    group_idx.push_back(idx);
  }
  std::vector<int> metric_idx;
  for (const auto& c : metric_cols) {
    int idx = col_index(runs, c);
    if (idx < 0) throw std::invalid_argument("aggregate: missing column " + c);
    metric_idx.push_back(idx);
  }

  // group key -> metric column -> samples
  std::map<std::vector<std::string>, std::vector<std::vector<double>>> groups;
  for (const auto& row : runs.rows) {
    std::vector<std::string> key;
    for (int gi : group_idx) key.push_back(row[static_cast<std::size_t>(gi)]);
    auto& samples = groups[key];
    if (samples.empty()) samples.resize(metric_idx.size());
    for (std::size_t mi = 0; mi < metric_idx.size(); ++mi) {
      samples[mi].push_back(std::atof(row[static_cast<std::size_t>(metric_idx[mi])].c_str()));
    }
  }

  CsvTable out;
  out.header = group_cols;
  out.header.push_back("n_runs");
  for (const auto& c : metric_cols) {
    out.header.push_back(c + "_mean");
    out.header.push_back(c + "_median");
  }
  out.header.push_back("completion_ratio_vs_baseline");
  out.header.push_back("full_frame_ratio_vs_baseline");

  // Baseline arm per (name, cell): "tcp" or "mptcp" when present, else the
  // lexicographically first arm.
  std::map<std::pair<std::string, std::string>, std::string> baseline_arm;
  for (const auto& [key, samples] : groups) {
    (void)samples;
    auto cell_key = std::make_pair(key[0], key[1]);
    const std::string& arm = key[2];
    auto it = baseline_arm.find(cell_key);
    if (it == baseline_arm.end()) {
      baseline_arm[cell_key] = arm;
    } else if (arm == "tcp" || arm == "mptcp" ||
               (it->second != "tcp" && it->second != "mptcp" && arm < it->second)) {
      it->second = arm;
    }
  }
  auto group_mean = [&](const std::string& name, const std::string& cell, const std::string& arm,
                        std::size_t metric) -> double {
    for (const auto& [key, samples] : groups) {
      if (key[0] == name && key[1] == cell && key[2] == arm) return mean_of(samples[metric]);
    }
    return 0.0;
  };

  const std::size_t completion_i = 0;
  const std::size_t fullframe_i = 3;
  for (const auto& [key, samples] : groups) {
    std::vector<std::string> row = key;
    row.push_back(std::to_string(samples[0].size()));
    for (const auto& col : samples) {
      row.push_back(format_double(mean_of(col)));
      row.push_back(format_double(median_of(col)));
    }
    const std::string& base = baseline_arm[{key[0], key[1]}];
    double base_completion = group_mean(key[0], key[1], base, completion_i);
    double base_ff = group_mean(key[0], key[1], base, fullframe_i);
    row.push_back(base_completion != 0.0
                      ? format_double(mean_of(samples[completion_i]) / base_completion)
                      : "");
    row.push_back(base_ff != 0.0 ? format_double(mean_of(samples[fullframe_i]) / base_ff) : "");
    out.rows.push_back(row);
  }
  return out;
}

std::string comparison_json(const std::vector<RunRow>& rows) {
  // (name, cell) -> arm -> runs in seed order
  std::map<std::pair<std::string, std::string>, std::map<std::string, std::vector<RunMetrics>>>
      cells;
  std::map<std::pair<std::string, std::string>, bool> is_video;
  for (const RunRow& r : rows) {
    auto key = std::make_pair(r.spec.scenario.name, r.spec.cell);
    cells[key][r.spec.arm].push_back(r.metrics);
    is_video[key] = r.spec.scenario.workload.kind == WorkloadSpec::Kind::Video;
  }

  json doc = json::array();
  for (auto& [key, arms] : cells) {
    json cell_j;
    cell_j["name"] = key.first;
    cell_j["cell"] = key.second;

    std::string base;
    for (const auto& [arm, unused] : arms) {
      (void)unused;
      if (arm == "tcp" || arm == "mptcp") base = arm;
    }
    if (base.empty()) base = arms.begin()->first;
    cell_j["baseline"] = base;

    auto metric = is_video[key] ? full_frame_metric : completion_metric;
    json arms_j = json::object();
    for (auto& [arm, runs] : arms) {
      json a;
      double overhead = 0.0;
      double goodput = 0.0;
      for (const RunMetrics& m : runs) {
        overhead += m.fec_overhead;
        goodput += m.goodput_bps;
      }
      a["n"] = runs.size();
      a["mean_fec_overhead"] = overhead / static_cast<double>(runs.size());
      a["mean_goodput_bps"] = goodput / static_cast<double>(runs.size());
      if (arm != base && !runs.empty() && runs.size() == arms[base].size()) {
        try {
          CompareStats st = compare(runs, arms[base], metric);
          a["ratio_mean"] = st.mean_ratio;
          a["ratio_median"] = st.median_ratio;
          a["ratio_ci95"] = {st.ci95_lo, st.ci95_hi};
          a["ratio_per_seed"] = st.per_seed_ratio;
        } catch (const std::exception&) {
          // leave ratios out when metrics are incomparable (e.g. incomplete runs)
        }
      }
      arms_j[arm] = a;
    }
    cell_j["arms"] = arms_j;
    doc.push_back(cell_j);
  }
  return doc.dump(2);
}

}  // namespace dfecsim

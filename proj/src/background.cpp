#include "dfecsim/background.hpp"

#include <algorithm>

namespace dfecsim {

namespace {

struct OnOffState {
  std::shared_ptr<RngStream> rng;
  double on_rate_pps = 0;
  double mean_on_s = 1;
  double mean_off_s = 1;
  double pareto_shape = 1.5;
  double mean_pkt_bytes = 1000;
  SimTime on_until = 0;
  std::function<void(std::uint32_t)> emit;
};

void schedule_next_packet(EventQueue& eq, std::shared_ptr<OnOffState> st);

void begin_on_period(EventQueue& eq, std::shared_ptr<OnOffState> st) {
  // Pareto(shape, scale) with scale chosen so the mean equals mean_on_s.
  double scale = st->mean_on_s * (st->pareto_shape - 1.0) / st->pareto_shape;
  double on_len = st->rng->pareto(scale, st->pareto_shape);
  st->on_until = eq.now() + secs(on_len);
  schedule_next_packet(eq, st);
}

void begin_off_period(EventQueue& eq, std::shared_ptr<OnOffState> st) {
  double off_len = st->rng->exponential(st->mean_off_s);
  eq.schedule_in(secs(off_len), [&eq, st] { begin_on_period(eq, st); });
}

void schedule_next_packet(EventQueue& eq, std::shared_ptr<OnOffState> st) {
  double gap = st->rng->exponential(1.0 / st->on_rate_pps);
  SimTime at = eq.now() + secs(gap);
  if (at >= st->on_until) {
    eq.schedule(st->on_until, [&eq, st] { begin_off_period(eq, st); });
    return;
  }
  eq.schedule(at, [&eq, st] {
    auto bytes = static_cast<std::uint32_t>(st->rng->uniform(0.5, 1.5) * st->mean_pkt_bytes);
    st->emit(bytes);
    schedule_next_packet(eq, st);
  });
}

struct PacedState {
  std::shared_ptr<RngStream> rng;
  double rate_pps = 0;
  double mean_pkt_bytes = 1000;
  std::function<void(std::uint32_t)> emit;
};

void schedule_paced(EventQueue& eq, std::shared_ptr<PacedState> st) {
  double gap = st->rng->exponential(1.0 / st->rate_pps);
  eq.schedule_in(secs(gap), [&eq, st] {
    auto bytes = static_cast<std::uint32_t>(st->rng->uniform(0.5, 1.5) * st->mean_pkt_bytes);
    st->emit(bytes);
    schedule_paced(eq, st);
  });
}

}  // namespace

void BackgroundTraffic::spawn_onoff_flow(EventQueue& eq, std::shared_ptr<RngStream> rng,
                                         double overall_pps, double mean_on_s, double mean_off_s,
                                         double pareto_shape, double mean_pkt_bytes,
                                         std::function<void(std::uint32_t)> emit) {
  auto st = std::make_shared<OnOffState>();
  st->rng = std::move(rng);
  st->mean_on_s = mean_on_s;
  st->mean_off_s = mean_off_s;
  st->pareto_shape = pareto_shape;
  st->mean_pkt_bytes = mean_pkt_bytes;
  double duty = mean_on_s / (mean_on_s + mean_off_s);
  st->on_rate_pps = overall_pps / duty;
  st->emit = std::move(emit);
  begin_on_period(eq, st);
}

void BackgroundTraffic::spawn_paced_flow(EventQueue& eq, std::shared_ptr<RngStream> rng,
                                         double rate_pps, double mean_pkt_bytes,
                                         std::function<void(std::uint32_t)> emit) {
  auto st = std::make_shared<PacedState>();
  st->rng = std::move(rng);
  st->rate_pps = rate_pps;
  st->mean_pkt_bytes = mean_pkt_bytes;
  st->emit = std::move(emit);
  schedule_paced(eq, st);
}

BackgroundTraffic::BackgroundTraffic(EventQueue& eq, BuiltPath& path, const BackgroundSpec& spec,
                                     std::uint64_t seed, const std::string& name)
    : eq_(eq) {
  if (spec.load <= 0) return;

  Link* fwd = path.fwd.get();
  auto emit = [this, fwd](std::uint32_t bytes) {
    Segment filler;
    filler.kind = SegKind::Data;
    filler.wire_len_override = std::max<std::uint32_t>(bytes, kHeaderBytes);
    ++*datagrams_sent_;
    fwd->transmit(std::move(filler), [](Segment&&, SimTime) {});
  };

  auto rng = std::make_shared<RngStream>(seed, name + ".background");

  // Datagram component scaled to the requested share of capacity.
  double offered_bps = spec.load * fwd->config().capacity_bps;
  double allocated = 0.0;
  int flows = 0;
  while (allocated < offered_bps && flows < spec.max_flows) {
    double rate = rng->uniform(spec.burst_rate_min_pps, spec.burst_rate_max_pps);
    double mean_on = rng->uniform(spec.onoff_min_s, spec.onoff_max_s);
    double mean_off = rng->uniform(spec.onoff_min_s, spec.onoff_max_s);
    spawn_onoff_flow(eq, rng, rate, mean_on, mean_off, spec.pareto_shape, spec.mean_pkt_bytes,
                     emit);
    allocated += rate * spec.mean_pkt_bytes * 8.0;
    ++flows;
  }
  spawn_paced_flow(eq, rng, spec.paced_rate_pps, spec.mean_pkt_bytes, emit);

  // One greedy transport flow keeps the queue loaded and congestion-responsive.
  TransportConfig cfg;
  cfg.name = name + ".bg_greedy";
  greedy_src_ = std::make_unique<TransportConn>(eq, cfg);
  greedy_dst_ = std::make_unique<TransportConn>(eq, cfg);

  TransportConn* src = greedy_src_.get();
  TransportConn* dst = greedy_dst_.get();
  Link* rev = path.rev.get();
  src->set_tx([fwd, dst](Segment&& seg) {
    fwd->transmit(std::move(seg), [dst](Segment&& s, SimTime) { dst->on_segment(std::move(s)); });
  });
  dst->set_tx([rev, src](Segment&& seg) {
    rev->transmit(std::move(seg), [src](Segment&& s, SimTime) { src->on_segment(std::move(s)); });
  });
  src->set_source([this]() -> std::optional<TransportConn::Chunk> {
    TransportConn::Chunk chunk;
    chunk.conn_seq = greedy_next_seq_;
    chunk.payload = std::make_shared<const std::vector<std::uint8_t>>(1448, 0xb6);
    greedy_next_seq_ += 1448;
    return chunk;
  });
  dst->listen();
  src->connect();
}

void attach_background(EventQueue& eq, Network& net, const BackgroundSpec& spec,
                       std::uint64_t seed) {
  if (spec.load <= 0) return;
  for (std::size_t i = 0; i < net.paths.size(); ++i) {
    std::string name = "b" + std::to_string(i + 1);
    net.background.push_back(
        std::make_unique<BackgroundTraffic>(eq, net.paths[i], spec, seed, name));
  }
}

}  // namespace dfecsim

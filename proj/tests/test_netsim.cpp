#include <doctest.h>

#include <vector>

#include "dfecsim/background.hpp"
#include "dfecsim/event_queue.hpp"
#include "dfecsim/link.hpp"
#include "dfecsim/topology.hpp"

using namespace dfecsim;

namespace {

Segment data_segment(std::size_t payload_len) {
  Segment s;
  s.kind = SegKind::Data;
  s.payload.assign(payload_len, 0xaa);
  return s;
}

}  // namespace

TEST_CASE("event queue: time order with FIFO ties") {
  EventQueue eq;
  std::vector<int> fired;
  eq.schedule(msec(10), [&] { fired.push_back(2); });
  eq.schedule(msec(5), [&] { fired.push_back(1); });
  eq.schedule(msec(10), [&] { fired.push_back(3); });
  eq.schedule(msec(10), [&] { fired.push_back(4); });
  while (eq.run_next()) {
  }
  CHECK(fired == std::vector<int>{1, 2, 3, 4});
  CHECK(eq.now() == msec(10));
}

TEST_CASE("link: serialization plus propagation arithmetic") {
  EventQueue eq;
  LinkConfig cfg;
  cfg.capacity_bps = 20e6;
  cfg.prop_delay = msec(12.5);
  Link link(eq, cfg, RngStream(1, "t"));

  SimTime arrival = -1;
  link.transmit(data_segment(1512 - kHeaderBytes),
                [&](Segment&&, SimTime t) { arrival = t; });
  while (eq.run_next()) {
  }
  // 1512 bytes at 20 Mb/s = 604.8 us, plus 12.5 ms propagation.
  CHECK(arrival == usec(604.8) + msec(12.5));
}

TEST_CASE("link: queue bound tail-drops, counted separately from model loss") {
  EventQueue eq;
  LinkConfig cfg;
  cfg.capacity_bps = 1e6;
  cfg.prop_delay = msec(1);
  cfg.queue_bytes = 3000;  // room for ~2 frames of 1512
  Link link(eq, cfg, RngStream(1, "t"));

  int delivered = 0;
  for (int i = 0; i < 10; ++i) {
    link.transmit(data_segment(1448), [&](Segment&&, SimTime) { ++delivered; });
  }
  while (eq.run_next()) {
  }
  const auto& c = link.counters();
  CHECK(c.submitted == 10);
  CHECK(c.queue_dropped > 0);
  CHECK(c.model_dropped == 0);
  CHECK(c.delivered == static_cast<std::uint64_t>(delivered));
  CHECK(c.delivered + c.queue_dropped == 10);  // conservation
}

TEST_CASE("link: IID p=1 drops everything") {
  EventQueue eq;
  LinkConfig cfg;
  cfg.loss = LossModel::iid(1.0);
  Link link(eq, cfg, RngStream(1, "t"));
  int delivered = 0;
  for (int i = 0; i < 50; ++i) {
    link.transmit(data_segment(100), [&](Segment&&, SimTime) { ++delivered; });
  }
  while (eq.run_next()) {
  }
  CHECK(delivered == 0);
  CHECK(link.counters().model_dropped == 50);
}

TEST_CASE("link: FIFO order is preserved") {
  EventQueue eq;
  LinkConfig cfg;
  cfg.capacity_bps = 5e6;
  Link link(eq, cfg, RngStream(1, "t"));
  std::vector<std::uint64_t> order;
  for (std::uint64_t i = 0; i < 20; ++i) {
    Segment s = data_segment(400);
    s.seq = i;
    link.transmit(std::move(s), [&](Segment&& got, SimTime) { order.push_back(got.seq); });
  }
  while (eq.run_next()) {
  }
  for (std::size_t i = 1; i < order.size(); ++i) CHECK(order[i - 1] < order[i]);
}

TEST_CASE("link conservation under load and loss") {
  EventQueue eq;
  LinkConfig cfg;
  cfg.capacity_bps = 2e6;
  cfg.queue_bytes = 6000;
  cfg.loss = LossModel::iid(0.2);
  Link link(eq, cfg, RngStream(7, "t"));
  std::uint64_t delivered = 0;
  for (int i = 0; i < 500; ++i) {
    link.transmit(data_segment(1000), [&](Segment&&, SimTime) { ++delivered; });
    if (i % 5 == 4) {
      while (eq.run_next()) {
      }
    }
  }
  while (eq.run_next()) {
  }
  const auto& c = link.counters();
  CHECK(c.submitted == 500);
  CHECK(c.delivered == delivered);
  CHECK(c.delivered + c.model_dropped + c.queue_dropped == c.submitted);
}

TEST_CASE("gilbert_elliot_params: stationary algebra") {
  auto p = gilbert_elliot_params(0.03, 2.0);
  CHECK(p.p_bad_to_good == doctest::Approx(0.5));
  CHECK(p.p_good_to_bad == doctest::Approx(0.015 / 0.97));
  // Stationary loss = target by construction.
  double stationary = p.p_good_to_bad / (p.p_good_to_bad + p.p_bad_to_good);
  CHECK(stationary == doctest::Approx(0.03));

  CHECK_THROWS_AS(gilbert_elliot_params(0.0, 2.0), std::invalid_argument);
  CHECK_THROWS_AS(gilbert_elliot_params(1.0, 2.0), std::invalid_argument);
  CHECK_THROWS_AS(gilbert_elliot_params(0.99, 1.0), std::invalid_argument);
}

TEST_CASE("loss calibration: Monte Carlo over a million draws") {
  SUBCASE("IID rates") {
    for (double p : {0.01, 0.03, 0.05}) {
      LossProcess proc(LossModel::iid(p), RngStream(11, "iid_mc"));
      std::uint64_t drops = 0;
      const int n = 1'000'000;
      for (int i = 0; i < n; ++i) {
        if (proc.should_drop()) ++drops;
      }
      double rate = static_cast<double>(drops) / n;
      CHECK(rate == doctest::Approx(p).epsilon(0.05));
    }
  }
  SUBCASE("Gilbert-Elliot rate and burst length") {
    LossProcess proc(LossModel::gilbert_elliot(0.03, 2.0), RngStream(13, "ge_mc"));
    const int n = 1'000'000;
    std::uint64_t drops = 0;
    std::uint64_t bursts = 0;
    bool in_burst = false;
    for (int i = 0; i < n; ++i) {
      bool d = proc.should_drop();
      if (d) {
        ++drops;
        if (!in_burst) ++bursts;
      }
      in_burst = d;
    }
    double rate = static_cast<double>(drops) / n;
    double mean_burst = static_cast<double>(drops) / static_cast<double>(bursts);
    CHECK(rate == doctest::Approx(0.03).epsilon(0.10));
    CHECK(mean_burst == doctest::Approx(2.0).epsilon(0.15));
  }
  SUBCASE("burst 1 degenerates to IID") {
    double p = 0.05;
    LossProcess proc(LossModel::gilbert_elliot(p, 1.0 + 1e-12), RngStream(17, "ge1_mc"));
    std::uint64_t drops = 0;
    const int n = 1'000'000;
    for (int i = 0; i < n; ++i) {
      if (proc.should_drop()) ++drops;
    }
    CHECK(static_cast<double>(drops) / n == doctest::Approx(p).epsilon(0.05));
  }
}

TEST_CASE("scripted loss drops exactly the listed transmissions") {
  EventQueue eq;
  LinkConfig cfg;
  cfg.loss = LossModel::scripted({2, 5});
  Link link(eq, cfg, RngStream(1, "t"));
  std::vector<std::uint64_t> got;
  for (std::uint64_t i = 0; i < 8; ++i) {
    Segment s = data_segment(100);
    s.seq = i;
    link.transmit(std::move(s), [&](Segment&& g, SimTime) { got.push_back(g.seq); });
    while (eq.run_next()) {
    }
  }
  CHECK(got == std::vector<std::uint64_t>{0, 1, 3, 4, 6, 7});
}

TEST_CASE("build_topology: Table-style parameters and single-path mode") {
  EventQueue eq;
  ScenarioTopology topo;
  topo.b1 = {20e6, 0.025, LossModel::iid(0.03), {}, 0, false};
  topo.b2 = {10e6, 0.100, LossModel::none(), {}, 0, false};

  SUBCASE("two bottlenecks") {
    Network net = build_topology(eq, topo, 1);
    REQUIRE(net.paths.size() == 2);
    CHECK(net.paths[0].fwd->config().capacity_bps == doctest::Approx(20e6));
    CHECK(net.paths[0].fwd->config().prop_delay == msec(12.5));
    CHECK(net.paths[1].fwd->config().prop_delay == msec(50));
    // Default queue: one BDP of the link round trip.
    CHECK(net.paths[0].fwd->queue_limit_bytes() ==
          static_cast<std::uint64_t>(20e6 * 0.025 / 8.0));
  }
  SUBCASE("single path builds only B1") {
    topo.single_path = true;
    Network net = build_topology(eq, topo, 1);
    CHECK(net.paths.size() == 1);
  }
  SUBCASE("satellite-like override accepted") {
    topo.b2 = {1.0e6, 0.500, LossModel::iid(0.08), {}, 0, false};
    Network net = build_topology(eq, topo, 1);
    CHECK(net.paths[1].fwd->config().capacity_bps == doctest::Approx(1.0e6));
  }
}

TEST_CASE("determinism: identical (scenario, seed) gives identical traces") {
  auto trace_run = [](std::uint64_t seed) {
    EventQueue eq;
    LinkConfig cfg;
    cfg.capacity_bps = 2e6;
    cfg.loss = LossModel::iid(0.1);
    Link link(eq, cfg, RngStream(seed, "d"));
    std::vector<SimTime> arrivals;
    for (int i = 0; i < 200; ++i) {
      link.transmit(data_segment(500), [&](Segment&&, SimTime t) { arrivals.push_back(t); });
    }
    while (eq.run_next()) {
    }
    return arrivals;
  };
  CHECK(trace_run(5) == trace_run(5));
  CHECK(trace_run(5) != trace_run(6));
}

TEST_CASE("background traffic: disabled at load zero") {
  EventQueue eq;
  ScenarioTopology topo;
  topo.single_path = true;
  Network net = build_topology(eq, topo, 1);
  BackgroundSpec spec;
  spec.load = 0.0;
  attach_background(eq, net, spec, 1);
  CHECK(net.background.empty());
  CHECK(eq.empty());
}

TEST_CASE("background on/off flow: long-run mean matches the analytic rate") {
  EventQueue eq;
  std::uint64_t packets = 0;
  auto rng = std::make_shared<RngStream>(3, "bg_mc");
  BackgroundTraffic::spawn_onoff_flow(eq, rng, 500.0, 2.0, 2.0, 1.5, 1000.0,
                                      [&](std::uint32_t) { ++packets; });
  const double horizon_s = 400.0;
  eq.run_while([] { return true; }, secs(horizon_s));
  double expected = 500.0 * horizon_s;
  CHECK(static_cast<double>(packets) == doctest::Approx(expected).epsilon(0.20));
}

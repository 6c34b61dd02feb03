#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "dfecsim/event_queue.hpp"
#include "dfecsim/metrics.hpp"
#include "dfecsim/rng.hpp"
#include "dfecsim/segment.hpp"
#include "dfecsim/sim_time.hpp"

namespace dfecsim {

struct GilbertElliotParams {
  double p_good_to_bad = 0.0;
  double p_bad_to_good = 1.0;
  double drop_in_bad = 1.0;
};

// Two-state chain with drop probability 1 in Bad and 0 in Good, parameterised
// by stationary loss rate and mean burst length (in packets). Throws on an
// infeasible combination.
GilbertElliotParams gilbert_elliot_params(double target_loss, double mean_burst);

struct LossModel {
  enum class Kind : std::uint8_t { None, Iid, GilbertElliot, Scripted };

  Kind kind = Kind::None;
  double iid_p = 0.0;
  GilbertElliotParams ge;
  std::vector<std::uint64_t> scripted_drops;  // 0-based transmit indices

  static LossModel none() { return {}; }
  static LossModel iid(double p) {
    LossModel m;
    m.kind = Kind::Iid;
    m.iid_p = p;
    return m;
  }
  static LossModel gilbert_elliot(double target_loss, double mean_burst) {
    LossModel m;
    m.kind = Kind::GilbertElliot;
    m.ge = gilbert_elliot_params(target_loss, mean_burst);
    return m;
  }
  static LossModel scripted(std::vector<std::uint64_t> drops) {
    LossModel m;
    m.kind = Kind::Scripted;
    m.scripted_drops = std::move(drops);
    return m;
  }
};

// Stateful per-direction loss process; one draw per dequeued segment.
class LossProcess {
 public:
  LossProcess() = default;
  LossProcess(const LossModel& model, RngStream rng);

  bool should_drop();

 private:
  LossModel model_;
  RngStream rng_;
  bool in_bad_ = false;
  std::uint64_t index_ = 0;
};

struct LinkConfig {
  std::string name = "link";
  double capacity_bps = 20e6;
  SimTime prop_delay = msec(12.5);   // one-way
  std::uint64_t queue_bytes = 0;     // 0 = one bandwidth-delay product
  LossModel loss;
  bool strip_fec_option = false;
};

// Unidirectional store-and-forward link: byte-bounded FIFO tail-drop queue,
// fixed serialization rate, propagation delay, independent loss draw at
// dequeue. Model drops and queue drops are counted separately.
class Link {
 public:
  using Sink = std::function<void(Segment&&, SimTime)>;

  Link(EventQueue& eq, LinkConfig cfg, RngStream loss_rng);

  void transmit(Segment&& seg, Sink sink);

  struct Counters {
    std::uint64_t submitted = 0;
    std::uint64_t delivered = 0;
    std::uint64_t model_dropped = 0;
    std::uint64_t queue_dropped = 0;
    std::uint64_t bytes_delivered = 0;
  };

  const Counters& counters() const { return counters_; }
  const LinkConfig& config() const { return cfg_; }
  void set_recorder(SeriesRecorder* rec) { recorder_ = rec; }
  std::uint64_t queue_limit_bytes() const { return queue_limit_; }
  SimTime serialization_delay(std::size_t bytes) const;

 private:
  void start_service(Segment seg, Sink sink, bool was_queued, std::size_t size);

  EventQueue& eq_;
  LinkConfig cfg_;
  LossProcess loss_;
  std::uint64_t queue_limit_;
  std::uint64_t queued_bytes_ = 0;
  SimTime serializer_free_at_ = 0;
  Counters counters_;
  SeriesRecorder* recorder_ = nullptr;
};

}  // namespace dfecsim

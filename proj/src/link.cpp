#include "dfecsim/link.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dfecsim {

GilbertElliotParams gilbert_elliot_params(double target_loss, double mean_burst) {
  if (!(target_loss > 0.0 && target_loss < 1.0)) {
    throw std::invalid_argument("gilbert_elliot_params: target_loss must be in (0,1)");
  }
  if (mean_burst < 1.0) {
    throw std::invalid_argument("gilbert_elliot_params: mean_burst must be >= 1");
  }
  GilbertElliotParams p;
  p.p_bad_to_good = 1.0 / mean_burst;
  p.p_good_to_bad = target_loss * p.p_bad_to_good / (1.0 - target_loss);
  p.drop_in_bad = 1.0;
  if (p.p_good_to_bad >= 1.0) {
    throw std::invalid_argument("gilbert_elliot_params: infeasible loss/burst combination");
  }
  return p;
}

LossProcess::LossProcess(const LossModel& model, RngStream rng)
    : model_(model), rng_(rng) {
  if (model_.kind == LossModel::Kind::GilbertElliot) {
    // Start from the stationary distribution so short runs are unbiased.
    double p_bad = model_.ge.p_good_to_bad / (model_.ge.p_good_to_bad + model_.ge.p_bad_to_good);
    in_bad_ = rng_.chance(p_bad);
  }
  std::sort(model_.scripted_drops.begin(), model_.scripted_drops.end());
}

bool LossProcess::should_drop() {
  std::uint64_t idx = index_++;
  switch (model_.kind) {
    case LossModel::Kind::None:
      return false;
    case LossModel::Kind::Iid:
      return rng_.chance(model_.iid_p);
    case LossModel::Kind::GilbertElliot: {
      bool drop = in_bad_ && rng_.chance(model_.ge.drop_in_bad);
      if (in_bad_) {
        if (rng_.chance(model_.ge.p_bad_to_good)) in_bad_ = false;
      } else {
        if (rng_.chance(model_.ge.p_good_to_bad)) in_bad_ = true;
      }
      return drop;
    }
    case LossModel::Kind::Scripted:
      return std::binary_search(model_.scripted_drops.begin(), model_.scripted_drops.end(), idx);
  }
  return false;
}

Link::Link(EventQueue& eq, LinkConfig cfg, RngStream loss_rng)
    : eq_(eq), cfg_(std::move(cfg)), loss_(cfg_.loss, loss_rng) {
  if (cfg_.capacity_bps <= 0) throw std::invalid_argument("link: capacity must be positive");
  queue_limit_ = cfg_.queue_bytes;
  if (queue_limit_ == 0) {
    // One bandwidth-delay product at the link's own round-trip, with a small
    // floor so slow links can still hold a few frames.
    double bdp = cfg_.capacity_bps * to_seconds(2 * cfg_.prop_delay) / 8.0;
    queue_limit_ = std::max<std::uint64_t>(static_cast<std::uint64_t>(bdp), 3000);
  }
}

SimTime Link::serialization_delay(std::size_t bytes) const {
  return static_cast<SimTime>(
      std::llround(static_cast<double>(bytes) * 8.0 / cfg_.capacity_bps * kNsPerSec));
}

void Link::transmit(Segment&& seg, Sink sink) {
  ++counters_.submitted;
  if (cfg_.strip_fec_option && (seg.fec_offer || seg.fec_flag)) {
    seg.fec_offer = false;
    seg.fec_flag = false;
    seg.fec_stripped = true;
  }

  const std::size_t size = seg.wire_size();
  const SimTime now = eq_.now();
  if (now >= serializer_free_at_) {
    start_service(std::move(seg), std::move(sink), false, size);
    return;
  }
  if (queued_bytes_ + size > queue_limit_) {
    ++counters_.queue_dropped;
    return;
  }
  queued_bytes_ += size;
  // FIFO: service slots are handed out in submit order, so the start time can
  // be computed now; the loss draw happens when service actually begins.
  SimTime start = serializer_free_at_;
  serializer_free_at_ = start + serialization_delay(size);
  eq_.schedule(start, [this, seg = std::move(seg), sink = std::move(sink), size]() mutable {
    start_service(std::move(seg), std::move(sink), true, size);
  });
}

void Link::start_service(Segment seg, Sink sink, bool was_queued, std::size_t size) {
  if (was_queued) {
    queued_bytes_ -= size;
  } else {
    serializer_free_at_ = eq_.now() + serialization_delay(size);
  }
  if (loss_.should_drop()) {
    ++counters_.model_dropped;
    return;
  }
  SimTime arrival = eq_.now() + serialization_delay(size) + cfg_.prop_delay;
  eq_.schedule(arrival, [this, seg = std::move(seg), sink = std::move(sink), size]() mutable {
    ++counters_.delivered;
    counters_.bytes_delivered += size;
    if (recorder_) {
      recorder_->record(eq_.now(), cfg_.name + ".bytes_delivered",
                        static_cast<double>(counters_.bytes_delivered));
    }
    sink(std::move(seg), eq_.now());
  });
}

}  // namespace dfecsim

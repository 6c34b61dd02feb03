#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <vector>

#include "dfecsim/sim_time.hpp"

namespace dfecsim {

// Discrete-event scheduler. Events fire in nondecreasing time; events with
// equal timestamps fire in insertion order. Strictly single-threaded.
class EventQueue {
 public:
  using Callback = std::function<void()>;

  void schedule(SimTime at, Callback cb) {
    if (at < now_) at = now_;
    heap_.push(Event{at, next_id_++, std::move(cb)});
  }

  void schedule_in(SimTime delay, Callback cb) { schedule(now_ + delay, std::move(cb)); }

  SimTime now() const { return now_; }
  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }

  // Runs one event; returns false when the queue is empty.
  bool run_next() {
    if (heap_.empty()) return false;
    Event ev = std::move(const_cast<Event&>(heap_.top()));
    heap_.pop();
    now_ = ev.at;
    ev.cb();
    return true;
  }

  // Runs until the predicate goes false, the clock passes `horizon`, or the
  // queue drains. The event at `horizon` itself still runs.
  template <typename Pred>
  void run_while(Pred&& keep_going, SimTime horizon) {
    while (!heap_.empty() && keep_going() && heap_.top().at <= horizon) {
      run_next();
    }
  }

  void run_until(SimTime horizon) {
    run_while([] { return true; }, horizon);
    if (now_ < horizon) now_ = horizon;
  }

 private:
  struct Event {
    SimTime at;
    std::uint64_t id;
    Callback cb;
    bool operator>(const Event& o) const {
      if (at != o.at) return at > o.at;
      return id > o.id;
    }
  };

  std::priority_queue<Event, std::vector<Event>, std::greater<>> heap_;
  SimTime now_ = 0;
  std::uint64_t next_id_ = 0;
};

}  // namespace dfecsim

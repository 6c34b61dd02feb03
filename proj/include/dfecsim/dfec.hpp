#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dfecsim/sim_time.hpp"

namespace dfecsim {

// Tunables of the dynamic FEC-ratio controller. The ratio is the number of
// data segments covered by one parity segment; the controller steers it so
// the residual loss (retransmissions surviving FEC) tracks `target`.
struct DfecParams {
  double target = 0.01;      // residual-loss tolerance
  double delta = 0.33;       // multiplicative correction rate
  int n_periods = 2;         // periods averaged per ratio update
  int period_rtts = 3;       // measurement period length in RTTs
  double ratio_min = 4.0;
  double ratio_max = 256.0;
  double start_ratio = 9.0;

  void validate() const;  // throws std::invalid_argument on bad combinations
};

// Per-connection adaptation state machine. Residual loss is measured over
// periods of period_rtts * SRTT from the sender's cumulative transmission
// counters; every n_periods samples the ratio moves by a factor (1 +/- delta)
// and the sample window starts fresh.
class DfecController {
 public:
  explicit DfecController(DfecParams params);

  double ratio() const { return ratio_; }
  const DfecParams& params() const { return params_; }

  // Integer block size for the wire: ratio rounded half-to-even, clamped.
  std::uint32_t effective_block_size() const;

  // Opens the first measurement period. Counters are cumulative totals of
  // first transmissions and retransmissions at this instant.
  void start(SimTime now, SimTime srtt, std::uint64_t sent_total, std::uint64_t retransmitted);

  // Closes the open period if its deadline passed, records a residual sample
  // (skipping empty or degenerate periods), applies a ratio update once
  // n_periods samples accumulated, and opens the next period. Returns the new
  // ratio when an update fired.
  std::optional<double> on_period_tick(SimTime now, SimTime srtt, std::uint64_t sent_total,
                                       std::uint64_t retransmitted);

  SimTime period_deadline() const { return period_deadline_; }
  bool started() const { return started_; }

  // History of (time, ratio) updates, including the initial ratio at start().
  const std::vector<std::pair<SimTime, double>>& updates() const { return updates_; }
  std::size_t update_count() const { return updates_.empty() ? 0 : updates_.size() - 1; }

  const std::vector<double>& history() const { return residual_history_; }

  // Residual_i = retransmit / (total - retransmit); requires total > retransmit.
  static double residual_loss(std::uint64_t retransmit, std::uint64_t total);

  // Arithmetic mean; requires a non-empty history.
  static double average_residual(std::span<const double> history);

  // Applies one multiplicative step from the mean residual and clears the
  // sample window. Exposed for direct driving in tests.
  double apply_update(double mean_residual, SimTime now);

 private:
  DfecParams params_;
  double ratio_;
  std::vector<double> residual_history_;
  std::uint64_t period_open_sent_ = 0;
  std::uint64_t period_open_rtx_ = 0;
  SimTime period_deadline_ = 0;
  bool started_ = false;
  std::vector<std::pair<SimTime, double>> updates_;
};

// Optional destination-keyed ratio cache so short flows can start from the
// ratio a previous connection to the same destination converged to.
class RatioCache {
 public:
  void put(const std::string& destination, double ratio) { cache_[destination] = ratio; }
  std::optional<double> get(const std::string& destination) const {
    auto it = cache_.find(destination);
    if (it == cache_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::map<std::string, double> cache_;
};

}  // namespace dfecsim

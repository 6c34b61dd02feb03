#include "dfecsim/dfec.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dfecsim {

void DfecParams::validate() const {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("dfec: delta must be in (0,1)");
  if (!(target > 0.0 && target < 1.0)) throw std::invalid_argument("dfec: target must be in (0,1)");
  if (ratio_min < 1.0) throw std::invalid_argument("dfec: ratio_min must be >= 1");
  if (!(ratio_min <= start_ratio && start_ratio <= ratio_max)) {
    throw std::invalid_argument("dfec: start_ratio must lie in [ratio_min, ratio_max]");
  }
  if (n_periods < 1) throw std::invalid_argument("dfec: n_periods must be >= 1");
  if (period_rtts < 1) throw std::invalid_argument("dfec: period_rtts must be >= 1");
}

DfecController::DfecController(DfecParams params) : params_(params), ratio_(params.start_ratio) {
  params_.validate();
}

std::uint32_t DfecController::effective_block_size() const {
  double clamped = std::clamp(ratio_, params_.ratio_min, params_.ratio_max);
  double floor = std::floor(clamped);
  double frac = clamped - floor;
  auto k = static_cast<std::uint64_t>(floor);
  if (frac > 0.5 || (frac == 0.5 && (k % 2) == 1)) ++k;  // round half to even
  k = std::clamp<std::uint64_t>(k, static_cast<std::uint64_t>(params_.ratio_min),
                                static_cast<std::uint64_t>(params_.ratio_max));
  return static_cast<std::uint32_t>(k);
}

void DfecController::start(SimTime now, SimTime srtt, std::uint64_t sent_total,
                           std::uint64_t retransmitted) {
  started_ = true;
  period_open_sent_ = sent_total;
  period_open_rtx_ = retransmitted;
  period_deadline_ = now + params_.period_rtts * srtt;
  updates_.emplace_back(now, ratio_);
}

double DfecController::residual_loss(std::uint64_t retransmit, std::uint64_t total) {
  if (total <= retransmit) {
    throw std::domain_error("residual_loss: degenerate period (total <= retransmit)");
  }
  return static_cast<double>(retransmit) / static_cast<double>(total - retransmit);
}

double DfecController::average_residual(std::span<const double> history) {
  if (history.empty()) throw std::invalid_argument("average_residual: empty history");
  double sum = 0.0;
  for (double v : history) sum += v;
  return sum / static_cast<double>(history.size());
}

double DfecController::apply_update(double mean_residual, SimTime now) {
  double factor = mean_residual > params_.target ? (1.0 - params_.delta) : (1.0 + params_.delta);
  ratio_ = std::clamp(ratio_ * factor, params_.ratio_min, params_.ratio_max);
  residual_history_.clear();
  updates_.emplace_back(now, ratio_);
  return ratio_;
}

std::optional<double> DfecController::on_period_tick(SimTime now, SimTime srtt,
                                                     std::uint64_t sent_total,
                                                     std::uint64_t retransmitted) {
  if (!started_ || now < period_deadline_) return std::nullopt;

  std::uint64_t total = sent_total - period_open_sent_;
  std::uint64_t rtx = retransmitted - period_open_rtx_;

  std::optional<double> updated;
  // Empty and degenerate periods (possible under pure-RTO storms) yield no
  // sample rather than a pathological 100% reading.
  if (total > 0 && total > rtx) {
    residual_history_.push_back(residual_loss(rtx, total));
    if (residual_history_.size() >= static_cast<std::size_t>(params_.n_periods)) {
      updated = apply_update(average_residual(residual_history_), now);
    }
  }

  period_open_sent_ = sent_total;
  period_open_rtx_ = retransmitted;
  period_deadline_ = now + params_.period_rtts * srtt;  // SRTT snapshot at open
  return updated;
}

}  // namespace dfecsim

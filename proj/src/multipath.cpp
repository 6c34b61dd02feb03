#include "dfecsim/multipath.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace dfecsim {

int pick_min_rtt_subflow(std::span<const SubflowView> subflows) {
  int best = -1;
  for (std::size_t i = 0; i < subflows.size(); ++i) {
    if (!subflows[i].can_accept) continue;
    if (best < 0 || subflows[i].srtt < subflows[static_cast<std::size_t>(best)].srtt) {
      best = static_cast<int>(i);
    }
  }
  return best;
}

std::vector<double> subflow_utilization(std::span<const ConnCounters> counters) {
  std::uint64_t total = 0;
  for (const ConnCounters& c : counters) total += c.bytes_first_tx;
  if (total == 0) throw std::invalid_argument("subflow_utilization: zero-byte run");
  std::vector<double> out;
  out.reserve(counters.size());
  for (const ConnCounters& c : counters) {
    out.push_back(static_cast<double>(c.bytes_first_tx) / static_cast<double>(total));
  }
  return out;
}

MultipathSender::MultipathSender(EventQueue& eq, MultipathConfig cfg,
                                 std::vector<TransportConn*> subflows, std::uint64_t stream_salt)
    : eq_(eq),
      cfg_(cfg),
      subflows_(std::move(subflows)),
      stream_(stream_salt),
      mappings_(subflows_.size()),
      reinject_(subflows_.size()) {}

void MultipathSender::wire() {
  for (std::size_t i = 0; i < subflows_.size(); ++i) {
    TransportConn* sf = subflows_[i];
    sf->set_source([this, i] { return grant(i); });
    sf->set_on_space([this, i] { on_subflow_space(i); });
    sf->set_on_rto_remap(
        [this, i](std::uint64_t conn_seq, std::uint32_t len) { on_subflow_rto(i, conn_seq, len); });
  }
}

void MultipathSender::app_write(std::uint64_t nbytes) {
  queue_bytes_ += nbytes;
  pump();
}

void MultipathSender::close_write() {
  write_closed_ = true;
  maybe_close_subflows();
  pump();
}

std::uint64_t MultipathSender::outstanding_mapped_bytes() const {
  std::uint64_t total = 0;
  for (const auto& per_subflow : mappings_) {
    for (const auto& [seq, m] : per_subflow) total += m.len;
  }
  return total;
}

std::optional<TransportConn::Chunk> MultipathSender::grant(std::size_t idx) {
  // Reinjected chunks are bound to this subflow and bypass the scheduler.
  if (!reinject_[idx].empty()) {
    TransportConn::Chunk chunk = std::move(reinject_[idx].front());
    reinject_[idx].pop_front();
    mappings_[idx][subflows_[idx]->snd_nxt()] = {chunk.conn_seq,
                                                 static_cast<std::uint32_t>(chunk.payload->size())};
    return chunk;
  }

  if (queue_bytes_ == 0) return std::nullopt;

  std::vector<SubflowView> views;
  views.reserve(subflows_.size());
  for (TransportConn* sf : subflows_) {
    views.push_back({sf->srtt(), sf->can_accept_chunk()});
  }
  int winner = pick_min_rtt_subflow(views);
  if (winner < 0 || static_cast<std::size_t>(winner) != idx) return std::nullopt;

  std::uint32_t len = static_cast<std::uint32_t>(std::min<std::uint64_t>(cfg_.mss, queue_bytes_));
  if (outstanding_mapped_bytes() + len > cfg_.conn_rwnd_bytes) return std::nullopt;

  TransportConn::Chunk chunk;
  chunk.conn_seq = next_conn_seq_;
  chunk.payload =
      std::make_shared<const std::vector<std::uint8_t>>(stream_.slice(next_conn_seq_, len));
  mappings_[idx][subflows_[idx]->snd_nxt()] = {next_conn_seq_, len};
  if (recorder_) recorder_->record(eq_.now(), "sched.subflow", static_cast<double>(idx));
  next_conn_seq_ += len;
  queue_bytes_ -= len;
  maybe_close_subflows();
  return chunk;
}

void MultipathSender::pump() {
  // One pass in SRTT order: once the fastest subflow is full, grants start
  // flowing to the next one.
  std::vector<std::size_t> order(subflows_.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [this](std::size_t a, std::size_t b) {
    return subflows_[a]->srtt() < subflows_[b]->srtt();
  });
  for (std::size_t i : order) subflows_[i]->notify_source_ready();
}

void MultipathSender::on_subflow_space(std::size_t idx) {
  // Trim settled mappings: anything cumulatively acknowledged on the subflow.
  auto& map = mappings_[idx];
  std::uint64_t una = subflows_[idx]->snd_una();
  while (!map.empty()) {
    auto it = map.begin();
    if (it->first + it->second.len > una) break;
    map.erase(it);
  }
  pump();
}

void MultipathSender::on_subflow_rto(std::size_t idx, std::uint64_t conn_seq, std::uint32_t len) {
  // Reinjection target: the lowest-RTT subflow with window space, excluding
  // the one that timed out. The old mapping is invalidated; the subflow's own
  // retransmission may still deliver, and the receiver deduplicates.
  std::vector<SubflowView> views;
  views.reserve(subflows_.size());
  for (std::size_t j = 0; j < subflows_.size(); ++j) {
    views.push_back({subflows_[j]->srtt(), j != idx && subflows_[j]->can_reinject()});
  }
  int target = pick_min_rtt_subflow(views);
  if (target < 0) return;

  auto& map = mappings_[idx];
  for (auto it = map.begin(); it != map.end(); ++it) {
    if (it->second.conn_seq == conn_seq) {
      map.erase(it);
      break;
    }
  }

  TransportConn::Chunk chunk;
  chunk.conn_seq = conn_seq;
  chunk.payload = std::make_shared<const std::vector<std::uint8_t>>(stream_.slice(conn_seq, len));
  reinject_[static_cast<std::size_t>(target)].push_back(std::move(chunk));
  ++reinjections_;
  subflows_[static_cast<std::size_t>(target)]->notify_source_ready();
}

void MultipathSender::maybe_close_subflows() {
  if (subflows_closed_ || close_pending_ || !write_closed_ || queue_bytes_ > 0) return;
  // Deferred one event: a grant that drains the queue runs inside a subflow
  // tick, and close_write must not re-enter it.
  close_pending_ = true;
  eq_.schedule(eq_.now(), [this] {
    close_pending_ = false;
    if (subflows_closed_ || !write_closed_ || queue_bytes_ > 0) return;
    subflows_closed_ = true;
    for (TransportConn* sf : subflows_) sf->close_write();
  });
}

MultipathReceiver::MultipathReceiver(EventQueue& eq, std::size_t n_subflows) : eq_(eq) {
  (void)n_subflows;
}

void MultipathReceiver::on_subflow_deliver(std::size_t idx, std::uint64_t conn_seq,
                                           const std::vector<std::uint8_t>& bytes) {
  (void)idx;
  if (conn_seq + bytes.size() <= rcv_nxt_) {
    ++duplicates_;
    return;
  }
  auto existing = conn_ofo_.find(conn_seq);
  if (existing != conn_ofo_.end()) {
    ++duplicates_;
    if (existing->second != bytes) ++integrity_faults_;
    return;
  }
  conn_ofo_.emplace(conn_seq, bytes);
  ofo_bytes_ += bytes.size();

  while (!conn_ofo_.empty()) {
    auto it = conn_ofo_.begin();
    if (it->first != rcv_nxt_) break;
    rcv_nxt_ += it->second.size();
    ofo_bytes_ -= it->second.size();
    if (app_sink_) app_sink_(it->first, it->second);
    conn_ofo_.erase(it);
  }
  ofo_tracker_.update(eq_.now(), ofo_bytes_);
  if (recorder_) recorder_->record(eq_.now(), "conn.ofo_bytes", static_cast<double>(ofo_bytes_));
}

}  // namespace dfecsim

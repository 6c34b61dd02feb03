#include "dfecsim/transport.hpp"

#include <algorithm>
#include <cmath>

namespace dfecsim {

namespace {

constexpr double kMinSsthresh = 2.0;

}  // namespace

double CcCoupler::ca_increment(const TransportConn* self) const {
  double total_cwnd = 0.0;
  double best = 0.0;
  double denom = 0.0;
  for (const TransportConn* c : conns_) {
    if (!c->established() || c->srtt() <= 0) continue;
    double rtt = to_seconds(c->srtt());
    total_cwnd += c->cwnd();
    best = std::max(best, c->cwnd() / (rtt * rtt));
    denom += c->cwnd() / rtt;
  }
  if (total_cwnd <= 0.0 || denom <= 0.0 || self->cwnd() <= 0.0) {
    return self->cwnd() > 0 ? 1.0 / self->cwnd() : 0.0;
  }
  double alpha = total_cwnd * best / (denom * denom);
  return std::min(alpha / total_cwnd, 1.0 / self->cwnd());
}

TransportConn::TransportConn(EventQueue& eq, TransportConfig cfg)
    : eq_(eq), cfg_(std::move(cfg)), rto_(cfg_.rto_initial) {
  cwnd_ = cfg_.iw_segments;
  ssthresh_ = cfg_.initial_ssthresh;
  cfg_.dfec.validate();
}

// ---------------------------------------------------------------------------
// Handshake

void TransportConn::connect() {
  is_initiator_ = true;
  state_ = State::SynSent;
  send_syn();
}

void TransportConn::listen() { state_ = State::Idle; }

void TransportConn::send_syn() {
  syn_sent_at_ = eq_.now();
  Segment syn;
  syn.kind = SegKind::Syn;
  syn.conn_id = cfg_.conn_id;
  syn.fec_offer = cfg_.want_fec;
  emit_segment(std::move(syn));

  std::uint64_t gen = ++hs_timer_gen_;
  SimTime backoff = cfg_.rto_initial << std::min(hs_tries_, 6);
  ++hs_tries_;
  eq_.schedule_in(backoff, [this, gen] {
    if (gen != hs_timer_gen_ || state_ != State::SynSent) return;
    if (hs_tries_ >= kMaxHandshakeTries) {
      abort_connection(false);
      return;
    }
    send_syn();
  });
}

void TransportConn::send_synack() {
  synack_sent_at_ = eq_.now();
  Segment sa;
  sa.kind = SegKind::SynAck;
  sa.conn_id = cfg_.conn_id;
  sa.fec_offer = fec_enabled_;
  emit_segment(std::move(sa));
}

void TransportConn::become_established() {
  if (established()) return;
  state_ = State::Established;
  established_at_ = eq_.now();
  if (on_established_) on_established_();
  tick();
}

void TransportConn::abort_connection(bool send_rst) {
  if (state_ == State::Aborted) return;
  if (send_rst) {
    Segment rst;
    rst.kind = SegKind::Rst;
    rst.conn_id = cfg_.conn_id;
    emit_segment(std::move(rst));
  }
  state_ = State::Aborted;
  if (on_abort_) on_abort_();
}

// ---------------------------------------------------------------------------
// Segment intake

void TransportConn::on_segment(Segment&& seg) {
  if (state_ == State::Aborted) return;

  switch (seg.kind) {
    case SegKind::Syn: {
      // A stripped option is detectable because a FEC connection repeats it
      // on every packet; the handshake condenses that detection.
      if (seg.fec_stripped) {
        abort_connection(true);
        return;
      }
      if (state_ == State::Idle || state_ == State::SynRcvd) {
        fec_enabled_ = cfg_.want_fec && seg.fec_offer;
        state_ = State::SynRcvd;
        send_synack();
      }
      return;
    }
    case SegKind::SynAck: {
      if (state_ != State::SynSent) return;
      if (seg.fec_stripped) {
        abort_connection(true);
        return;
      }
      fec_enabled_ = cfg_.want_fec && seg.fec_offer;
      if (cfg_.require_fec && !fec_enabled_) {
        abort_connection(true);
        return;
      }
      handshake_rtt_ = eq_.now() - syn_sent_at_;
      rtt_sample(handshake_rtt_);
      ++hs_timer_gen_;
      Segment hs;
      hs.kind = SegKind::HsAck;
      hs.conn_id = cfg_.conn_id;
      hs.fec_flag = fec_enabled_;
      if (tx_) tx_(std::move(hs));
      become_established();
      return;
    }
    case SegKind::HsAck: {
      if (state_ == State::SynRcvd) {
        handshake_rtt_ = eq_.now() - synack_sent_at_;
        rtt_sample(handshake_rtt_);
        become_established();
      }
      return;
    }
    case SegKind::Rst:
      abort_connection(false);
      return;
    case SegKind::Data: {
      if (state_ == State::SynRcvd) become_established();
      if (!established()) return;
      if (fec_enabled_ && seg.fec_stripped) {
        abort_connection(true);
        return;
      }
      handle_data(std::move(seg));
      return;
    }
    case SegKind::Fec: {
      if (state_ == State::SynRcvd) become_established();
      if (!established()) return;
      handle_fec_segment(seg);
      return;
    }
    case SegKind::Ack: {
      if (state_ == State::SynRcvd) become_established();
      if (!established() || !seg.ack) return;
      handle_ack(*seg.ack, seg.ack->fec_elicited);
      return;
    }
  }
}

// ---------------------------------------------------------------------------
// Sender path

std::uint32_t TransportConn::effective_cwnd_segments() const {
  double w = std::min(cwnd_, cfg_.cwnd_cap);
  return static_cast<std::uint32_t>(std::max(1.0, std::floor(w)));
}

std::uint32_t TransportConn::pipe_segments() const {
  // SACKed segments arrived; lost segments left the network. A lost segment
  // re-enters the pipe only through its retransmission in the current
  // recovery round.
  std::uint32_t pipe = 0;
  for (const auto& [seq, rec] : inflight_) {
    if (rec.sacked) continue;
    if (rec.lost && rec.rtx_epoch != recovery_epoch_) continue;
    ++pipe;
  }
  return pipe + static_cast<std::uint32_t>(fec_outstanding_.size());
}

bool TransportConn::can_accept_chunk() const {
  return state_ == State::Established && !write_closed_ && pending_fec_.empty() &&
         pipe_segments() < effective_cwnd_segments();
}

bool TransportConn::can_reinject() const {
  return established() && pending_fec_.empty() && pipe_segments() < effective_cwnd_segments();
}

std::uint32_t TransportConn::dupack_threshold() const {
  // The block-size threshold is the dynamic-FEC rule; the fixed-schedule
  // baseline keeps the classic value and pays for early retransmissions.
  if (!fec_enabled_ || cfg_.ir_mode) return 3;
  return std::max<std::uint32_t>(3, current_block_k_);
}

void TransportConn::tick() {
  if (!established()) return;
  for (;;) {
    if (pipe_segments() >= effective_cwnd_segments()) break;
    if (!pending_fec_.empty()) {
      emit_pending_fec();
      continue;
    }
    std::optional<Chunk> chunk = source_ ? source_() : std::nullopt;
    if (chunk) {
      send_new_data(std::move(*chunk));
      continue;
    }
    if (write_closed_ && open_block_ && !open_block_->members.empty()) {
      close_open_block();
      continue;
    }
    break;
  }
  maybe_enter_closing();
}

void TransportConn::open_new_block() {
  OpenBlock blk;
  blk.id = next_block_id_++;
  blk.k_target = dfec_ ? dfec_->effective_block_size()
                       : std::max<std::uint32_t>(1, static_cast<std::uint32_t>(
                                                        std::lround(cfg_.dfec.start_ratio)));
  open_block_ = std::move(blk);
  current_block_k_ = open_block_->k_target;
}

void TransportConn::send_new_data(Chunk&& chunk) {
  if (state_ == State::Closing) state_ = State::Established;  // reinjection revives
  const std::uint32_t len = static_cast<std::uint32_t>(chunk.payload->size());
  SendRec rec;
  rec.seq = snd_nxt_;
  rec.len = len;
  rec.payload = chunk.payload;
  rec.meta = make_meta(chunk.conn_seq, len);
  rec.first_tx = eq_.now();
  snd_nxt_ += len;

  ++counters_.data_sent;
  ++counters_.data_first_tx;
  counters_.bytes_first_tx += len;

  if (fec_enabled_) {
    if (cfg_.ir_mode) {
      if (ir_members_.empty() && ir_timer_gen_ == 0) arm_ir_timer();
      ir_members_.push_back({rec.seq, len, rec.payload, rec.meta});
    } else {
      if (!dfec_) start_dfec();
      if (!open_block_) open_new_block();
      open_block_->members.push_back({rec.seq, len, rec.payload, rec.meta});
    }
  }

  Segment seg;
  seg.kind = SegKind::Data;
  seg.conn_id = cfg_.conn_id;
  seg.seq = rec.seq;
  seg.payload = *rec.payload;
  seg.meta = rec.meta;
  inflight_.emplace(rec.seq, std::move(rec));

  if (!rto_timer_armed_) arm_rto_timer();
  emit_segment(std::move(seg));
  if (pipe_segments() > effective_cwnd_segments()) ++counters_.cwnd_violations;

  if (fec_enabled_ && !cfg_.ir_mode && open_block_ &&
      open_block_->members.size() >= open_block_->k_target) {
    close_open_block();
  }
}

void TransportConn::close_open_block() {
  if (!open_block_ || open_block_->members.empty()) return;
  std::vector<fec::SegmentInput> inputs;
  inputs.reserve(open_block_->members.size());
  for (const BlockMember& m : open_block_->members) {
    inputs.push_back({m.seq, std::span<const std::uint8_t>(*m.payload), m.meta});
  }
  auto block = std::make_shared<fec::FecBlock>(fec::encode_block(open_block_->id, inputs));

  Segment seg;
  seg.kind = SegKind::Fec;
  seg.conn_id = cfg_.conn_id;
  seg.fec = std::move(block);
  pending_fec_.push_back(std::move(seg));
  open_block_.reset();
}

void TransportConn::flush_ir_block() {
  if (ir_members_.empty()) return;
  std::vector<fec::SegmentInput> inputs;
  inputs.reserve(ir_members_.size());
  for (const BlockMember& m : ir_members_) {
    inputs.push_back({m.seq, std::span<const std::uint8_t>(*m.payload), m.meta});
  }
  auto block = std::make_shared<fec::FecBlock>(fec::encode_block(next_block_id_++, inputs));
  ir_members_.clear();

  Segment seg;
  seg.kind = SegKind::Fec;
  seg.conn_id = cfg_.conn_id;
  seg.fec = std::move(block);
  pending_fec_.push_back(std::move(seg));
}

void TransportConn::emit_pending_fec() {
  Segment seg = std::move(pending_fec_.front());
  pending_fec_.pop_front();

  bool all_settled = true;
  for (const fec::FecMember& m : seg.fec->members) {
    auto it = inflight_.find(m.seq);
    bool settled = (m.seq + m.len <= snd_una_) || (it != inflight_.end() && it->second.sacked);
    if (!settled) {
      all_settled = false;
      break;
    }
  }
  if (all_settled) {
    ++counters_.fec_suppressed;
    return;
  }

  std::uint64_t id = seg.fec->block_id;
  OutstandingFec rec;
  for (const fec::FecMember& m : seg.fec->members) {
    rec.members.emplace_back(m.seq, m.len);
    rec.end_seq = std::max(rec.end_seq, m.seq + m.len);
  }
  rec.sent_at = eq_.now();
  rec.marker_seq = snd_nxt_;
  fec_outstanding_.emplace(id, std::move(rec));
  ++counters_.fec_sent;
  emit_segment(std::move(seg));
  if (pipe_segments() > effective_cwnd_segments()) ++counters_.cwnd_violations;
  arm_fec_absence_timer(id);
}

void TransportConn::emit_segment(Segment&& seg) {
  if (established() && fec_enabled_) seg.fec_flag = true;
  seg.send_time = eq_.now();
  if (send_trace_) send_trace_(seg);
  if (tx_) tx_(std::move(seg));
}

void TransportConn::close_write() {
  write_closed_ = true;
  tick();
}

void TransportConn::maybe_enter_closing() {
  if (state_ != State::Established || !write_closed_ || !source_) return;
  bool drained = inflight_.empty() && pending_fec_.empty() && fec_outstanding_.empty() &&
                 (!open_block_ || open_block_->members.empty()) && ir_members_.empty();
  if (drained) state_ = State::Closing;
}

// ---------------------------------------------------------------------------
// Timers

SimTime TransportConn::effective_rto() const {
  SimTime backed_off = rto_ << std::min(rto_backoff_, 10);
  return std::min(backed_off, cfg_.rto_max);
}

void TransportConn::arm_rto_timer() {
  std::uint64_t gen = ++rto_timer_gen_;
  rto_timer_armed_ = true;
  eq_.schedule_in(effective_rto(), [this, gen] {
    if (gen != rto_timer_gen_ || !rto_timer_armed_) return;
    fire_rto();
  });
}

void TransportConn::disarm_rto_timer() {
  rto_timer_armed_ = false;
  ++rto_timer_gen_;
}

void TransportConn::fire_rto() {
  if (!established() || inflight_.empty()) {
    disarm_rto_timer();
    return;
  }
  ++counters_.rtos;
  ++counters_.cwnd_reductions;
  ssthresh_ = std::max(cwnd_ / 2.0, kMinSsthresh);
  cwnd_ = 1.0;  // slow start restarts
  ++rto_backoff_;  // exponential backoff; cleared on forward progress
  in_recovery_ = false;
  prr_active_ = false;
  dupack_count_ = 0;
  ++recovery_epoch_;
  rto_recover_point_ = snd_nxt_;
  last_recover_point_ = std::max(last_recover_point_, rto_recover_point_);
  // The timeout voids the in-flight assumption for everything unacknowledged.
  for (auto& [seq, rec] : inflight_) {
    if (!rec.sacked) rec.lost = true;
  }

  // Sweep unresolved parity: whatever feedback was coming is not coming, and
  // the reduction gate keeps this from stacking onto the timeout's penalty.
  while (!fec_outstanding_.empty()) {
    declare_fec_lost(fec_outstanding_.begin()->first);
  }

  auto it = inflight_.begin();
  std::uint64_t seq = it->first;
  std::uint64_t conn_seq = meta_conn_seq(it->second.meta);
  std::uint32_t len = it->second.len;
  retransmit_seq(seq);
  arm_rto_timer();
  if (on_rto_remap_) on_rto_remap_(conn_seq, len);
  if (recorder_) recorder_->record(eq_.now(), cfg_.name + ".cwnd", cwnd_);
}

void TransportConn::declare_fec_lost(std::uint64_t block_id) {
  auto it = fec_outstanding_.find(block_id);
  if (it == fec_outstanding_.end()) return;
  ++counters_.fec_lost_timeouts;
  // One reduction per loss window: a parity lost alongside data the sender
  // already took a reduction for is the same congestion episode.
  if (it->second.end_seq > last_recover_point_) {
    enter_recovery();
  }
  resolve_block(block_id);
}

// The path is FIFO: once data sent after the parity has provably arrived (a
// first transmission acknowledged or SACKed), missing feedback means the
// parity segment itself was dropped. Exact and immediate, unlike any timer.
void TransportConn::detect_overtaken_fec() {
  bool any = false;
  for (auto it = fec_outstanding_.begin(); it != fec_outstanding_.end();) {
    std::uint64_t id = it->first;
    ++it;
    const OutstandingFec& blk = fec_outstanding_.at(id);
    if (blk.marker_seq < snd_nxt_ && max_nonrtx_delivered_ > blk.marker_seq) {
      declare_fec_lost(id);
      any = true;
    }
  }
  if (any) {
    tick();
    if (on_space_) on_space_();
  }
}

void TransportConn::arm_fec_absence_timer(std::uint64_t block_id) {
  // Fallback for a tail parity with no data behind it: nothing can overtake
  // it, so absence of feedback after an RTO-scale wait settles it. Blocks
  // with data behind them are left to the exact positional detection; the
  // timer just re-arms until the block resolves one way or the other.
  OutstandingFec& blk = fec_outstanding_[block_id];
  SimTime deadline = blk.sent_at + std::max(rto_, cfg_.rto_min);
  std::uint64_t gen = ++blk.timer_gen;
  eq_.schedule(deadline, [this, block_id, gen] {
    auto it = fec_outstanding_.find(block_id);
    if (it == fec_outstanding_.end() || it->second.timer_gen != gen) return;
    if (snd_nxt_ > it->second.marker_seq) return;  // positional detection owns it now
    if (eq_.now() < it->second.sent_at + std::max(rto_, cfg_.rto_min)) {
      arm_fec_absence_timer(block_id);  // estimator moved; wait it out
      return;
    }
    declare_fec_lost(block_id);
    tick();
    if (on_space_) on_space_();
  });
}

void TransportConn::start_dfec() {
  dfec_.emplace(cfg_.dfec);
  dfec_->start(eq_.now(), srtt_, counters_.data_sent, counters_.retransmitted);
  current_block_k_ = dfec_->effective_block_size();
  arm_period_timer();
}

void TransportConn::arm_period_timer() {
  std::uint64_t gen = ++period_timer_gen_;
  eq_.schedule(dfec_->period_deadline(), [this, gen] {
    if (gen != period_timer_gen_ || state_ != State::Established || !dfec_) return;
    auto updated =
        dfec_->on_period_tick(eq_.now(), srtt_, counters_.data_sent, counters_.retransmitted);
    if (updated) {
      current_block_k_ = dfec_->effective_block_size();
      if (recorder_) recorder_->record(eq_.now(), cfg_.name + ".fec_ratio", *updated);
    }
    arm_period_timer();
  });
}

void TransportConn::arm_ir_timer() {
  std::uint64_t gen = ++ir_timer_gen_;
  SimTime interval = static_cast<SimTime>(cfg_.ir_interval_rtts * static_cast<double>(srtt_));
  if (interval <= 0) interval = msec(10);
  eq_.schedule_in(interval, [this, gen] {
    if (gen != ir_timer_gen_ || state_ != State::Established) return;
    if (!ir_members_.empty()) {
      flush_ir_block();
      tick();
    }
    arm_ir_timer();
  });
}

// ---------------------------------------------------------------------------
// ACK processing

void TransportConn::rtt_sample(SimTime sample) {
  if (!srtt_valid_) {
    srtt_ = sample;
    rttvar_ = sample / 2;
    srtt_valid_ = true;
    min_rtt_ = sample;
  } else {
    SimTime err = std::abs(srtt_ - sample);
    rttvar_ = (3 * rttvar_ + err) / 4;
    srtt_ = (7 * srtt_ + sample) / 8;
    min_rtt_ = std::min(min_rtt_, sample);
  }
  rto_ = std::clamp(srtt_ + 4 * rttvar_, cfg_.rto_min, cfg_.rto_max);

  // Delay-based slow-start exit: a standing queue shows up as a rise in the
  // per-round minimum RTT (single samples are noisy under micro-bursts). On
  // exit, ssthresh becomes the measured bandwidth-delay product; the ack rate
  // of a saturating round is the bottleneck rate, so slow start ends at the
  // pipe size instead of wherever the window happened to be.
  if (cfg_.hystart && cwnd_ < ssthresh_ && !in_recovery_) {
    if (snd_una_ >= hs_round_end_) {
      hs_round_end_ = snd_nxt_;
      hs_round_min_ = sample;
      hs_round_start_ = eq_.now();
      hs_round_acked_ = 0;
      hs_round_samples_ = 1;
    } else if (hs_round_samples_ < 8) {
      hs_round_min_ = std::min(hs_round_min_, sample);
      if (++hs_round_samples_ == 8) {
        SimTime rise = std::max<SimTime>(min_rtt_ / 8, msec(4));
        if (hs_round_min_ > min_rtt_ + rise) {
          double bdp = cwnd_;
          SimTime elapsed = eq_.now() - hs_round_start_;
          if (elapsed > 0 && hs_round_acked_ > 0) {
            double rate = static_cast<double>(hs_round_acked_) / to_seconds(elapsed);
            bdp = rate * to_seconds(min_rtt_);
          }
          ssthresh_ = std::max({cwnd_, bdp, kMinSsthresh});
        }
      }
    }
  }
}

bool TransportConn::enter_recovery() {
  if (in_recovery_) return false;
  in_recovery_ = true;
  recover_point_ = snd_nxt_;
  last_recover_point_ = std::max(last_recover_point_, recover_point_);
  ++recovery_epoch_;
  ssthresh_ = std::max(cwnd_ / 2.0, kMinSsthresh);
  ++counters_.cwnd_reductions;
  if (cfg_.instant_cwnd_reduction) {
    cwnd_ = ssthresh_;
  } else {
    prr_active_ = true;  // paced toward ssthresh over about one RTT
  }
  return true;
}

void TransportConn::exit_recovery() {
  in_recovery_ = false;
  prr_active_ = false;
  cwnd_ = std::max(ssthresh_, kMinSsthresh);
}

void TransportConn::growth_per_ack() {
  if (in_recovery_) return;
  if (cwnd_ < ssthresh_) {
    cwnd_ += 1.0;  // slow start
  } else {
    cwnd_ += coupler_ ? coupler_->ca_increment(this) : 1.0 / cwnd_;
  }
  cwnd_ = std::min(cwnd_, cfg_.cwnd_cap);
}

void TransportConn::retransmit_seq(std::uint64_t seq) {
  auto it = inflight_.find(seq);
  if (it == inflight_.end()) return;
  SendRec& rec = it->second;
  rec.retransmitted = true;
  rec.lost = true;
  rec.rtx_epoch = recovery_epoch_;
  ++counters_.retransmitted;
  ++counters_.data_sent;

  Segment seg;
  seg.kind = SegKind::Data;
  seg.conn_id = cfg_.conn_id;
  seg.seq = rec.seq;
  seg.payload = *rec.payload;
  seg.meta = rec.meta;
  seg.retransmission = true;
  emit_segment(std::move(seg));
  arm_rto_timer();  // restart: the timer tracks the latest retransmission
}

std::uint64_t TransportConn::recovery_bound() const {
  std::uint64_t bound = 0;
  if (in_recovery_) bound = recover_point_;
  if (snd_una_ < rto_recover_point_) bound = std::max(bound, rto_recover_point_);
  return bound;
}

// Unsacked segments below the highest SACK edge, inside the recovery window,
// have been overtaken and are declared lost.
void TransportConn::mark_losses() {
  std::uint64_t bound = std::min(recovery_bound(), highest_sacked_);
  for (auto& [seq, rec] : inflight_) {
    if (seq + rec.len > bound) break;
    if (!rec.sacked) rec.lost = true;
  }
}

bool TransportConn::retransmit_next_hole() {
  std::uint64_t bound = recovery_bound();
  for (auto& [seq, rec] : inflight_) {
    if (seq >= bound) break;
    if (rec.lost && !rec.sacked && rec.rtx_epoch != recovery_epoch_) {
      retransmit_seq(seq);
      return true;
    }
  }
  return false;
}

// SACK-driven loss recovery: each acknowledgement that shrinks the pipe lets
// another hole below the recovery point go out, so a burst of losses clears
// in about one round trip instead of one hole per RTT.
void TransportConn::fill_recovery_holes() {
  if (recovery_bound() == 0) return;
  mark_losses();
  while (pipe_segments() < effective_cwnd_segments() && retransmit_next_hole()) {
  }
}

void TransportConn::on_dupack() {
  ++dupack_count_;
  // A fresh fast retransmit needs the cumulative ack past the previous
  // recovery's window; dupacks for an already-penalized window only feed the
  // SACK scoreboard.
  if (dupack_count_ >= dupack_threshold() && !in_recovery_ &&
      snd_una_ >= last_recover_point_) {
    if (enter_recovery()) {
      ++counters_.fast_retransmits;
      auto hole = inflight_.find(snd_una_);
      if (hole != inflight_.end()) hole->second.lost = true;
      mark_losses();
      retransmit_next_hole();
    }
  }
}

void TransportConn::handle_feedback(const FecFeedback& fb) {
  auto it = fec_outstanding_.find(fb.block_id);
  if (it == fec_outstanding_.end()) {
    // Late feedback for a block the absence timer already settled is normal;
    // anything else is a peer speaking out of turn.
    if (!resolved_blocks_.contains(fb.block_id)) ++counters_.protocol_errors;
    return;
  }
  ++hs_round_acked_;  // the parity consumed bottleneck capacity like data
  switch (fb.outcome) {
    case FecFeedback::Outcome::Recovered:
      ++counters_.fec_recovered;
      dupack_count_ = 0;  // the gap is repaired; no early retransmission
      break;
    case FecFeedback::Outcome::AckedUnused:
      ++counters_.fec_unused;
      growth_per_ack();  // counts as a plain acknowledgement
      break;
    case FecFeedback::Outcome::Failed: {
      ++counters_.fec_failed;
      std::vector<std::uint64_t> missing;
      for (const auto& [seq, len] : it->second.members) {
        auto rec = inflight_.find(seq);
        if (seq + len > snd_una_ && rec != inflight_.end() && !rec->second.sacked) {
          missing.push_back(seq);
        }
      }
      if (it->second.end_seq > last_recover_point_) enter_recovery();
      for (std::uint64_t seq : missing) retransmit_seq(seq);
      break;
    }
  }
  resolve_block(fb.block_id);
}

void TransportConn::resolve_block(std::uint64_t block_id) {
  fec_outstanding_.erase(block_id);
  resolved_blocks_.insert(block_id);
  while (resolved_blocks_.size() > kProcessedBlocksCap) {
    resolved_blocks_.erase(resolved_blocks_.begin());
  }
}

void TransportConn::handle_ack(const AckInfo& ack, bool fec_elicited) {
  counters_.cwnd_sum += cwnd_;
  ++counters_.cwnd_samples;

  for (const FecFeedback& fb : ack.feedback) handle_feedback(fb);

  for (const SackRange& r : ack.sack) {
    for (auto it = inflight_.lower_bound(r.begin); it != inflight_.end() && it->first < r.end;
         ++it) {
      it->second.sacked = true;
      if (!it->second.retransmitted) {
        max_nonrtx_delivered_ = std::max(max_nonrtx_delivered_, it->first + it->second.len);
      }
    }
    highest_sacked_ = std::max(highest_sacked_, r.end);
  }

  const bool acked_new = ack.cum_ack > snd_una_;
  if (acked_new) {
    SimTime sample = -1;
    while (!inflight_.empty()) {
      auto it = inflight_.begin();
      if (it->first + it->second.len > ack.cum_ack) break;
      if (!it->second.retransmitted) {
        sample = eq_.now() - it->second.first_tx;
        max_nonrtx_delivered_ = std::max(max_nonrtx_delivered_, it->first + it->second.len);
      }
      ++hs_round_acked_;
      inflight_.erase(it);
    }
    snd_una_ = ack.cum_ack;
    dupack_count_ = 0;
    rto_backoff_ = 0;
    if (sample >= 0) rtt_sample(sample);

    if (in_recovery_ && snd_una_ >= recover_point_) exit_recovery();
    if (inflight_.empty()) {
      disarm_rto_timer();
    } else {
      arm_rto_timer();
    }
  } else if (!fec_elicited && ack.cum_ack == snd_una_ && !inflight_.empty()) {
    ++counters_.dupacks;
    on_dupack();
  }

  if (prr_active_) cwnd_ = std::max(ssthresh_, cwnd_ - 0.5);
  if (acked_new) growth_per_ack();
  detect_overtaken_fec();
  fill_recovery_holes();
  if (recorder_) recorder_->record(eq_.now(), cfg_.name + ".cwnd", cwnd_);

  maybe_enter_closing();
  tick();
  if (on_space_) on_space_();
}

// ---------------------------------------------------------------------------
// Receiver path

void TransportConn::cache_payload(std::uint64_t seq, const std::vector<std::uint8_t>& payload,
                                  std::uint64_t meta) {
  payload_cache_[seq] = RecvSeg{static_cast<std::uint32_t>(payload.size()), payload, meta};
  while (payload_cache_.size() > kPayloadCacheCap) {
    payload_cache_.erase(payload_cache_.begin());
  }
}

void TransportConn::record_ofo() {
  std::uint64_t bytes = 0;
  for (const auto& [seq, seg] : ofo_) bytes += seg.len;
  ofo_tracker_.update(eq_.now(), bytes);
  if (recorder_) {
    recorder_->record(eq_.now(), cfg_.name + ".ofo_bytes", static_cast<double>(bytes));
  }
}

void TransportConn::handle_data(Segment&& seg) {
  const std::uint64_t seq = seg.seq;
  const std::uint32_t len = static_cast<std::uint32_t>(seg.payload.size());

  bool duplicate = seq + len <= rcv_nxt_;
  auto existing = ofo_.find(seq);
  if (existing != ofo_.end()) {
    duplicate = true;
    if (existing->second.payload != seg.payload) ++counters_.integrity_faults;
  }

  cache_payload(seq, seg.payload, seg.meta);
  if (duplicate) {
    ++counters_.dup_data_rcvd;
    emit_ack(false);
    return;
  }
  bool in_order = seq == rcv_nxt_ && ofo_.empty();
  inject_received(seq, std::move(seg.payload), seg.meta);
  if (cfg_.delayed_ack && in_order && pending_feedback_.empty()) {
    if (ack_pending_) {
      emit_ack(false);  // every second segment
      return;
    }
    ack_pending_ = true;
    std::uint64_t gen = ++delack_timer_gen_;
    eq_.schedule_in(cfg_.delayed_ack_timeout, [this, gen] {
      if (gen == delack_timer_gen_ && ack_pending_) emit_ack(false);
    });
    return;
  }
  emit_ack(false);
}

void TransportConn::inject_received(std::uint64_t seq, std::vector<std::uint8_t>&& payload,
                                    std::uint64_t meta) {
  if (seq + payload.size() <= rcv_nxt_) return;
  ofo_.emplace(seq, RecvSeg{static_cast<std::uint32_t>(payload.size()), std::move(payload), meta});
  sack_recent_.push_front(seq);
  if (sack_recent_.size() > 32) sack_recent_.pop_back();
  advance_delivery();
  record_ofo();
}

void TransportConn::advance_delivery() {
  while (!ofo_.empty()) {
    auto it = ofo_.begin();
    if (it->first != rcv_nxt_) break;
    counters_.delivered_bytes += it->second.len;
    rcv_nxt_ += it->second.len;
    if (deliver_) deliver_(meta_conn_seq(it->second.meta), it->second.payload);
    ofo_.erase(it);
  }
}

void TransportConn::handle_fec_segment(const Segment& seg) {
  if (!seg.fec) return;
  const fec::FecBlock& block = *seg.fec;
  if (processed_blocks_.contains(block.block_id)) {
    emit_ack(true);
    return;
  }

  std::map<std::uint64_t, fec::ReceivedSegment> received;
  std::uint32_t missing = 0;
  for (const fec::FecMember& m : block.members) {
    auto it = payload_cache_.find(m.seq);
    if (it != payload_cache_.end()) {
      received.emplace(m.seq, fec::ReceivedSegment{std::span<const std::uint8_t>(
                                                       it->second.payload),
                                                   it->second.meta});
    } else {
      ++missing;
    }
  }

  FecFeedback fb;
  fb.block_id = block.block_id;
  if (missing == 0) {
    fb.outcome = FecFeedback::Outcome::AckedUnused;
  } else if (missing == 1) {
    fec::RecoveryOutcome out = fec::try_recover(block, received);
    if (out.kind == fec::RecoveryOutcome::Kind::Recovered) {
      ++counters_.recv_recovered;
      cache_payload(out.seq, out.payload, out.meta);
      inject_received(out.seq, std::move(out.payload), out.meta);
      fb.outcome = FecFeedback::Outcome::Recovered;
    } else {
      fb.outcome = FecFeedback::Outcome::Failed;
      fb.missing_count = missing;
    }
  } else {
    fb.outcome = FecFeedback::Outcome::Failed;
    fb.missing_count = missing;
  }

  processed_blocks_.insert(block.block_id);
  while (processed_blocks_.size() > kProcessedBlocksCap) {
    processed_blocks_.erase(processed_blocks_.begin());
  }
  for (const fec::FecMember& m : block.members) payload_cache_.erase(m.seq);

  push_feedback(fb);
  emit_ack(true);
}

void TransportConn::push_feedback(FecFeedback fb) {
  pending_feedback_.push_back(fb);
  std::uint64_t epoch = feedback_epoch_;
  // Dedicated feedback segment if no ACK drains it within a quarter RTT.
  eq_.schedule_in(std::max<SimTime>(handshake_rtt_ / 4, msec(1)), [this, epoch] {
    if (epoch == feedback_epoch_ && !pending_feedback_.empty() && established()) {
      emit_ack(true);
    }
  });
}

void TransportConn::emit_ack(bool fec_elicited) {
  ack_pending_ = false;
  ++delack_timer_gen_;
  AckInfo info;
  info.fec_elicited = fec_elicited;
  info.cum_ack = rcv_nxt_;

  // SACK blocks, most recent arrival's range first, so consecutive ACKs walk
  // the sender's scoreboard across the whole out-of-order set.
  auto coalesced_range = [this](std::uint64_t seq) -> SackRange {
    auto it = ofo_.find(seq);
    if (it == ofo_.end()) return {0, 0};
    auto lo = it;
    while (lo != ofo_.begin()) {
      auto prev = std::prev(lo);
      if (prev->first + prev->second.len != lo->first) break;
      lo = prev;
    }
    auto hi = it;
    std::uint64_t end = hi->first + hi->second.len;
    for (auto next = std::next(hi); next != ofo_.end() && next->first == end; ++next) {
      end = next->first + next->second.len;
    }
    return {lo->first, end};
  };
  for (std::uint64_t seq : sack_recent_) {
    if (info.sack.size() >= 8) break;
    SackRange r = coalesced_range(seq);
    if (r.end == 0) continue;
    bool dup = false;
    for (const SackRange& have : info.sack) {
      if (have.begin == r.begin && have.end == r.end) dup = true;
    }
    if (!dup) info.sack.push_back(r);
  }

  info.feedback = std::move(pending_feedback_);
  pending_feedback_.clear();
  ++feedback_epoch_;

  Segment ack;
  ack.kind = SegKind::Ack;
  ack.conn_id = cfg_.conn_id;
  ack.ack = std::move(info);
  ++counters_.acks_sent;
  emit_segment(std::move(ack));
}

}  // namespace dfecsim

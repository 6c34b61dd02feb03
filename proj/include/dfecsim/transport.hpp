#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dfecsim/dfec.hpp"
#include "dfecsim/event_queue.hpp"
#include "dfecsim/fec_codec.hpp"
#include "dfecsim/metrics.hpp"
#include "dfecsim/segment.hpp"
#include "dfecsim/sim_time.hpp"

namespace dfecsim {

// 64-bit reassembly word carried on every data segment and XORed into the
// parity block: upper bits hold the connection-level sequence, low 16 bits
// the chunk length, so a recovered segment's stream mapping can be rebuilt.
constexpr std::uint64_t make_meta(std::uint64_t conn_seq, std::uint32_t len) {
  return (conn_seq << 16) | len;
}
constexpr std::uint64_t meta_conn_seq(std::uint64_t meta) { return meta >> 16; }
constexpr std::uint32_t meta_len(std::uint64_t meta) {
  return static_cast<std::uint32_t>(meta & 0xffff);
}

struct TransportConfig {
  std::string name = "conn";
  std::uint32_t conn_id = 0;
  std::uint32_t mss = 1448;
  double iw_segments = 10.0;
  double initial_ssthresh = 1e9;   // segments
  double cwnd_cap = 1e9;           // receive-window abstraction, segments

  SimTime rto_min = msec(200);
  SimTime rto_initial = secs(1);
  SimTime rto_max = secs(60);

  bool want_fec = false;
  bool require_fec = false;        // abort when negotiation misses
  bool ir_mode = false;            // fixed-schedule baseline
  double ir_interval_rtts = 0.25;
  bool instant_cwnd_reduction = false;  // default: paced over about one RTT
  bool hystart = true;             // delay-based slow-start exit
  bool delayed_ack = false;        // default: one ACK per data segment
  SimTime delayed_ack_timeout = msec(40);
  DfecParams dfec;
};

// Couples congestion-avoidance growth across subflows of one connection
// (LIA-style); off by default, each subflow then runs independent NewReno.
class CcCoupler {
 public:
  void attach(const class TransportConn* conn) { conns_.push_back(conn); }
  double ca_increment(const class TransportConn* self) const;

 private:
  std::vector<const class TransportConn*> conns_;
};

// One endpoint of a reliable single-path transport connection. A connection
// is a wired pair of these; data flows one way, ACKs and FEC feedback the
// other. Driven entirely by the event loop: strict run-to-completion, no
// shared state between endpoints.
class TransportConn {
 public:
  struct Chunk {
    std::uint64_t conn_seq = 0;
    std::shared_ptr<const std::vector<std::uint8_t>> payload;
  };

  using TxFn = std::function<void(Segment&&)>;
  using SourceFn = std::function<std::optional<Chunk>()>;
  using DeliverFn = std::function<void(std::uint64_t conn_seq, const std::vector<std::uint8_t>&)>;
  using EventFn = std::function<void()>;
  using RemapFn = std::function<void(std::uint64_t conn_seq, std::uint32_t len)>;
  using TraceFn = std::function<void(const Segment&)>;

  TransportConn(EventQueue& eq, TransportConfig cfg);

  // Wiring.
  void set_tx(TxFn fn) { tx_ = std::move(fn); }
  void set_source(SourceFn fn) { source_ = std::move(fn); }
  void set_deliver(DeliverFn fn) { deliver_ = std::move(fn); }
  void set_on_established(EventFn fn) { on_established_ = std::move(fn); }
  void set_on_abort(EventFn fn) { on_abort_ = std::move(fn); }
  void set_on_space(EventFn fn) { on_space_ = std::move(fn); }
  void set_on_rto_remap(RemapFn fn) { on_rto_remap_ = std::move(fn); }
  void set_send_trace(TraceFn fn) { send_trace_ = std::move(fn); }
  void set_recorder(SeriesRecorder* rec) { recorder_ = rec; }
  void set_cc_coupler(CcCoupler* c) { coupler_ = c; }

  // Handshake.
  void connect();
  void listen();

  // Link delivery entry point.
  void on_segment(Segment&& seg);

  // Data availability changed on the sender side.
  void notify_source_ready() { tick(); }

  // No further chunks will ever arrive; flushes a partial tail block.
  void close_write();

  enum class State : std::uint8_t { Idle, SynSent, SynRcvd, Established, Closing, Aborted };

  State state() const { return state_; }
  bool established() const { return state_ == State::Established || state_ == State::Closing; }
  bool aborted() const { return state_ == State::Aborted; }
  bool fec_enabled() const { return fec_enabled_; }

  double cwnd() const { return cwnd_; }
  double ssthresh() const { return ssthresh_; }
  SimTime srtt() const { return srtt_; }
  SimTime rto() const { return rto_; }
  std::uint64_t snd_una() const { return snd_una_; }
  std::uint64_t snd_nxt() const { return snd_nxt_; }
  std::uint64_t rcv_nxt() const { return rcv_nxt_; }
  SimTime established_at() const { return established_at_; }

  std::uint32_t dupack_threshold() const;
  std::uint32_t current_block_size() const { return current_block_k_; }

  // True when the scheduler may hand this subflow one more data chunk now.
  bool can_accept_chunk() const;
  // Weaker form for recovery reinjection: ignores a closed write side.
  bool can_reinject() const;
  std::uint32_t pipe_segments() const;

  const ConnCounters& counters() const { return counters_; }
  const DfecController* dfec() const { return dfec_ ? &*dfec_ : nullptr; }
  const OfoTracker& ofo() const { return ofo_tracker_; }
  const TransportConfig& config() const { return cfg_; }

 private:
  struct SendRec {
    std::uint64_t seq = 0;
    std::uint32_t len = 0;
    std::shared_ptr<const std::vector<std::uint8_t>> payload;
    std::uint64_t meta = 0;
    SimTime first_tx = 0;
    bool retransmitted = false;
    bool sacked = false;
    bool lost = false;            // declared lost; excluded from the pipe
    std::uint64_t rtx_epoch = 0;  // recovery round that retransmitted this
  };

  struct BlockMember {
    std::uint64_t seq = 0;
    std::uint32_t len = 0;
    std::shared_ptr<const std::vector<std::uint8_t>> payload;
    std::uint64_t meta = 0;
  };

  struct OpenBlock {
    std::uint64_t id = 0;
    std::uint32_t k_target = 0;
    std::vector<BlockMember> members;
  };

  struct OutstandingFec {
    std::vector<std::pair<std::uint64_t, std::uint32_t>> members;  // (seq, len)
    std::uint64_t end_seq = 0;      // highest covered byte, for reduction gating
    std::uint64_t marker_seq = 0;   // first data byte sent after the parity
    SimTime sent_at = 0;
    std::uint64_t timer_gen = 0;
  };

  struct RecvSeg {
    std::uint32_t len = 0;
    std::vector<std::uint8_t> payload;
    std::uint64_t meta = 0;
  };

  // --- sender path ---
  void tick();
  std::uint32_t effective_cwnd_segments() const;
  void send_new_data(Chunk&& chunk);
  void emit_segment(Segment&& seg);
  void open_new_block();
  void close_open_block();
  void emit_pending_fec();
  void handle_ack(const AckInfo& ack, bool fec_elicited);
  void handle_feedback(const FecFeedback& fb);
  void on_dupack();
  void retransmit_seq(std::uint64_t seq);
  bool retransmit_next_hole();
  void fill_recovery_holes();
  std::uint64_t recovery_bound() const;
  void mark_losses();
  bool enter_recovery();
  void exit_recovery();
  void growth_per_ack();
  void rtt_sample(SimTime sample);
  SimTime effective_rto() const;
  void arm_rto_timer();
  void disarm_rto_timer();
  void fire_rto();
  void arm_fec_absence_timer(std::uint64_t block_id);
  void declare_fec_lost(std::uint64_t block_id);
  void detect_overtaken_fec();
  void resolve_block(std::uint64_t block_id);
  void start_dfec();
  void arm_period_timer();
  void arm_ir_timer();
  void flush_ir_block();
  void maybe_enter_closing();

  // --- receiver path ---
  void handle_data(Segment&& seg);
  void handle_fec_segment(const Segment& seg);
  void inject_received(std::uint64_t seq, std::vector<std::uint8_t>&& payload, std::uint64_t meta);
  void advance_delivery();
  void emit_ack(bool fec_elicited);
  void push_feedback(FecFeedback fb);
  void cache_payload(std::uint64_t seq, const std::vector<std::uint8_t>& payload,
                     std::uint64_t meta);
  void record_ofo();

  // --- handshake ---
  void send_syn();
  void send_synack();
  void abort_connection(bool send_rst);
  void become_established();

  EventQueue& eq_;
  TransportConfig cfg_;

  TxFn tx_;
  SourceFn source_;
  DeliverFn deliver_;
  EventFn on_established_;
  EventFn on_abort_;
  EventFn on_space_;
  RemapFn on_rto_remap_;
  TraceFn send_trace_;
  SeriesRecorder* recorder_ = nullptr;
  CcCoupler* coupler_ = nullptr;

  State state_ = State::Idle;
  bool fec_enabled_ = false;
  bool is_initiator_ = false;
  SimTime established_at_ = 0;
  SimTime syn_sent_at_ = 0;
  SimTime synack_sent_at_ = 0;
  int hs_tries_ = 0;
  std::uint64_t hs_timer_gen_ = 0;

  // Congestion state (segments).
  double cwnd_ = 10.0;
  double ssthresh_ = 1e9;
  bool in_recovery_ = false;
  bool prr_active_ = false;
  std::uint64_t recover_point_ = 0;
  std::uint64_t rto_recover_point_ = 0;
  std::uint64_t recovery_epoch_ = 0;
  std::uint64_t highest_sacked_ = 0;
  std::uint64_t last_recover_point_ = 0;  // one reduction per loss window
  std::uint64_t max_nonrtx_delivered_ = 0;
  std::uint32_t dupack_count_ = 0;

  SimTime srtt_ = 0;
  SimTime rttvar_ = 0;
  SimTime rto_;            // estimator value; backoff applies on top
  int rto_backoff_ = 0;    // consecutive timeouts without forward progress
  bool srtt_valid_ = false;
  SimTime min_rtt_ = 0;
  std::uint64_t hs_round_end_ = 0;
  SimTime hs_round_min_ = 0;
  SimTime hs_round_start_ = 0;
  std::uint32_t hs_round_acked_ = 0;
  int hs_round_samples_ = 0;

  // Send state.
  std::uint64_t snd_nxt_ = 0;
  std::uint64_t snd_una_ = 0;
  std::map<std::uint64_t, SendRec> inflight_;
  bool write_closed_ = false;
  std::uint64_t rto_timer_gen_ = 0;
  bool rto_timer_armed_ = false;

  // FEC send state.
  std::optional<OpenBlock> open_block_;
  std::deque<Segment> pending_fec_;
  std::map<std::uint64_t, OutstandingFec> fec_outstanding_;
  std::uint64_t next_block_id_ = 1;
  std::uint32_t current_block_k_ = 3;
  std::vector<BlockMember> ir_members_;
  std::uint64_t ir_timer_gen_ = 0;
  std::uint64_t period_timer_gen_ = 0;

  std::optional<DfecController> dfec_;
  std::set<std::uint64_t> resolved_blocks_;

  // Receive state.
  std::uint64_t rcv_nxt_ = 0;
  std::map<std::uint64_t, RecvSeg> ofo_;
  std::deque<std::uint64_t> sack_recent_;  // most recent arrivals, for SACK order
  bool ack_pending_ = false;
  std::uint64_t delack_timer_gen_ = 0;
  std::map<std::uint64_t, RecvSeg> payload_cache_;
  std::set<std::uint64_t> processed_blocks_;
  std::vector<FecFeedback> pending_feedback_;
  std::uint64_t feedback_epoch_ = 0;
  SimTime handshake_rtt_ = msec(50);
  OfoTracker ofo_tracker_;

  ConnCounters counters_;

  static constexpr std::size_t kPayloadCacheCap = 8192;
  static constexpr std::size_t kProcessedBlocksCap = 8192;
  static constexpr int kMaxHandshakeTries = 6;
};

// Convenience: wires two endpoints through a pair of unidirectional links.
struct LinkPair;

}  // namespace dfecsim

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "dfecsim/event_queue.hpp"
#include "dfecsim/metrics.hpp"
#include "dfecsim/stream_bytes.hpp"
#include "dfecsim/transport.hpp"

namespace dfecsim {

struct SubflowView {
  SimTime srtt = 0;
  bool can_accept = false;
};

// Minimum-SRTT scheduling among subflows with congestion-window space; ties
// break toward the lowest index. Returns -1 when no subflow qualifies.
int pick_min_rtt_subflow(std::span<const SubflowView> subflows);

// Per-subflow share of connection data, over first transmissions.
std::vector<double> subflow_utilization(std::span<const ConnCounters> counters);

struct MultipathConfig {
  std::uint32_t mss = 1448;
  std::uint64_t conn_rwnd_bytes = 8ull << 20;
  bool coupled_cc = false;
};

// Connection-level sending side: owns the byte queue, maps chunks onto
// subflows by minimum SRTT, keeps the subflow-to-connection sequence mapping,
// and reinjects a timed-out chunk on the next-lowest-RTT subflow with space.
class MultipathSender {
 public:
  MultipathSender(EventQueue& eq, MultipathConfig cfg, std::vector<TransportConn*> subflows,
                  std::uint64_t stream_salt);

  // Installs source/space/remap hooks on every subflow. Call once after the
  // subflows have their tx wiring.
  void wire();

  void set_recorder(SeriesRecorder* rec) { recorder_ = rec; }

  void app_write(std::uint64_t nbytes);
  void close_write();
  void pump();

  std::uint64_t queued_bytes() const { return queue_bytes_; }
  std::uint64_t next_conn_seq() const { return next_conn_seq_; }
  bool write_closed() const { return write_closed_; }
  const StreamBytes& stream() const { return stream_; }

  struct Mapping {
    std::uint64_t conn_seq = 0;
    std::uint32_t len = 0;
  };
  // Active (subflow, subflow_seq) -> connection mapping; exposed for tests.
  const std::map<std::uint64_t, Mapping>& mapping(std::size_t subflow) const {
    return mappings_[subflow];
  }
  std::uint64_t reinjections() const { return reinjections_; }

 private:
  std::optional<TransportConn::Chunk> grant(std::size_t idx);
  void on_subflow_space(std::size_t idx);
  void on_subflow_rto(std::size_t idx, std::uint64_t conn_seq, std::uint32_t len);
  void maybe_close_subflows();
  std::uint64_t outstanding_mapped_bytes() const;

  EventQueue& eq_;
  MultipathConfig cfg_;
  std::vector<TransportConn*> subflows_;
  StreamBytes stream_;

  std::uint64_t next_conn_seq_ = 0;
  std::uint64_t queue_bytes_ = 0;
  bool write_closed_ = false;
  bool subflows_closed_ = false;
  bool close_pending_ = false;

  std::vector<std::map<std::uint64_t, Mapping>> mappings_;  // keyed by subflow seq
  std::vector<std::deque<TransportConn::Chunk>> reinject_;
  std::uint64_t reinjections_ = 0;
  SeriesRecorder* recorder_ = nullptr;
};

// Connection-level receiving side: reassembles chunks delivered by the
// subflows into the in-order byte stream and tracks the connection OFO queue.
class MultipathReceiver {
 public:
  using AppSink = std::function<void(std::uint64_t conn_seq, const std::vector<std::uint8_t>&)>;

  MultipathReceiver(EventQueue& eq, std::size_t n_subflows);

  void set_app_sink(AppSink sink) { app_sink_ = std::move(sink); }
  void set_recorder(SeriesRecorder* rec) { recorder_ = rec; }

  // Wire as the DeliverFn of subflow `idx`'s receiving endpoint.
  void on_subflow_deliver(std::size_t idx, std::uint64_t conn_seq,
                          const std::vector<std::uint8_t>& bytes);

  std::uint64_t delivered_bytes() const { return rcv_nxt_; }
  std::uint64_t ofo_bytes() const { return ofo_bytes_; }
  const OfoTracker& ofo() const { return ofo_tracker_; }
  std::uint64_t duplicates() const { return duplicates_; }
  std::uint64_t integrity_faults() const { return integrity_faults_; }

 private:
  EventQueue& eq_;
  AppSink app_sink_;
  SeriesRecorder* recorder_ = nullptr;

  std::map<std::uint64_t, std::vector<std::uint8_t>> conn_ofo_;
  std::uint64_t rcv_nxt_ = 0;
  std::uint64_t ofo_bytes_ = 0;
  OfoTracker ofo_tracker_;
  std::uint64_t duplicates_ = 0;
  std::uint64_t integrity_faults_ = 0;
};

}  // namespace dfecsim

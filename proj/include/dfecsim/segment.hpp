#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "dfecsim/fec_codec.hpp"
#include "dfecsim/sim_time.hpp"

namespace dfecsim {

// Flat per-segment header abstraction; covers L2-L4 framing for capacity math.
constexpr std::uint32_t kHeaderBytes = 64;

enum class SegKind : std::uint8_t { Syn, SynAck, HsAck, Data, Fec, Ack, Rst };

struct FecFeedback {
  enum class Outcome : std::uint8_t { Recovered, Failed, AckedUnused };
  std::uint64_t block_id = 0;
  Outcome outcome = Outcome::AckedUnused;
  std::uint32_t missing_count = 0;  // Failed only
};

struct SackRange {
  std::uint64_t begin = 0;  // inclusive byte sequence
  std::uint64_t end = 0;    // exclusive
};

struct AckInfo {
  std::uint64_t cum_ack = 0;
  std::vector<SackRange> sack;
  std::vector<FecFeedback> feedback;
  bool fec_elicited = false;  // triggered by a parity segment, not by data
};

struct Segment {
  SegKind kind = SegKind::Data;
  std::uint32_t conn_id = 0;

  std::uint64_t seq = 0;                  // Data: subflow byte sequence
  std::vector<std::uint8_t> payload;      // Data
  std::uint64_t meta = 0;                 // Data: 64-bit reassembly word

  std::shared_ptr<const fec::FecBlock> fec;  // Fec
  std::optional<AckInfo> ack;                // Ack (or piggybacked)

  bool fec_flag = false;       // carried on every segment of a FEC connection
  bool fec_offer = false;      // handshake negotiation bit
  bool fec_stripped = false;   // set by a stripping middlebox model
  bool retransmission = false;
  SimTime send_time = 0;

  // Background filler traffic sizes itself without a payload buffer.
  std::uint32_t wire_len_override = 0;

  std::size_t wire_size() const {
    if (wire_len_override > 0) return wire_len_override;
    std::size_t body = payload.size();
    if (fec) body += fec->parity.size();
    return body + kHeaderBytes;
  }
};

}  // namespace dfecsim

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace dfecsim::fec {

// One covered segment: sequence number plus true payload length. Payloads of
// unequal length are zero-padded to the block maximum for the XOR; recovery
// truncates back to the recorded length.
struct FecMember {
  std::uint64_t seq = 0;
  std::uint32_t len = 0;
};

// Systematic XOR block: one parity segment over k data segments. Repairs
// exactly one erasure. covered_meta carries the XOR of the per-segment
// reassembly metadata words so a recovered segment's stream mapping can be
// rebuilt along with its bytes.
struct FecBlock {
  std::uint64_t block_id = 0;
  std::vector<FecMember> members;  // strictly increasing seq, size k >= 1
  std::vector<std::uint8_t> parity;
  std::uint64_t covered_meta = 0;

  std::uint32_t k() const { return static_cast<std::uint32_t>(members.size()); }
};

struct SegmentInput {
  std::uint64_t seq = 0;
  std::span<const std::uint8_t> payload;
  std::uint64_t meta = 0;
};

struct ReceivedSegment {
  std::span<const std::uint8_t> payload;
  std::uint64_t meta = 0;
};

struct RecoveryOutcome {
  enum class Kind { Recovered, NotNeeded, Failed };

  Kind kind = Kind::NotNeeded;
  std::uint64_t seq = 0;                  // Recovered
  std::vector<std::uint8_t> payload;      // Recovered, truncated to true length
  std::uint64_t meta = 0;                 // Recovered
  std::uint32_t missing_count = 0;        // Failed
};

// Builds the parity block over the given segments. Throws std::invalid_argument
// on empty input or non-increasing sequence numbers.
FecBlock encode_block(std::uint64_t block_id, std::span<const SegmentInput> segments);

// Attempts single-erasure recovery given the member payloads that arrived.
// Keys of `received` must be member sequences (anything else throws).
RecoveryOutcome try_recover(const FecBlock& block,
                            const std::map<std::uint64_t, ReceivedSegment>& received);

// Wire overhead m/(k+m) of `fec_packets` parity packets over `data_packets`
// data packets. Throws if both counts are zero.
double fec_overhead(std::uint64_t fec_packets, std::uint64_t data_packets);

}  // namespace dfecsim::fec

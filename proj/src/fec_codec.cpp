#include "dfecsim/fec_codec.hpp"

#include <algorithm>
#include <stdexcept>

namespace dfecsim::fec {

namespace {

void xor_into(std::vector<std::uint8_t>& acc, std::span<const std::uint8_t> src) {
  for (std::size_t i = 0; i < src.size(); ++i) {
    acc[i] ^= src[i];
  }
}

}  // namespace

FecBlock encode_block(std::uint64_t block_id, std::span<const SegmentInput> segments) {
  if (segments.empty()) {
    throw std::invalid_argument("encode_block: empty segment list");
  }
  std::size_t max_len = 0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (i > 0 && segments[i].seq <= segments[i - 1].seq) {
      throw std::invalid_argument("encode_block: member sequences must be strictly increasing");
    }
    max_len = std::max(max_len, segments[i].payload.size());
  }

  FecBlock block;
  block.block_id = block_id;
  block.members.reserve(segments.size());
  block.parity.assign(max_len, 0);
  for (const SegmentInput& seg : segments) {
    block.members.push_back({seg.seq, static_cast<std::uint32_t>(seg.payload.size())});
    xor_into(block.parity, seg.payload);
    block.covered_meta ^= seg.meta;
  }
  return block;
}

RecoveryOutcome try_recover(const FecBlock& block,
                            const std::map<std::uint64_t, ReceivedSegment>& received) {
  for (const auto& [seq, unused] : received) {
    bool member = std::any_of(block.members.begin(), block.members.end(),
                              [seq](const FecMember& m) { return m.seq == seq; });
    if (!member) {
      throw std::invalid_argument("try_recover: received sequence is not a block member");
    }
  }

  const FecMember* missing = nullptr;
  std::uint32_t missing_count = 0;
  for (const FecMember& m : block.members) {
    if (!received.contains(m.seq)) {
      missing = &m;
      ++missing_count;
    }
  }

  RecoveryOutcome out;
  if (missing_count == 0) {
    out.kind = RecoveryOutcome::Kind::NotNeeded;
    return out;
  }
  if (missing_count >= 2) {
    out.kind = RecoveryOutcome::Kind::Failed;
    out.missing_count = missing_count;
    return out;
  }

  std::vector<std::uint8_t> buf = block.parity;
  std::uint64_t meta = block.covered_meta;
  for (const auto& [seq, seg] : received) {
    xor_into(buf, seg.payload);
    meta ^= seg.meta;
  }
  buf.resize(missing->len);

  out.kind = RecoveryOutcome::Kind::Recovered;
  out.seq = missing->seq;
  out.payload = std::move(buf);
  out.meta = meta;
  return out;
}

double fec_overhead(std::uint64_t fec_packets, std::uint64_t data_packets) {
  if (fec_packets == 0 && data_packets == 0) {
    throw std::invalid_argument("fec_overhead: no packets counted");
  }
  return static_cast<double>(fec_packets) /
         static_cast<double>(fec_packets + data_packets);
}

}  // namespace dfecsim::fec

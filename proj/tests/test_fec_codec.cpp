#include <doctest.h>

#include <algorithm>
#include <map>
#include <vector>

#include "dfecsim/fec_codec.hpp"
#include "dfecsim/rng.hpp"

using namespace dfecsim;
using namespace dfecsim::fec;

namespace {

// Independent oracle: XOR the given buffers byte-wise, zero-padded to the
// longest. Kept deliberately naive and separate from the codec.
std::vector<std::uint8_t> xor_oracle(const std::vector<std::vector<std::uint8_t>>& payloads) {
  std::size_t max_len = 0;
  for (const auto& p : payloads) max_len = std::max(max_len, p.size());
  std::vector<std::uint8_t> acc(max_len, 0);
  for (const auto& p : payloads) {
    for (std::size_t i = 0; i < p.size(); ++i) acc[i] ^= p[i];
  }
  return acc;
}

std::vector<SegmentInput> make_inputs(const std::vector<std::vector<std::uint8_t>>& payloads,
                                      const std::vector<std::uint64_t>& metas) {
  std::vector<SegmentInput> in;
  std::uint64_t seq = 0;
  for (std::size_t i = 0; i < payloads.size(); ++i) {
    in.push_back({seq, std::span<const std::uint8_t>(payloads[i]), metas[i]});
    seq += std::max<std::size_t>(payloads[i].size(), 1);
  }
  return in;
}

std::vector<std::vector<std::uint8_t>> random_payloads(RngStream& rng, std::size_t count,
                                                       std::size_t max_len) {
  std::vector<std::vector<std::uint8_t>> out(count);
  for (auto& p : out) {
    p.resize(rng.uniform_int(1, max_len));
    for (auto& b : p) b = static_cast<std::uint8_t>(rng.next_u64());
  }
  return out;
}

}  // namespace

TEST_CASE("encode_block: single segment parity is the payload itself") {
  std::vector<std::vector<std::uint8_t>> payloads = {{0xA5}};
  FecBlock b = encode_block(1, make_inputs(payloads, {7}));
  CHECK(b.k() == 1);
  CHECK(b.parity == std::vector<std::uint8_t>{0xA5});
  CHECK(b.covered_meta == 7);
}

TEST_CASE("encode_block: equal payloads cancel") {
  std::vector<std::vector<std::uint8_t>> payloads = {{0xFF}, {0xFF}};
  FecBlock b = encode_block(2, make_inputs(payloads, {3, 3}));
  CHECK(b.parity == std::vector<std::uint8_t>{0x00});
  CHECK(b.covered_meta == 0);
}

TEST_CASE("encode_block: 16 random payloads match the re-XOR oracle") {
  RngStream rng(42, "codec16");
  auto payloads = random_payloads(rng, 16, 1448);
  std::vector<std::uint64_t> metas(16);
  for (auto& m : metas) m = rng.next_u64();
  FecBlock b = encode_block(3, make_inputs(payloads, metas));

  // Parity XOR any 15 payloads equals the 16th (zero-padded).
  for (std::size_t drop = 0; drop < payloads.size(); ++drop) {
    std::vector<std::vector<std::uint8_t>> others;
    others.push_back(b.parity);
    for (std::size_t i = 0; i < payloads.size(); ++i) {
      if (i != drop) others.push_back(payloads[i]);
    }
    std::vector<std::uint8_t> rebuilt = xor_oracle(others);
    rebuilt.resize(payloads[drop].size());
    CHECK(rebuilt == payloads[drop]);
  }
}

TEST_CASE("encode_block: parity is order-insensitive, bookkeeping is not") {
  RngStream rng(7, "perm");
  auto payloads = random_payloads(rng, 8, 256);
  std::vector<std::uint64_t> metas(8, 0);
  for (auto& m : metas) m = rng.next_u64();

  FecBlock a = encode_block(1, make_inputs(payloads, metas));
  std::reverse(payloads.begin(), payloads.end());
  std::reverse(metas.begin(), metas.end());
  FecBlock b = encode_block(1, make_inputs(payloads, metas));
  CHECK(a.parity == b.parity);
  CHECK(a.covered_meta == b.covered_meta);
}

TEST_CASE("encode_block rejects empty input and bad sequences") {
  CHECK_THROWS_AS(encode_block(1, {}), std::invalid_argument);
  std::vector<std::uint8_t> p{1};
  std::vector<SegmentInput> dup = {{5, p, 0}, {5, p, 0}};
  CHECK_THROWS_AS(encode_block(1, dup), std::invalid_argument);
}

TEST_CASE("try_recover: the three outcomes") {
  std::vector<std::vector<std::uint8_t>> payloads = {{1, 2, 3}, {4, 5}, {6}};
  std::vector<std::uint64_t> metas = {10, 20, 30};
  auto inputs = make_inputs(payloads, metas);
  FecBlock b = encode_block(9, inputs);

  std::map<std::uint64_t, ReceivedSegment> all;
  for (const auto& in : inputs) all.emplace(in.seq, ReceivedSegment{in.payload, in.meta});

  SUBCASE("all received: NotNeeded") {
    auto out = try_recover(b, all);
    CHECK(out.kind == RecoveryOutcome::Kind::NotNeeded);
  }
  SUBCASE("one missing: recovered bit-exact with meta") {
    auto partial = all;
    partial.erase(inputs[1].seq);
    auto out = try_recover(b, partial);
    REQUIRE(out.kind == RecoveryOutcome::Kind::Recovered);
    CHECK(out.seq == inputs[1].seq);
    CHECK(out.payload == payloads[1]);
    CHECK(out.meta == 20);
  }
  SUBCASE("two missing: Failed with count") {
    std::map<std::uint64_t, ReceivedSegment> one;
    one.emplace(inputs[0].seq, all.at(inputs[0].seq));
    auto out = try_recover(b, one);
    CHECK(out.kind == RecoveryOutcome::Kind::Failed);
    CHECK(out.missing_count == 2);
  }
  SUBCASE("non-member key throws") {
    auto bad = all;
    bad.emplace(999, ReceivedSegment{std::span<const std::uint8_t>(payloads[0]), 0});
    CHECK_THROWS_AS(try_recover(b, bad), std::invalid_argument);
  }
}

TEST_CASE("round trip: every single-erasure position over random blocks") {
  RngStream rng(2024, "roundtrip");
  for (int trial = 0; trial < 60; ++trial) {
    std::size_t k = rng.uniform_int(1, 256);
    auto payloads = random_payloads(rng, k, 64);
    std::vector<std::uint64_t> metas(k);
    for (auto& m : metas) m = rng.next_u64();
    auto inputs = make_inputs(payloads, metas);
    FecBlock b = encode_block(static_cast<std::uint64_t>(trial), inputs);

    std::map<std::uint64_t, ReceivedSegment> all;
    for (const auto& in : inputs) all.emplace(in.seq, ReceivedSegment{in.payload, in.meta});

    for (std::size_t drop = 0; drop < k; ++drop) {
      auto partial = all;
      partial.erase(inputs[drop].seq);
      auto out = try_recover(b, partial);
      REQUIRE(out.kind == RecoveryOutcome::Kind::Recovered);
      CHECK(out.payload == payloads[drop]);
      CHECK(out.meta == metas[drop]);
    }
  }
}

TEST_CASE("try_recover never fabricates a result for >= 2 erasures") {
  RngStream rng(5, "multierasure");
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t k = rng.uniform_int(2, 64);
    auto payloads = random_payloads(rng, k, 64);
    std::vector<std::uint64_t> metas(k, 0);
    auto inputs = make_inputs(payloads, metas);
    FecBlock b = encode_block(static_cast<std::uint64_t>(trial), inputs);

    std::size_t n_drop = rng.uniform_int(2, k);
    std::map<std::uint64_t, ReceivedSegment> partial;
    for (std::size_t i = n_drop; i < k; ++i) {
      partial.emplace(inputs[i].seq, ReceivedSegment{inputs[i].payload, inputs[i].meta});
    }
    auto out = try_recover(b, partial);
    CHECK(out.kind == RecoveryOutcome::Kind::Failed);
    CHECK(out.missing_count == n_drop);
  }
}

TEST_CASE("fec_overhead formula") {
  CHECK(fec_overhead(1, 4) == doctest::Approx(0.20));
  CHECK(fec_overhead(0, 100) == doctest::Approx(0.0));
  CHECK(fec_overhead(1, 9) == doctest::Approx(0.10));
  CHECK_THROWS_AS(fec_overhead(0, 0), std::invalid_argument);
}

#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace dfecsim {

// Deterministic application byte stream: the byte at any offset is a pure
// function of (salt, offset), so a receiver can verify delivered content
// without the sender buffering the whole transfer.
class StreamBytes {
 public:
  explicit StreamBytes(std::uint64_t salt) : salt_(salt) {}

  std::uint8_t at(std::uint64_t offset) const {
    std::uint64_t word = mix(salt_ ^ (offset >> 3));
    return static_cast<std::uint8_t>(word >> (8 * (offset & 7)));
  }

  void fill(std::uint64_t offset, std::span<std::uint8_t> out) const {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(offset + i);
  }

  std::vector<std::uint8_t> slice(std::uint64_t offset, std::size_t len) const {
    std::vector<std::uint8_t> buf(len);
    fill(offset, buf);
    return buf;
  }

  bool matches(std::uint64_t offset, std::span<const std::uint8_t> data) const {
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data[i] != at(offset + i)) return false;
    }
    return true;
  }

 private:
  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::uint64_t salt_;
};

}  // namespace dfecsim

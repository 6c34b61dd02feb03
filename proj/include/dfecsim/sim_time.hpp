#pragma once

#include <cstdint>

namespace dfecsim {

// Simulation clock: signed nanoseconds since scenario start.
using SimTime = std::int64_t;

constexpr SimTime kNsPerUs = 1'000;
constexpr SimTime kNsPerMs = 1'000'000;
constexpr SimTime kNsPerSec = 1'000'000'000;

constexpr SimTime usec(double v) { return static_cast<SimTime>(v * kNsPerUs); }
constexpr SimTime msec(double v) { return static_cast<SimTime>(v * kNsPerMs); }
constexpr SimTime secs(double v) { return static_cast<SimTime>(v * kNsPerSec); }

constexpr double to_seconds(SimTime t) { return static_cast<double>(t) / kNsPerSec; }
constexpr double to_millis(SimTime t) { return static_cast<double>(t) / kNsPerMs; }

}  // namespace dfecsim

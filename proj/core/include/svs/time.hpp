#pragma once

#include <chrono>
#include <cstdint>

namespace svs {

// All timestamps are int64 nanoseconds. Virtual runs start at 0; real runs
// use the raw monotonic clock so values are comparable across processes on
// one host.
using TimeNs = std::int64_t;

inline constexpr TimeNs kNsPerSec = 1'000'000'000;
inline constexpr TimeNs kNsPerMs = 1'000'000;

constexpr TimeNs ms_to_ns(double ms) {
    return static_cast<TimeNs>(ms * 1e6 + (ms >= 0 ? 0.5 : -0.5));
}

constexpr TimeNs sec_to_ns(double s) {
    return static_cast<TimeNs>(s * 1e9 + (s >= 0 ? 0.5 : -0.5));
}

constexpr double ns_to_s(TimeNs ns) { return static_cast<double>(ns) / 1e9; }
constexpr double ns_to_ms(TimeNs ns) { return static_cast<double>(ns) / 1e6; }

// Raw monotonic clock reading; comparable across processes on one host.
inline TimeNs monotonic_now_ns() {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

// Capture instant of frame k at a given rate, relative to a camera epoch.
// Integer arithmetic: exact and strictly increasing.
constexpr TimeNs frame_capture_offset(std::int64_t frame_index, double frame_rate) {
    return static_cast<TimeNs>(static_cast<double>(frame_index) * 1e9 / frame_rate);
}

}  // namespace svs

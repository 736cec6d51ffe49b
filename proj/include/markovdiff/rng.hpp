#pragma once

#include <cstdint>

namespace markovdiff {

// Identifies an independent substream: a fixed (seed, stream) pair reproduces
// the same draws bit-for-bit regardless of what other streams are doing, so
// per-path streams make parallel Monte Carlo schedules reproducible.
struct RandomStream {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

// Counter-based generator (Philox4x32-10).
class Philox {
public:
  explicit Philox(RandomStream s) : Philox(s.seed, s.stream) {}
  Philox(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64();
  double uniform01(); // strictly inside (0, 1)
  double normal();    // standard normal (Box-Muller, no state carried over)

  struct Block {
    std::uint32_t x[4];
  };
  // One 10-round keyed block, exposed for known-answer tests.
  static Block block(const std::uint32_t ctr[4], const std::uint32_t key[2]);

private:
  std::uint32_t key_[2];
  std::uint32_t stream_[2];
  std::uint64_t counter_ = 0;
  Block buf_{};
  int buf_pos_ = 4; // empty; first draw refills
  void refill();
};

} // namespace markovdiff

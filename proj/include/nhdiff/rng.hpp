#pragma once

#include <array>
#include <cstdint>

namespace nhdiff::rng {

// Philox4x32-10 block function.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key);

std::uint64_t splitmix64(std::uint64_t x);

// Stateless generator addressed by (path, step, component); the key is derived
// from the master seed, so any draw can be reproduced independently of thread
// scheduling or evaluation order.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed);
  std::uint64_t seed() const { return seed_; }
  // Uniform in (0, 1].
  double uniform(std::uint64_t path, std::uint64_t step, std::uint32_t component) const;
  double normal(std::uint64_t path, std::uint64_t step, std::uint32_t component) const;

 private:
  std::array<std::uint32_t, 4> block(std::uint64_t path, std::uint64_t step, std::uint32_t component) const;
  std::uint64_t seed_;
  std::array<std::uint32_t, 2> key_;
};

}  // namespace nhdiff::rng

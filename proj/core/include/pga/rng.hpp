#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace pga::rng {

// Counter-based seeding: every consumer derives an independent stream as
//   state0 = mix(mix(mix(seed) ^ fnv1a(purpose)) ^ step)
// so resuming a run at step k reproduces the exact draws of an
// uninterrupted run, and distinct purposes never share a stream.
uint64_t fnv1a(std::string_view s);
uint64_t mix(uint64_t x);  // splitmix64 finalizer
uint64_t derive_stream(uint64_t seed, std::string_view purpose, uint64_t step);

// Deterministic scalar generator over a splitmix64 state. Not
// cryptographic; chosen for exact cross-run reproducibility.
class Stream {
 public:
  explicit Stream(uint64_t state) : state_(state) {}
  Stream(uint64_t seed, std::string_view purpose, uint64_t step)
      : state_(derive_stream(seed, purpose, step)) {}

  uint64_t next_u64();
  double uniform();                      // [0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  double normal();                       // Box-Muller, one spare cached

  std::vector<double> normals(size_t n);
  std::vector<double> uniforms(size_t n, double lo, double hi);

 private:
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace pga::rng

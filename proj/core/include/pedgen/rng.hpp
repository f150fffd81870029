#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace pedgen {

// Deterministic random source. All draws are defined directly on the raw
// mt19937_64 stream (no std::*_distribution objects, whose internal state is
// implementation-defined), so sequences are reproducible across platforms and
// the complete state round-trips through a string for checkpointing.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0);

  uint64_t next_u64();
  double uniform();                    // [0, 1)
  double uniform(double lo, double hi);
  int uniform_int(int n);              // [0, n)
  double normal();                     // N(0, 1); consumes two uniforms, no cached spare

  std::string serialize() const;
  void restore(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

}  // namespace pedgen

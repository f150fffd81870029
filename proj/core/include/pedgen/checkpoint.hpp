#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pedgen/nn.hpp"
#include "pedgen/tensor.hpp"

namespace pedgen {

// Versioned binary snapshot of a training run: every parameter tensor, the
// optimizer moments, the step counter, the RNG stream and the vocabulary,
// keyed by a hash of the config that produced them. Files are written
// atomically (tmp + rename); a truncated or foreign file fails to load.
struct CheckpointPayload {
  static constexpr uint32_t kVersion = 1;

  uint64_t config_hash = 0;
  std::string config_json;
  std::vector<std::string> vocab_tokens;
  std::vector<std::pair<std::string, Tensor>> tensors;

  struct OptState {
    int64_t t = 0;
    std::map<std::string, Adam::Slot> slots;
  };
  OptState gen_opt, disc_opt, match_opt;

  int64_t step = 0;
  std::string rng_state;
};

void save_checkpoint(const CheckpointPayload& payload, const std::string& path);
CheckpointPayload load_checkpoint(const std::string& path);

}  // namespace pedgen

#pragma once

#include <string>
#include <vector>

namespace pedgen::cli {

// Exit codes shared by every subcommand:
//   0 success, 2 bad input (config, paths, flags), 3 numeric abort (NaN), 1 other.
inline constexpr int kExitOk = 0;
inline constexpr int kExitOther = 1;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumeric = 3;

struct CommonOptions {
  std::string config_path;
  std::string out_dir;
  uint64_t seed = 0;
  bool seed_set = false;
  std::string profile;                 // empty = keep config value
  std::vector<std::string> ablations;  // no-hpd / no-visa / no-sca
};

int cmd_train(const CommonOptions& common, const std::string& data_manifest,
              const std::string& resume_path, int steps_override, int batch_override,
              int pretrain_override, int checkpoint_every);
int cmd_generate(const CommonOptions& common, const std::string& checkpoint,
                 const std::string& captions_path, int samples_per_caption);
int cmd_evaluate(const CommonOptions& common, const std::string& images_dir,
                 const std::string& detections_path, const std::string& detector_name,
                 const std::string& report_path, const std::string& class_probs_path, int splits);
int cmd_inspect_attention(const CommonOptions& common, const std::string& checkpoint,
                          const std::string& caption);
int cmd_make_synthetic(const CommonOptions& common, int count, int resolution,
                       const std::string& split);

// Resolves the output directory: --out flag, else $PEDGEN_OUT_ROOT/<leaf>,
// else ./<leaf>. Creates it.
std::string resolve_out_dir(const CommonOptions& common, const std::string& leaf);

}  // namespace pedgen::cli

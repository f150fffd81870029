#include <CLI11.hpp>

#include "commands.hpp"

namespace {

void add_common(CLI::App* cmd, pedgen::cli::CommonOptions& common) {
  cmd->add_option("--config", common.config_path, "Config JSON mirroring the training fields");
  cmd->add_option("--out", common.out_dir,
                  "Output directory (default: $PEDGEN_OUT_ROOT/<command> or ./<command>)");
  cmd->add_option("--seed", common.seed, "Random seed")->each([&common](const std::string&) {
    common.seed_set = true;
  });
  cmd->add_option("--profile", common.profile, "Model profile")
      ->check(CLI::IsMember({"tiny", "paper"}));
  cmd->add_option("--ablate", common.ablations,
                  "Disable a component (repeatable): no-hpd, no-visa, no-sca")
      ->check(CLI::IsMember({"no-hpd", "no-visa", "no-sca"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"text-to-pedestrian synthesis toolkit"};
  app.require_subcommand(1);

  pedgen::cli::CommonOptions train_common, gen_common, eval_common, inspect_common, synth_common;

  // train
  auto* train = app.add_subcommand("train", "Train on a dataset manifest");
  add_common(train, train_common);
  std::string data_manifest, resume_path;
  int steps_override = -1, batch_override = -1, pretrain_override = -1, checkpoint_every = 0;
  train->add_option("--data", data_manifest, "Dataset manifest JSON")->required();
  train->add_option("--resume", resume_path, "Checkpoint to resume from");
  train->add_option("--steps", steps_override, "Override step count");
  train->add_option("--batch-size", batch_override, "Override batch size");
  train->add_option("--pretrain-steps", pretrain_override, "Override matching pretrain steps");
  train->add_option("--checkpoint-every", checkpoint_every, "Also checkpoint every N steps");

  // generate
  auto* gen = app.add_subcommand("generate", "Generate images from captions");
  add_common(gen, gen_common);
  std::string checkpoint, captions_path;
  int count = 1;
  gen->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();
  gen->add_option("--captions", captions_path, "Caption file, one per line")->required();
  gen->add_option("--count", count, "Samples per caption");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Pose metrics over generated images");
  add_common(eval, eval_common);
  std::string images_dir, detections_path, detector_name = "synthetic-oracle", report_path,
              class_probs_path;
  int splits = 1;
  eval->add_option("--images", images_dir, "Directory of .ppm images");
  eval->add_option("--detections", detections_path, "Precomputed detections JSONL");
  eval->add_option("--detector", detector_name, "Keypoint detector name");
  eval->add_option("--report", report_path, "Report JSON path");
  eval->add_option("--class-probs", class_probs_path,
                   "JSON matrix of classifier probabilities for the inception score");
  eval->add_option("--splits", splits, "Inception score splits");

  // inspect-attention
  auto* inspect = app.add_subcommand("inspect-attention",
                                     "Dump generator attention maps and top words");
  add_common(inspect, inspect_common);
  std::string inspect_checkpoint, caption;
  inspect->add_option("--checkpoint", inspect_checkpoint, "Trained checkpoint")->required();
  inspect->add_option("--caption", caption, "Caption to inspect")->required();

  // make-synthetic
  auto* synth = app.add_subcommand("make-synthetic", "Write a procedural color-band dataset");
  add_common(synth, synth_common);
  int synth_count = 64, resolution = 32;
  std::string split = "train";
  synth->add_option("--count", synth_count, "Image count");
  synth->add_option("--resolution", resolution, "Image edge in pixels");
  synth->add_option("--split", split, "Split tag for the manifest");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : pedgen::cli::kExitInput;
  }

  if (train->parsed())
    return pedgen::cli::cmd_train(train_common, data_manifest, resume_path, steps_override,
                                  batch_override, pretrain_override, checkpoint_every);
  if (gen->parsed())
    return pedgen::cli::cmd_generate(gen_common, checkpoint, captions_path, count);
  if (eval->parsed())
    return pedgen::cli::cmd_evaluate(eval_common, images_dir, detections_path, detector_name,
                                     report_path, class_probs_path, splits);
  if (inspect->parsed())
    return pedgen::cli::cmd_inspect_attention(inspect_common, inspect_checkpoint, caption);
  if (synth->parsed())
    return pedgen::cli::cmd_make_synthetic(synth_common, synth_count, resolution, split);
  return pedgen::cli::kExitInput;
}

#include "commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "pedgen/attention.hpp"
#include "pedgen/common.hpp"
#include "pedgen/config.hpp"
#include "pedgen/dataset.hpp"
#include "pedgen/image.hpp"
#include "pedgen/metrics.hpp"
#include "pedgen/synthetic.hpp"
#include "pedgen/training.hpp"

namespace fs = std::filesystem;

namespace pedgen::cli {

namespace {

int classify_exit(const std::exception& e) {
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  if (dynamic_cast<const InputError*>(&e)) return kExitInput;
  if (dynamic_cast<const IoError*>(&e)) return kExitInput;
  return kExitOther;
}

TrainConfig resolve_config(const CommonOptions& common) {
  TrainConfig cfg;
  if (!common.config_path.empty()) cfg = TrainConfig::load(common.config_path);
  if (!common.profile.empty()) cfg.profile = common.profile;
  if (common.seed_set) cfg.seed = common.seed;
  for (const auto& a : common.ablations) {
    if (a == "no-hpd")
      cfg.ablation.use_hpd = false;
    else if (a == "no-visa")
      cfg.ablation.use_visa = false;
    else if (a == "no-sca")
      cfg.ablation.use_sca = false;
    else
      throw InputError("unknown --ablate value '" + a + "' (no-hpd, no-visa, no-sca)");
  }
  cfg.validate();
  return cfg;
}

Tensor draw_vector(int dim, Rng& rng) {
  std::vector<double> v(static_cast<size_t>(dim));
  for (auto& x : v) x = rng.normal();
  return Tensor::leaf({dim}, std::move(v));
}

}  // namespace

std::string resolve_out_dir(const CommonOptions& common, const std::string& leaf) {
  fs::path out;
  if (!common.out_dir.empty()) {
    out = common.out_dir;
  } else if (const char* root = std::getenv("PEDGEN_OUT_ROOT"); root && *root) {
    out = fs::path(root) / leaf;
  } else {
    out = fs::path(leaf);
  }
  fs::create_directories(out);
  return out.string();
}

int cmd_train(const CommonOptions& common, const std::string& data_manifest,
              const std::string& resume_path, int steps_override, int batch_override,
              int pretrain_override, int checkpoint_every) {
  try {
    TrainConfig cfg = resolve_config(common);
    if (steps_override >= 0) cfg.steps = steps_override;
    if (batch_override >= 0) cfg.batch_size = batch_override;
    if (pretrain_override >= 0) cfg.pretrain_steps = pretrain_override;
    cfg.validate();
    if (data_manifest.empty()) throw InputError("train: --data <manifest.json> is required");

    const std::string out = resolve_out_dir(common, "train_run");
    cfg.save((fs::path(out) / "config.json").string());  // resolved config, for provenance

    DatasetManifest manifest = ingest_dataset(data_manifest);
    std::unique_ptr<Trainer> trainer;
    if (resume_path.empty())
      trainer = std::make_unique<Trainer>(cfg, manifest);
    else
      trainer = std::make_unique<Trainer>(cfg, manifest, resume_path);
    trainer->vocab().save((fs::path(out) / "vocab.txt").string());

    std::ofstream metrics((fs::path(out) / "metrics.jsonl").string(), std::ios::app);
    if (!metrics) throw IoError("train: cannot open metrics log in " + out);

    const std::string ckpt_path = (fs::path(out) / "checkpoint.ckpt").string();
    for (int i = 0; i < cfg.steps; ++i) {
      StepResult r = trainer->train_step();
      metrics << r.to_json_line(trainer->step()) << "\n";
      if (checkpoint_every > 0 && trainer->step() % checkpoint_every == 0)
        trainer->save(ckpt_path);
    }
    metrics.flush();
    trainer->save(ckpt_path);
    std::cout << "trained " << cfg.steps << " step(s); checkpoint at " << ckpt_path << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "train: " << e.what() << "\n";
    return classify_exit(e);
  }
}

int cmd_generate(const CommonOptions& common, const std::string& checkpoint,
                 const std::string& captions_path, int samples_per_caption) {
  try {
    if (checkpoint.empty()) throw InputError("generate: --checkpoint is required");
    if (samples_per_caption < 1) throw InputError("generate: --count must be >= 1");
    LoadedModel lm = load_model(checkpoint);
    const ModelProfile profile = lm.config.model();

    std::ifstream caps(captions_path);
    if (!caps) throw InputError("generate: captions file not found: " + captions_path);
    std::vector<std::string> captions;
    std::string line;
    while (std::getline(caps, line))
      if (!line.empty()) captions.push_back(line);
    if (captions.empty()) throw InputError("generate: no captions in " + captions_path);

    const std::string out = resolve_out_dir(common, "generated");
    const uint64_t seed = common.seed_set ? common.seed : 0;
    Rng rng(seed);
    TextToImage pipeline = lm.model->pipeline();

    int total_unknown = 0;
    nlohmann::json index = nlohmann::json::array();
    for (size_t c = 0; c < captions.size(); ++c) {
      int unk = 0;
      TokenSequence tokens =
          make_sequence(tokenize(captions[c]), lm.vocab, profile.t_max, &unk);
      total_unknown += unk;
      for (int s = 0; s < samples_per_caption; ++s) {
        Tensor z = draw_vector(profile.latent_dim, rng);
        Tensor noise = draw_vector(profile.condition_dim, rng);
        GenerationResult res = pipeline.generate(tokens, z, noise);
        nlohmann::json entry;
        entry["caption_id"] = c;
        entry["caption"] = captions[c];
        entry["sample"] = s;
        entry["seed"] = seed;
        entry["unknown_tokens"] = unk;
        nlohmann::json files = nlohmann::json::array();
        for (const auto& bundle : res.bundles) {
          char name[96];
          std::snprintf(name, sizeof(name), "cap%03zu_seed%llu_s%03d_stage%d.ppm", c,
                        static_cast<unsigned long long>(seed), s, bundle.stage);
          write_ppm(tensor_to_image(bundle.image), (fs::path(out) / name).string());
          files.push_back(name);
        }
        entry["files"] = files;
        index.push_back(std::move(entry));
      }
    }
    {
      std::ofstream os((fs::path(out) / "index.json").string());
      os << index.dump(1) << "\n";
    }
    if (total_unknown > 0)
      std::cerr << "generate: warning: " << total_unknown
                << " token(s) outside the vocabulary were mapped to <unk>\n";
    std::cout << "wrote " << captions.size() * static_cast<size_t>(samples_per_caption) *
                                 static_cast<size_t>(profile.stages)
              << " image(s) to " << out << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "generate: " << e.what() << "\n";
    return classify_exit(e);
  }
}

int cmd_evaluate(const CommonOptions& common, const std::string& images_dir,
                 const std::string& detections_path, const std::string& detector_name,
                 const std::string& report_path, const std::string& class_probs_path, int splits) {
  try {
    std::vector<std::pair<std::string, KeypointSet>> detections;
    const std::string out = resolve_out_dir(common, "evaluation");

    if (!detections_path.empty()) {
      detections = read_detections(detections_path);
    } else {
      if (images_dir.empty())
        throw InputError("evaluate: need --images <dir> or --detections <file>");
      std::vector<fs::path> files;
      if (fs::exists(images_dir))
        for (const auto& entry : fs::directory_iterator(images_dir))
          if (entry.path().extension() == ".ppm") files.push_back(entry.path());
      std::sort(files.begin(), files.end());
      if (files.empty()) throw InputError("evaluate: no .ppm images in " + images_dir);

      auto detector = make_detector(detector_name);
      for (const auto& f : files) {
        Image8 img = read_ppm(f.string());
        KeypointSet set = detector->detect(img);
        // rescale coordinates into the fixed 256 frame the variance metric uses
        for (auto& p : set.parts) {
          if (!p.detected) continue;
          p.x *= kPoseVarianceScale / img.width;
          p.y *= kPoseVarianceScale / img.height;
        }
        detections.emplace_back(f.filename().string(), set);
      }
      write_detections(detections, (fs::path(out) / "detections.jsonl").string());
    }
    if (detections.empty()) throw InputError("evaluate: empty detection set");

    std::vector<KeypointSet> sets;
    for (const auto& [id, s] : detections) sets.push_back(s);
    PoseReport report = make_pose_report(sets);

    nlohmann::json j = nlohmann::json::parse(report.to_json());
    if (!class_probs_path.empty()) {
      std::ifstream is(class_probs_path);
      if (!is) throw InputError("evaluate: class-probs file not found: " + class_probs_path);
      nlohmann::json probs_j;
      is >> probs_j;
      const int n = static_cast<int>(probs_j.size());
      if (n == 0) throw InputError("evaluate: class-probs file is empty");
      const int c = static_cast<int>(probs_j[0].size());
      std::vector<double> vals;
      for (const auto& row : probs_j)
        for (const auto& v : row) vals.push_back(v.get<double>());
      auto [mean, sd] = inception_score(Tensor::leaf({n, c}, std::move(vals)), splits);
      j["inception_score"] = {{"mean", mean}, {"std", sd}, {"splits", splits}};
    }

    const std::string rp = report_path.empty() ? (fs::path(out) / "report.json").string()
                                               : report_path;
    {
      std::ofstream os(rp);
      if (!os) throw IoError("evaluate: cannot write " + rp);
      os << j.dump(2) << "\n";
    }
    std::cout << report.to_table();
    if (j.contains("inception_score"))
      std::cout << "inception score: " << j["inception_score"]["mean"].get<double>() << " +- "
                << j["inception_score"]["std"].get<double>() << "\n";
    std::cout << "report written to " << rp << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "evaluate: " << e.what() << "\n";
    return classify_exit(e);
  }
}

int cmd_inspect_attention(const CommonOptions& common, const std::string& checkpoint,
                          const std::string& caption) {
  try {
    if (checkpoint.empty()) throw InputError("inspect-attention: --checkpoint is required");
    if (caption.empty()) throw InputError("inspect-attention: --caption is required");
    LoadedModel lm = load_model(checkpoint);
    const ModelProfile profile = lm.config.model();
    const std::string out = resolve_out_dir(common, "attention");

    int unk = 0;
    std::vector<std::string> words_text = tokenize(caption);
    TokenSequence tokens = make_sequence(words_text, lm.vocab, profile.t_max, &unk);

    Rng rng(common.seed_set ? common.seed : 0);
    Tensor z = draw_vector(profile.latent_dim, rng);
    Tensor noise = draw_vector(profile.condition_dim, rng);
    GenerationResult res = lm.model->pipeline().generate(tokens, z, noise);

    const int top_k = std::min(5, tokens.true_length);
    nlohmann::json j;
    j["caption"] = caption;
    j["unknown_tokens"] = unk;
    nlohmann::json stages_j = nlohmann::json::array();
    for (size_t s = 0; s < res.attention.size(); ++s) {
      const Tensor& map = res.attention[s];  // (N, T)
      const int n = map.dim(0);
      const int stage = static_cast<int>(s) + 1;
      const RegionFeatureGrid& grid = res.bundles[static_cast<size_t>(stage) - 1].hidden;

      char blob_name[64];
      std::snprintf(blob_name, sizeof(blob_name), "stage%d.attn", stage);
      write_attention_blob(map, (fs::path(out) / blob_name).string());

      // column sums rank words for the whole stage
      std::vector<std::pair<double, int>> totals;
      for (int t = 0; t < tokens.true_length; ++t) {
        double acc = 0.0;
        for (int u = 0; u < n; ++u) acc += map.at({u, t});
        totals.emplace_back(acc, t);
      }
      std::sort(totals.begin(), totals.end(), [](const auto& a, const auto& b) {
        return a.first > b.first;
      });

      nlohmann::json stage_j;
      stage_j["stage"] = stage;
      stage_j["map_file"] = blob_name;
      stage_j["grid"] = {grid.height, grid.width};
      nlohmann::json top_words = nlohmann::json::array();
      for (int k = 0; k < top_k; ++k) {
        const int t = totals[static_cast<size_t>(k)].second;
        top_words.push_back({{"position", t},
                             {"token", lm.vocab.token_of(tokens.ids[static_cast<size_t>(t)])},
                             {"weight", totals[static_cast<size_t>(k)].first}});
        // heatmap of this word's attention over the regions
        std::vector<double> weights;
        for (int u = 0; u < n; ++u) weights.push_back(map.at({u, t}));
        char heat_name[96];
        std::snprintf(heat_name, sizeof(heat_name), "stage%d_word%d_%s.ppm", stage, t,
                      lm.vocab.token_of(tokens.ids[static_cast<size_t>(t)]).c_str());
        const int res_px = profile.resolutions[static_cast<size_t>(stage)];
        write_ppm(heatmap_image(weights, grid.height, grid.width, res_px, res_px),
                  (fs::path(out) / heat_name).string());
      }
      stage_j["top_words"] = top_words;

      // per-region top words
      nlohmann::json regions_j = nlohmann::json::array();
      for (int u = 0; u < n; ++u) {
        std::vector<std::pair<double, int>> row;
        for (int t = 0; t < tokens.true_length; ++t) row.emplace_back(map.at({u, t}), t);
        std::sort(row.begin(), row.end(), [](const auto& a, const auto& b) {
          return a.first > b.first;
        });
        nlohmann::json rj = nlohmann::json::array();
        for (int k = 0; k < top_k; ++k)
          rj.push_back({{"position", row[static_cast<size_t>(k)].second},
                        {"token",
                         lm.vocab.token_of(tokens.ids[static_cast<size_t>(row[static_cast<size_t>(k)].second)])},
                        {"weight", row[static_cast<size_t>(k)].first}});
        regions_j.push_back(std::move(rj));
      }
      stage_j["per_region_top_words"] = regions_j;
      stages_j.push_back(std::move(stage_j));
    }
    j["stages"] = stages_j;

    // stage images for context
    for (const auto& bundle : res.bundles) {
      char name[64];
      std::snprintf(name, sizeof(name), "image_stage%d.ppm", bundle.stage);
      write_ppm(tensor_to_image(bundle.image), (fs::path(out) / name).string());
    }
    {
      std::ofstream os((fs::path(out) / "attention.json").string());
      os << j.dump(2) << "\n";
    }
    std::cout << "attention dump written to " << out << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "inspect-attention: " << e.what() << "\n";
    return classify_exit(e);
  }
}

int cmd_make_synthetic(const CommonOptions& common, int count, int resolution,
                       const std::string& split) {
  try {
    SyntheticSpec spec;
    spec.count = count;
    spec.resolution = resolution;
    spec.split = split;
    spec.out_dir = resolve_out_dir(common, "synthetic");
    const uint64_t seed = common.seed_set ? common.seed : 0;
    DatasetManifest m = make_synthetic_dataset(spec, seed);
    std::cout << "wrote " << m.records.size() << " image(s) and manifest.json to " << spec.out_dir
              << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "make-synthetic: " << e.what() << "\n";
    return classify_exit(e);
  }
}

}  // namespace pedgen::cli

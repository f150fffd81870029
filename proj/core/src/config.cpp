#include "pedgen/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pedgen/common.hpp"

namespace pedgen {

void ModelProfile::validate() const {
  if (stages < 1) throw ContractError("ModelProfile: stages must be >= 1");
  if (static_cast<int>(resolutions.size()) != stages ||
      static_cast<int>(g_hidden_channels.size()) != stages)
    throw ContractError("ModelProfile: per-stage arrays must have one entry per stage");
  for (int i = 1; i < stages; ++i)
    if (resolutions[static_cast<size_t>(i)] != 2 * resolutions[static_cast<size_t>(i - 1)])
      throw ContractError("ModelProfile: resolutions must double per stage");
  if (word_dim < 1 || region_dim < 1 || condition_dim < 1 || latent_dim < 1 || t_max < 1)
    throw ContractError("ModelProfile: dimensions must be positive");
}

ModelProfile tiny_profile() {
  ModelProfile p;
  p.name = "tiny";
  p.stages = 3;
  p.resolutions = {8, 16, 32};
  p.word_dim = 16;
  p.region_dim = 16;
  p.condition_dim = 8;
  p.latent_dim = 8;
  p.t_max = 16;  // the synthetic caption templates run 14 tokens
  p.g_base_size = 4;
  p.g_base_channels = 32;
  p.g_hidden_channels = {16, 12, 8};
  p.validate();
  return p;
}

ModelProfile paper_profile() {
  ModelProfile p;
  p.name = "paper";
  p.stages = 3;
  p.resolutions = {64, 128, 256};
  p.word_dim = 256;
  p.region_dim = 512;
  p.condition_dim = 100;
  p.latent_dim = 100;
  p.t_max = 30;
  p.g_base_size = 4;
  p.g_base_channels = 512;
  p.g_hidden_channels = {32, 16, 8};
  p.validate();
  return p;
}

ModelProfile profile_by_name(const std::string& name) {
  if (name == "tiny") return tiny_profile();
  if (name == "paper") return paper_profile();
  throw InputError("unknown profile '" + name + "' (expected tiny or paper)");
}

void TrainConfig::validate() const {
  profile_by_name(profile);
  if (batch_size < 2) throw InputError("TrainConfig: batch_size must be >= 2");
  if (steps < 0 || pretrain_steps < 0) throw InputError("TrainConfig: step counts must be >= 0");
  if (lr <= 0.0) throw InputError("TrainConfig: lr must be positive");
}

std::string TrainConfig::to_json() const {
  nlohmann::json j;
  j["profile"] = profile;
  j["batch_size"] = batch_size;
  j["steps"] = steps;
  j["pretrain_steps"] = pretrain_steps;
  j["lr"] = lr;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["seed"] = seed;
  j["lambda1"] = lambda1;
  j["lambda2"] = lambda2;
  j["ablation"] = {{"use_hpd", ablation.use_hpd},
                   {"use_visa", ablation.use_visa},
                   {"use_sca", ablation.use_sca}};
  j["damsm"] = {{"gamma1", damsm.gamma1}, {"gamma2", damsm.gamma2}, {"gamma3", damsm.gamma3}};
  return j.dump();  // nlohmann objects iterate in sorted key order
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("config parse failure: ") + e.what());
  }
  static const std::set<std::string> known{"profile", "batch_size", "steps",  "pretrain_steps",
                                           "lr",      "beta1",      "beta2",  "seed",
                                           "lambda1", "lambda2",    "ablation", "damsm"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw InputError("config: unknown key '" + it.key() + "'");

  TrainConfig c;
  try {
    if (j.contains("profile")) c.profile = j["profile"].get<std::string>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
    if (j.contains("steps")) c.steps = j["steps"].get<int>();
    if (j.contains("pretrain_steps")) c.pretrain_steps = j["pretrain_steps"].get<int>();
    if (j.contains("lr")) c.lr = j["lr"].get<double>();
    if (j.contains("beta1")) c.beta1 = j["beta1"].get<double>();
    if (j.contains("beta2")) c.beta2 = j["beta2"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
    if (j.contains("lambda1")) c.lambda1 = j["lambda1"].get<double>();
    if (j.contains("lambda2")) c.lambda2 = j["lambda2"].get<double>();
    if (j.contains("ablation")) {
      const auto& a = j["ablation"];
      if (a.contains("use_hpd")) c.ablation.use_hpd = a["use_hpd"].get<bool>();
      if (a.contains("use_visa")) c.ablation.use_visa = a["use_visa"].get<bool>();
      if (a.contains("use_sca")) c.ablation.use_sca = a["use_sca"].get<bool>();
    }
    if (j.contains("damsm")) {
      const auto& d = j["damsm"];
      if (d.contains("gamma1")) c.damsm.gamma1 = d["gamma1"].get<double>();
      if (d.contains("gamma2")) c.damsm.gamma2 = d["gamma2"].get<double>();
      if (d.contains("gamma3")) c.damsm.gamma3 = d["gamma3"].get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("config field type error: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("config file not found: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return from_json(buf.str());
}

void TrainConfig::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write config to " + path);
  os << to_json() << "\n";
}

uint64_t config_hash(const TrainConfig& cfg) {
  const std::string s = cfg.to_json();
  uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace pedgen

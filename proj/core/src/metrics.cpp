#include "pedgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pedgen/common.hpp"

namespace pedgen {

int KeypointSet::detected_count() const {
  int n = 0;
  for (const auto& p : parts) n += p.detected ? 1 : 0;
  return n;
}

double pose_score(const std::vector<KeypointSet>& detections) {
  if (detections.empty()) throw InputError("pose_score: empty detection list");
  double acc = 0.0;
  for (const auto& d : detections)
    acc += static_cast<double>(d.detected_count()) / kNumKeypoints;
  return acc / static_cast<double>(detections.size());
}

double pose_variance(const std::vector<KeypointSet>& detections, double b_max) {
  if (detections.size() < 2)
    throw InputError("pose_variance: needs at least two images, got " +
                     std::to_string(detections.size()));
  double total = 0.0;
  for (int part = 0; part < kNumKeypoints; ++part) {
    for (int axis = 0; axis < 2; ++axis) {
      // normalized coordinates of this part across images where detected
      std::vector<double> coords;
      for (const auto& d : detections) {
        const Keypoint& p = d.parts[static_cast<size_t>(part)];
        if (!p.detected) continue;
        coords.push_back((axis == 0 ? p.x : p.y) / b_max);
      }
      if (coords.size() < 2) continue;  // contributes zero variance
      double mean = 0.0;
      for (double c : coords) mean += c;
      mean /= static_cast<double>(coords.size());
      double var = 0.0;
      for (double c : coords) var += (c - mean) * (c - mean);
      var /= static_cast<double>(coords.size());  // population variance
      total += var;
    }
  }
  return std::exp(total / (kNumKeypoints * 2.0));
}

std::pair<double, double> inception_score(const Tensor& class_probs, int splits) {
  if (class_probs.shape().size() != 2) throw InputError("inception_score: (images, classes) matrix expected");
  const int n = class_probs.dim(0), c = class_probs.dim(1);
  if (n < 1) throw InputError("inception_score: empty matrix");
  if (splits < 1 || splits > n) throw InputError("inception_score: bad split count");
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < c; ++j) {
      const double p = class_probs.at({i, j});
      if (p < 0.0) throw InputError("inception_score: negative probability in row " + std::to_string(i));
      s += p;
    }
    if (std::fabs(s - 1.0) > 1e-6)
      throw InputError("inception_score: row " + std::to_string(i) + " sums to " +
                       std::to_string(s) + ", not 1");
  }

  std::vector<double> scores;
  const int chunk = n / splits;
  for (int s = 0; s < splits; ++s) {
    const int begin = s * chunk;
    const int end = s == splits - 1 ? n : begin + chunk;
    const int m = end - begin;
    std::vector<double> marginal(static_cast<size_t>(c), 0.0);
    for (int i = begin; i < end; ++i)
      for (int j = 0; j < c; ++j) marginal[static_cast<size_t>(j)] += class_probs.at({i, j}) / m;
    double kl_mean = 0.0;
    for (int i = begin; i < end; ++i) {
      double kl = 0.0;
      for (int j = 0; j < c; ++j) {
        const double p = class_probs.at({i, j});
        if (p <= 0.0) continue;  // 0 log 0 = 0
        kl += p * std::log(p / std::max(marginal[static_cast<size_t>(j)], 1e-300));
      }
      kl_mean += kl / m;
    }
    scores.push_back(std::exp(kl_mean));
  }
  double mean = 0.0;
  for (double x : scores) mean += x;
  mean /= static_cast<double>(scores.size());
  double var = 0.0;
  for (double x : scores) var += (x - mean) * (x - mean);
  var /= static_cast<double>(scores.size());
  return {mean, std::sqrt(var)};
}

PoseReport make_pose_report(const std::vector<KeypointSet>& detections, double b_max) {
  PoseReport r;
  r.image_count = static_cast<int>(detections.size());
  r.pose_score = pose_score(detections);
  if (detections.size() >= 2) {
    r.pose_variance = pose_variance(detections, b_max);
    r.pose_variance_valid = true;
  } else {
    r.pose_variance_valid = false;
    r.pose_variance_omitted_reason = "pose variance needs at least two images";
  }
  for (int part = 0; part < kNumKeypoints; ++part) {
    int n = 0;
    for (const auto& d : detections) n += d.parts[static_cast<size_t>(part)].detected ? 1 : 0;
    r.detection_rates[static_cast<size_t>(part)] =
        static_cast<double>(n) / static_cast<double>(detections.size());
  }
  return r;
}

namespace {
const char* kKeypointNames[kNumKeypoints] = {
    "nose",      "neck",       "r_shoulder", "r_elbow", "r_wrist",  "l_shoulder",
    "l_elbow",   "l_wrist",    "r_hip",      "r_knee",  "r_ankle",  "l_hip",
    "l_knee",    "l_ankle",    "r_eye",      "l_eye",   "r_ear",    "l_ear"};
}

std::string PoseReport::to_json() const {
  nlohmann::json j;
  j["pose_score"] = pose_score;
  if (pose_variance_valid)
    j["pose_variance"] = pose_variance;
  else
    j["pose_variance_omitted"] = pose_variance_omitted_reason;
  j["image_count"] = image_count;
  nlohmann::json rates;
  for (int i = 0; i < kNumKeypoints; ++i) rates[kKeypointNames[i]] = detection_rates[static_cast<size_t>(i)];
  j["detection_rates"] = rates;
  return j.dump(2);
}

std::string PoseReport::to_table() const {
  std::ostringstream os;
  os << "images:        " << image_count << "\n";
  os << "pose score:    " << pose_score << "\n";
  if (pose_variance_valid)
    os << "pose variance: " << pose_variance << "\n";
  else
    os << "pose variance: (omitted: " << pose_variance_omitted_reason << ")\n";
  os << "detection rates per part:\n";
  for (int i = 0; i < kNumKeypoints; ++i) {
    os << "  " << kKeypointNames[i];
    for (size_t pad = std::string(kKeypointNames[i]).size(); pad < 12; ++pad) os << ' ';
    os << detection_rates[static_cast<size_t>(i)] << "\n";
  }
  return os.str();
}

namespace {

struct BandBox {
  bool found = false;
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive bounds
  double cx() const { return 0.5 * (x0 + x1); }
  double w() const { return static_cast<double>(x1 - x0); }
  double h() const { return static_cast<double>(y1 - y0); }
};

bool is_saturated(const Image8& img, int y, int x) {
  const int r = img.at(y, x, 0), g = img.at(y, x, 1), b = img.at(y, x, 2);
  const int hi = std::max({r, g, b});
  const int lo = std::min({r, g, b});
  return hi - lo > 40;
}

BandBox scan_band(const Image8& img, int band) {
  const int y_begin = band * img.height / 4;
  const int y_end = (band + 1) * img.height / 4;
  BandBox box;
  int count = 0;
  for (int y = y_begin; y < y_end; ++y)
    for (int x = 0; x < img.width; ++x) {
      if (!is_saturated(img, y, x)) continue;
      if (count == 0) {
        box.x0 = box.x1 = x;
        box.y0 = box.y1 = y;
      } else {
        box.x0 = std::min(box.x0, x);
        box.x1 = std::max(box.x1, x);
        box.y0 = std::min(box.y0, y);
        box.y1 = std::max(box.y1, y);
      }
      ++count;
    }
  box.found = count >= 4;
  return box;
}

void place(KeypointSet& set, int index, const BandBox& box, double fx, double fy) {
  Keypoint& p = set.parts[static_cast<size_t>(index)];
  p.detected = true;
  p.x = box.x0 + fx * box.w();
  p.y = box.y0 + fy * box.h();
}

}  // namespace

KeypointSet BandOracleDetector::detect(const Image8& image) {
  KeypointSet set;
  // head band
  BandBox head = scan_band(image, 0);
  if (head.found) {
    place(set, 0, head, 0.5, 0.5);    // nose
    place(set, 14, head, 0.35, 0.35);  // r_eye
    place(set, 15, head, 0.65, 0.35);  // l_eye
    place(set, 16, head, 0.2, 0.5);    // r_ear
    place(set, 17, head, 0.8, 0.5);    // l_ear
  }
  // torso band
  BandBox torso = scan_band(image, 1);
  if (torso.found) {
    place(set, 1, torso, 0.5, 0.1);    // neck
    place(set, 2, torso, 0.25, 0.2);   // r_shoulder
    place(set, 5, torso, 0.75, 0.2);   // l_shoulder
    place(set, 3, torso, 0.15, 0.5);   // r_elbow
    place(set, 6, torso, 0.85, 0.5);   // l_elbow
    place(set, 4, torso, 0.1, 0.85);   // r_wrist
    place(set, 7, torso, 0.9, 0.85);   // l_wrist
    place(set, 8, torso, 0.35, 0.9);   // r_hip
    place(set, 11, torso, 0.65, 0.9);  // l_hip
  }
  // leg band
  BandBox legs = scan_band(image, 2);
  if (legs.found) {
    place(set, 9, legs, 0.4, 0.5);    // r_knee
    place(set, 12, legs, 0.6, 0.5);   // l_knee
  }
  // foot band
  BandBox feet = scan_band(image, 3);
  if (feet.found) {
    place(set, 10, feet, 0.4, 0.5);   // r_ankle
    place(set, 13, feet, 0.6, 0.5);   // l_ankle
  }
  return set;
}

std::unique_ptr<KeypointDetector> make_detector(const std::string& name) {
  if (name == "synthetic-oracle") return std::make_unique<BandOracleDetector>();
  throw InputError("unknown detector '" + name + "' (available: synthetic-oracle)");
}

void write_detections(const std::vector<std::pair<std::string, KeypointSet>>& detections,
                      const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("write_detections: cannot open " + path);
  for (const auto& [id, set] : detections) {
    nlohmann::json j;
    j["id"] = id;
    nlohmann::json kp = nlohmann::json::array();
    for (const auto& p : set.parts)
      kp.push_back({p.x, p.y, p.detected ? 1 : 0});
    j["keypoints"] = kp;
    os << j.dump() << "\n";
  }
}

std::vector<std::pair<std::string, KeypointSet>> read_detections(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("read_detections: cannot open " + path);
  std::vector<std::pair<std::string, KeypointSet>> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError("read_detections: bad JSON at line " + std::to_string(line_no) + ": " +
                    e.what());
    }
    KeypointSet set;
    const auto& kp = j.at("keypoints");
    if (kp.size() != kNumKeypoints)
      throw IoError("read_detections: line " + std::to_string(line_no) + " has " +
                    std::to_string(kp.size()) + " keypoints, expected 18");
    for (int i = 0; i < kNumKeypoints; ++i) {
      set.parts[static_cast<size_t>(i)].x = kp[static_cast<size_t>(i)][0].get<double>();
      set.parts[static_cast<size_t>(i)].y = kp[static_cast<size_t>(i)][1].get<double>();
      set.parts[static_cast<size_t>(i)].detected =
          kp[static_cast<size_t>(i)][2].get<int>() != 0;
    }
    out.emplace_back(j.at("id").get<std::string>(), set);
  }
  return out;
}

}  // namespace pedgen

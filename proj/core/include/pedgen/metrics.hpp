#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "pedgen/image.hpp"
#include "pedgen/tensor.hpp"

namespace pedgen {

inline constexpr int kNumKeypoints = 18;  // COCO ordering
inline constexpr double kPoseVarianceScale = 256.0;  // coordinate normalizer

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  bool detected = false;
};

struct KeypointSet {
  std::array<Keypoint, kNumKeypoints> parts;
  int detected_count() const;
};

// Mean fraction of detected keypoints per image.
double pose_score(const std::vector<KeypointSet>& detections);

// exp of the mean per-part per-axis population variance of normalized
// coordinates across images. Parts detected in fewer than two images
// contribute zero variance. Always >= 1; equals 1 iff every detected
// coordinate is constant.
double pose_variance(const std::vector<KeypointSet>& detections,
                     double b_max = kPoseVarianceScale);

// exp(mean KL(p(y|x) || p(y))) per split of the rows of class_probs
// (num_images x num_classes, rows stochastic); returns mean and std over
// splits.
std::pair<double, double> inception_score(const Tensor& class_probs, int splits = 1);

struct PoseReport {
  double pose_score = 0.0;
  double pose_variance = 0.0;
  bool pose_variance_valid = false;
  std::string pose_variance_omitted_reason;
  int image_count = 0;
  std::array<double, kNumKeypoints> detection_rates{};

  std::string to_json() const;
  std::string to_table() const;
};

PoseReport make_pose_report(const std::vector<KeypointSet>& detections, double b_max = 256.0);

// Adapter contract for pose estimation backends. Implementations must fill
// all 18 slots; undetected parts carry detected=false and no coordinates.
class KeypointDetector {
 public:
  virtual ~KeypointDetector() = default;
  virtual std::string name() const = 0;
  virtual KeypointSet detect(const Image8& image) = 0;
};

// Pixel-scanning detector for the procedural color-band pedestrians: each
// vertical quarter with a saturated color patch yields that band's keypoints
// at fixed fractions of the patch bounding box. Blank or unsaturated bands
// yield no detections.
class BandOracleDetector : public KeypointDetector {
 public:
  std::string name() const override { return "synthetic-oracle"; }
  KeypointSet detect(const Image8& image) override;
};

std::unique_ptr<KeypointDetector> make_detector(const std::string& name);

// JSON-lines interchange: one object per image
//   {"id": ..., "keypoints": [[x, y, detected], ... 18 entries]}
void write_detections(const std::vector<std::pair<std::string, KeypointSet>>& detections,
                      const std::string& path);
std::vector<std::pair<std::string, KeypointSet>> read_detections(const std::string& path);

}  // namespace pedgen

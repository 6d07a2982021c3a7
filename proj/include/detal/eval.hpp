#pragma once

#include "detal/core.hpp"
#include "detal/dataset.hpp"
#include "detal/model.hpp"

#include <map>
#include <string>
#include <vector>

namespace detal {

struct DetectOptions {
  int top_k_divisor = 8;
  EpsilonMode epsilon_mode = EpsilonMode::Mean;
  bool best_only = false;  // keep only the highest-confidence detection per class
};

/// Detections from fused outputs: classes whose mean top-k CAM logit is above
/// zero, segments of that class's CAM at or above epsilon, confidence = peak
/// CAM inside the segment + pooled video-level class probability.
std::vector<Detection> detect(const ModelOutputs<double>& fused, const DetectOptions& opt);

/// Fused outputs of a video under `params`.
ModelOutputs<double> predict(const ModelParams<double>& params, const Video& video);

struct VideoDetection {
  std::string video_id;
  Detection detection;

  friend bool operator==(const VideoDetection&, const VideoDetection&) = default;
};

struct VideoGroundTruth {
  std::string video_id;
  LabeledSegment gt;
};

/// Non-interpolated AP per class present in the ground truth. Detections are
/// matched greedily in confidence order to the unmatched same-class,
/// same-video instance of highest tIoU, if that tIoU >= iou_threshold.
std::map<int, double> average_precision(const std::vector<VideoDetection>& detections,
                                        const std::vector<VideoGroundTruth>& ground_truth,
                                        double iou_threshold);

/// Mean of average_precision over classes present in the ground truth; 0 when
/// there is none.
double mean_average_precision(const std::vector<VideoDetection>& detections,
                              const std::vector<VideoGroundTruth>& ground_truth,
                              double iou_threshold);

/// lo, lo + step, ..., hi (inclusive, tolerant to rounding).
std::vector<double> threshold_range(double lo, double step, double hi);

struct EvalReport {
  std::vector<double> thresholds;
  std::vector<double> map;                          // per threshold
  std::vector<std::map<int, double>> per_class_ap;  // per threshold
  std::vector<double> average_range;                // thresholds averaged
  double average_map = 0.0;
  std::vector<VideoDetection> detections;
  std::vector<std::string> errors;  // per-video problems; evaluation continued

  double map_at(double threshold) const;
};

/// Scores a fixed detection list.
EvalReport evaluate_detections(const std::vector<VideoDetection>& detections,
                               const std::vector<VideoGroundTruth>& ground_truth,
                               const std::vector<double>& thresholds,
                               const std::vector<double>& average_range);

std::vector<VideoGroundTruth> ground_truth_of(const std::vector<const Video*>& videos);

/// Inference over `videos` followed by evaluate_detections. Videos with no
/// features are reported in `errors` and skipped.
EvalReport map_report(const ModelParams<double>& params, const std::vector<const Video*>& videos,
                      const DetectOptions& opt,
                      const std::vector<double>& thresholds = threshold_range(0.1, 0.1, 0.7),
                      const std::vector<double>& average_range = threshold_range(0.1, 0.1, 0.5));

}  // namespace detal

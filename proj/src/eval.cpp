#include "detal/eval.hpp"

#include "detal/losses.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <tuple>

namespace detal {

std::vector<Detection> detect(const ModelOutputs<double>& fused, const DetectOptions& opt) {
  const int T = static_cast<int>(fused.length());
  const int n_c = static_cast<int>(fused.Psi.cols()) - 1;
  const int k = top_k_count(T, opt.top_k_divisor);
  const Eigen::VectorXd p = video_class_prob(fused.Psi, fused.Lambda);

  std::vector<Detection> out;
  for (int c = 0; c < n_c; ++c) {
    std::vector<double> logits(fused.PsiLogits.col(c).data(),
                               fused.PsiLogits.col(c).data() + T);
    std::partial_sort(logits.begin(), logits.begin() + k, logits.end(), std::greater<>());
    const double top_mean = std::accumulate(logits.begin(), logits.begin() + k, 0.0) / k;
    if (!(top_mean > 0.0)) continue;

    const Eigen::VectorXd column = fused.Psi.col(c);
    const double eps = opt.epsilon_mode == EpsilonMode::Mean ? column.mean() : 0.0;
    std::vector<Detection> found;
    for (const auto& seg : extract_segments(column, eps)) {
      const double peak = column.segment(seg.start, seg.length()).maxCoeff();
      found.push_back({seg, c, peak + p(c)});
    }
    if (opt.best_only && !found.empty()) {
      auto best = std::max_element(found.begin(), found.end(),
                                   [](const Detection& a, const Detection& b) {
                                     return a.confidence < b.confidence;
                                   });
      out.push_back(*best);
    } else {
      out.insert(out.end(), found.begin(), found.end());
    }
  }
  return out;
}

ModelOutputs<double> predict(const ModelParams<double>& params, const Video& video) {
  const auto rgb = forward(video.rgb, params.rgb);
  const auto flow = forward(video.flow, params.flow);
  return fuse(rgb, flow, params.fusion);
}

std::map<int, double> average_precision(const std::vector<VideoDetection>& detections,
                                        const std::vector<VideoGroundTruth>& ground_truth,
                                        double iou_threshold) {
  std::map<int, std::vector<std::size_t>> gt_by_class;
  for (std::size_t g = 0; g < ground_truth.size(); ++g)
    gt_by_class[ground_truth[g].gt.class_id].push_back(g);

  std::map<int, double> ap;
  for (const auto& [cls, gts] : gt_by_class) {
    std::vector<const VideoDetection*> dets;
    for (const auto& d : detections)
      if (d.detection.class_id == cls) dets.push_back(&d);
    // confidence descending; the remaining keys make ties independent of
    // input order
    std::sort(dets.begin(), dets.end(), [](const VideoDetection* a, const VideoDetection* b) {
      return std::make_tuple(-a->detection.confidence, a->video_id,
                             a->detection.segment.start, a->detection.segment.end) <
             std::make_tuple(-b->detection.confidence, b->video_id,
                             b->detection.segment.start, b->detection.segment.end);
    });

    std::vector<bool> matched(ground_truth.size(), false);
    const double n_gt = static_cast<double>(gts.size());
    double sum = 0.0;
    int tp = 0;
    for (std::size_t rank = 0; rank < dets.size(); ++rank) {
      const auto& d = *dets[rank];
      double best = -1.0;
      std::size_t best_g = 0;
      for (std::size_t g : gts) {
        if (matched[g] || ground_truth[g].video_id != d.video_id) continue;
        const double iou = tiou(d.detection.segment, ground_truth[g].gt.segment);
        if (iou > best) {
          best = iou;
          best_g = g;
        }
      }
      if (best >= iou_threshold && best > 0.0) {
        matched[best_g] = true;
        ++tp;
        sum += (static_cast<double>(tp) / static_cast<double>(rank + 1)) / n_gt;
      }
    }
    ap[cls] = sum;
  }
  return ap;
}

double mean_average_precision(const std::vector<VideoDetection>& detections,
                              const std::vector<VideoGroundTruth>& ground_truth,
                              double iou_threshold) {
  const auto ap = average_precision(detections, ground_truth, iou_threshold);
  if (ap.empty()) return 0.0;
  double s = 0.0;
  for (const auto& [c, v] : ap) s += v;
  return s / static_cast<double>(ap.size());
}

std::vector<double> threshold_range(double lo, double step, double hi) {
  std::vector<double> out;
  for (int i = 0;; ++i) {
    const double v = lo + step * i;
    if (v > hi + 1e-9) break;
    out.push_back(std::round(v * 1e6) / 1e6);
  }
  return out;
}

double EvalReport::map_at(double threshold) const {
  for (std::size_t i = 0; i < thresholds.size(); ++i)
    if (std::abs(thresholds[i] - threshold) < 1e-9) return map[i];
  throw std::out_of_range("threshold not in report");
}

EvalReport evaluate_detections(const std::vector<VideoDetection>& detections,
                               const std::vector<VideoGroundTruth>& ground_truth,
                               const std::vector<double>& thresholds,
                               const std::vector<double>& average_range) {
  EvalReport r;
  r.thresholds = thresholds;
  r.average_range = average_range;
  r.detections = detections;
  for (double thr : thresholds) {
    auto ap = average_precision(detections, ground_truth, thr);
    double m = 0.0;
    for (const auto& [c, v] : ap) m += v;
    r.map.push_back(ap.empty() ? 0.0 : m / static_cast<double>(ap.size()));
    r.per_class_ap.push_back(std::move(ap));
  }
  double s = 0.0;
  for (double thr : average_range) s += mean_average_precision(detections, ground_truth, thr);
  r.average_map = average_range.empty() ? 0.0 : s / static_cast<double>(average_range.size());
  return r;
}

std::vector<VideoGroundTruth> ground_truth_of(const std::vector<const Video*>& videos) {
  std::vector<VideoGroundTruth> out;
  for (const auto* v : videos)
    for (const auto& g : v->gt) out.push_back({v->id, g});
  return out;
}

EvalReport map_report(const ModelParams<double>& params, const std::vector<const Video*>& videos,
                      const DetectOptions& opt, const std::vector<double>& thresholds,
                      const std::vector<double>& average_range) {
  std::vector<VideoDetection> dets;
  std::vector<std::string> errors;
  for (const auto* v : videos) {
    if (v->rgb.rows() == 0 || v->flow.rows() == 0 || v->rgb.rows() != v->flow.rows()) {
      errors.push_back(v->id + ": missing or inconsistent features");
      continue;
    }
    for (const auto& d : detect(predict(params, *v), opt)) dets.push_back({v->id, d});
  }
  // videos that could not be scored still count their ground truth as missed
  EvalReport r = evaluate_detections(dets, ground_truth_of(videos), thresholds, average_range);
  r.errors = std::move(errors);
  return r;
}

}  // namespace detal

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace detal {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Snippet-major T x D features of one stream. Stored as float since that is
/// the on-disk precision; the model promotes to its own scalar type.
using FeatureSequence =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-snippet scores (CAM column, actionness, attention, ...).
using ScoreSequence = Eigen::VectorXd;

enum class Stream { Rgb, Flow, Fused };

inline const char* stream_name(Stream s) {
  switch (s) {
    case Stream::Rgb: return "rgb";
    case Stream::Flow: return "flow";
    case Stream::Fused: return "fused";
  }
  return "?";
}

/// Inclusive snippet interval [start, end].
struct Segment {
  int start = 0;
  int end = 0;

  Segment() = default;
  Segment(int s, int e) : start(s), end(e) {
    if (s < 0 || e < s)
      throw std::invalid_argument("invalid segment [" + std::to_string(s) +
                                  "," + std::to_string(e) + "]");
  }

  int length() const { return end - start + 1; }
  bool contains(int t) const { return start <= t && t <= end; }
  bool contains(const Segment& o) const {
    return start <= o.start && o.end <= end;
  }

  friend bool operator==(const Segment&, const Segment&) = default;
};

struct LabeledSegment {
  Segment segment;
  int class_id = 0;

  friend bool operator==(const LabeledSegment&, const LabeledSegment&) = default;
};

struct Detection {
  Segment segment;
  int class_id = 0;
  double confidence = 0.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct SingleFrameAnnotation {
  std::string video_id;
  int t = 0;
  int class_id = 0;

  friend bool operator==(const SingleFrameAnnotation&,
                         const SingleFrameAnnotation&) = default;
};

enum class EpsilonMode { Mean, Zero };

/// Hyperparameters of model, mining and inference.
struct Config {
  double eta = 0.5;
  double mu = 0.1;
  int U = 2;  // -1: take the value published with the dataset
  int T_crop = 750;
  EpsilonMode epsilon_mode = EpsilonMode::Mean;
  int top_k_divisor = 8;
  double learning_rate = 1e-4;
  double weight_decay = 0.005;
  int N_c = 20;
  int D = 1024;
  std::uint64_t seed = 0;
  int N_p = 16;

  void validate() const {
    if (!(eta > 0.0 && eta < 1.0))
      throw std::invalid_argument("eta must lie in (0,1)");
    if (mu < 0.0) throw std::invalid_argument("mu must be >= 0");
    if (U < -1) throw std::invalid_argument("U must be >= 0 (or -1 for the dataset value)");
    if (top_k_divisor < 1)
      throw std::invalid_argument("top_k_divisor must be >= 1");
    if (N_c < 1) throw std::invalid_argument("N_c must be >= 1");
    if (D < 2 || D % 2 != 0)
      throw std::invalid_argument("D must be even and >= 2");
    if (T_crop < 1) throw std::invalid_argument("T_crop must be >= 1");
    if (N_p < 0) throw std::invalid_argument("N_p must be >= 0");
    if (learning_rate <= 0.0)
      throw std::invalid_argument("learning_rate must be > 0");
    if (weight_decay < 0.0)
      throw std::invalid_argument("weight_decay must be >= 0");
  }
};

/// k = ceil(T / divisor), at least 1 for non-empty sequences.
inline int top_k_count(int T, int divisor) {
  return T <= 0 ? 0 : (T + divisor - 1) / divisor;
}

/// Temporal IoU counted in snippets.
inline double tiou(const Segment& a, const Segment& b) {
  const int inter = std::min(a.end, b.end) - std::max(a.start, b.start) + 1;
  if (inter <= 0) return 0.0;
  const int uni = a.length() + b.length() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

/// min + (max - min) * eta over the sequence.
template <typename Derived>
typename Derived::Scalar relative_threshold(const Eigen::DenseBase<Derived>& scores,
                                            double eta) {
  if (scores.size() == 0)
    throw std::invalid_argument("relative_threshold: empty sequence");
  const auto lo = scores.minCoeff();
  const auto hi = scores.maxCoeff();
  return lo + (hi - lo) * eta;
}

/// Maximal runs of consecutive snippets with score >= threshold.
template <typename Derived>
std::vector<Segment> extract_segments(const Eigen::DenseBase<Derived>& scores,
                                      typename Derived::Scalar threshold) {
  std::vector<Segment> runs;
  const auto n = static_cast<int>(scores.size());
  int open = -1;
  for (int t = 0; t < n; ++t) {
    const bool on = scores(t) >= threshold;
    if (on && open < 0) open = t;
    if (!on && open >= 0) {
      runs.emplace_back(open, t - 1);
      open = -1;
    }
  }
  if (open >= 0) runs.emplace_back(open, n - 1);
  return runs;
}

/// Median with the even-count convention of averaging the two central values.
template <typename Derived>
typename Derived::Scalar median(const Eigen::DenseBase<Derived>& values) {
  using S = typename Derived::Scalar;
  if (values.size() == 0) throw std::invalid_argument("median of empty range");
  std::vector<S> v;
  v.reserve(static_cast<std::size_t>(values.size()));
  for (Eigen::Index i = 0; i < values.size(); ++i) v.push_back(values(i));
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / S(2);
}

}  // namespace detal

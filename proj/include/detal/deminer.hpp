#pragma once

// Dilation-Erosion pseudo-label mining.
//
// Dilation: coarse segments (relative threshold on the annotated class CAM)
// and auxiliary segments (same rule on actionness) that contain the annotated
// snippet are merged into one covering inflated segment.
// Erosion: a high-confidence run around the annotation (corrected score
// CAM + actionness at or above the coarse-segment median) fixes the threshold
// for Seed Temporal Growing, which keeps the outermost inflated snippets whose
// evaluation score clears it.
// Backgrounds: coarse segments disjoint from every refined segment (hard) and
// the top-k snippets of (background CAM - actionness) / 2 (evident).

#include "detal/core.hpp"
#include "detal/dataset.hpp"

#include <string>
#include <vector>

namespace detal {

/// Pipeline ablations; each flag replaces or drops one mining product.
struct Ablation {
  bool no_de = false;        // stage 2 skipped
  bool no_dilation = false;  // coarse replaces inflated
  bool no_erosion = false;   // coarse replaces refined
  bool no_hcs = false;       // coarse replaces high-confidence
  bool no_bg = false;        // no background supervision
  bool no_eb = false;        // no evident background
  bool no_hb = false;        // no hard background

  std::string name() const;
  friend bool operator==(const Ablation&, const Ablation&) = default;
};

struct MiningTrace {
  SingleFrameAnnotation annotation;
  Segment coarse;
  Segment inflated;
  Segment high_confidence;
  Segment refined;
  bool flagged = false;  // no coarse or auxiliary segment contained the annotation

  friend bool operator==(const MiningTrace&, const MiningTrace&) = default;
};

struct MiningResult {
  std::vector<LabeledSegment> refined;
  std::vector<Segment> hard_bg;
  std::vector<int> evident_bg;
  std::vector<MiningTrace> trace;

  friend bool operator==(const MiningResult&, const MiningResult&) = default;
};

struct MiningInputs {
  Eigen::MatrixXd psi;        // T x (N_c + 1), post-softmax CAM of the mined stream
  Eigen::VectorXd actionness;
  const FeatureSequence* features = nullptr;  // raw features of the mined stream
};

std::vector<Segment> coarse_segments(const ScoreSequence& psi_row, double eta);
std::vector<Segment> auxiliary_segments(const ScoreSequence& actionness, double eta);

/// Covering interval of every coarse and auxiliary segment containing t.
/// Returns [t, t] with flagged = true when none contains it.
Segment inflated_segment(const std::vector<Segment>& coarse,
                         const std::vector<Segment>& auxiliary, int t, bool* flagged);

ScoreSequence corrected_score(const ScoreSequence& psi_row, const ScoreSequence& actionness);

/// Maximal run around t_label inside `coarse` whose corrected scores are at
/// least the coarse-segment median.
Segment high_confidence_segment(const Segment& coarse, const ScoreSequence& corrected,
                                int t_label);

/// Cosine distance with zero-norm rows treated as distance 1.
double cosine_distance(const FeatureSequence& x, int a, int b);

/// Evaluation score of snippet t relative to the labeled snippet.
double stg_evaluate(int t, int t_label, const ScoreSequence& corrected,
                    const FeatureSequence& features);

/// Outermost snippets of `inflated` on each side of t_label with evaluation
/// score >= threshold; a side without any defaults to t_label.
Segment grow_from_seed(const Segment& inflated, int t_label,
                       const std::vector<double>& evaluation, double threshold);

/// Seed Temporal Growing; threshold = median evaluation score over the
/// high-confidence segment without the labeled snippet (the corrected score
/// of the labeled snippet when that leaves nothing).
Segment stg(const Segment& inflated, const Segment& high_conf, int t_label,
            const ScoreSequence& corrected, const FeatureSequence& features);

std::vector<Segment> hard_backgrounds(const std::vector<Segment>& coarse_all,
                                      const std::vector<Segment>& refined_all);

/// Indices of the k largest (-A + b) / 2, ties to the lower index.
std::vector<int> evident_backgrounds(const ScoreSequence& actionness,
                                     const ScoreSequence& psi_bg, int k);

/// Truncates overlapping refined segments at the midpoint of the overlap while
/// keeping each one's annotated snippet. Both vectors are in annotation order.
void resolve_overlaps(std::vector<LabeledSegment>& refined, const std::vector<int>& seeds);

struct MiningOptions {
  double eta = 0.5;
  int top_k_divisor = 8;
  Ablation ablation;
};

/// Full mining for one video and one stream.
MiningResult mine(const MiningInputs& in, const std::vector<SingleFrameAnnotation>& annotations,
                  const MiningOptions& opt);

}  // namespace detal

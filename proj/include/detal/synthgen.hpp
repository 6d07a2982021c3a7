#pragma once

// Synthetic two-stream benchmark. Each class owns a core prototype and an
// edge direction per stream: snippets near an instance's middle sit on the
// core prototype and rotate toward the edge direction (shared in part by all
// classes) as they approach the boundaries, so the class evidence fades
// toward the ends. Part of the background is drawn near a class prototype
// but offset along a class-specific confuser direction (hard background); the
// rest comes from a few background prototypes.

#include "detal/dataset.hpp"

#include <cstdint>
#include <random>
#include <utility>

namespace detal {

enum class SampleMode { Uniform, CenterBiased };

struct SynthConfig {
  int num_videos = 30;
  int num_test_videos = 10;  // the last ones are marked split = "test"
  int N_c = 4;
  std::pair<int, int> T_range{96, 160};
  int D = 32;
  std::pair<int, int> instances_per_video_range{2, 4};
  std::pair<int, int> duration_range{8, 20};
  double intra_action_variety = 0.8;
  double hard_bg_rate = 0.35;
  double noise_sigma = 0.45;
  SampleMode annotation_mode = SampleMode::Uniform;
  std::uint64_t seed = 7;

  /// Throws std::invalid_argument, including when the worst-case instance
  /// count and duration cannot be packed into the shortest video.
  void validate() const;
};

/// Generator internals hidden from the public manifest.
struct SynthPrototypes {
  Eigen::MatrixXd rgb_core, flow_core;        // N_c x D
  Eigen::MatrixXd rgb_edge, flow_edge;        // N_c x D
  Eigen::MatrixXd rgb_confuser, flow_confuser;  // N_c x D
  Eigen::MatrixXd rgb_background, flow_background;  // n_bg x D
};

struct SynthDataset {
  Dataset data;
  SynthPrototypes prototypes;
  /// Per video, background runs drawn near a class prototype.
  std::vector<std::vector<LabeledSegment>> hard_backgrounds;
};

SynthDataset generate_dataset(const SynthConfig& cfg);

/// Index in [gt.start, gt.end]; uniform, or a truncated normal centred on the
/// midpoint with sigma = length / 6.
int sample_single_frame(const Segment& gt, SampleMode mode, std::mt19937_64& rng);

/// ceil(mean duration / 2) over all ground-truth instances.
int half_mean_duration(const Dataset& d);

}  // namespace detal

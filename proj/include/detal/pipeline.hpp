#pragma once

// Two-stage training. Stage 1 learns from the single-frame annotations
// expanded by a random number of neighbours; Dilation-Erosion then mines
// pseudo instances and backgrounds per stream from the stage-1 model, and
// stage 2 continues training on that pool.

#include "detal/dataset.hpp"
#include "detal/deminer.hpp"
#include "detal/synthgen.hpp"
#include "detal/training.hpp"

#include <random>
#include <string>
#include <vector>

namespace detal {

/// Supervision of one part before pair sampling and cropping.
struct PartPool {
  std::vector<ActionInstance> instances;
  std::vector<int> background;
  std::vector<int> pair_background;  // background side of embedding pairs
};

struct VideoPool {
  std::string video_id;
  Eigen::VectorXd video_label;
  PartPool rgb, flow, fused;

  const PartPool& part(Stream s) const {
    return s == Stream::Rgb ? rgb : (s == Stream::Flow ? flow : fused);
  }
};

enum class Provenance { Stage1, Mined };

struct TrainingPool {
  Provenance provenance = Provenance::Stage1;
  int epoch = 0;
  std::vector<VideoPool> videos;
};

/// Mining output of one training video.
struct VideoMining {
  std::string video_id;
  MiningResult rgb, flow;

  friend bool operator==(const VideoMining&, const VideoMining&) = default;
};

Eigen::VectorXd video_label_of(const std::vector<SingleFrameAnnotation>& annotations, int n_c);

/// For each annotation, u ~ U{0..U}; the annotated snippet and u neighbours on
/// each side (clipped to the video) carry its class. No background.
TrainingPool stage1_labels(const std::vector<const Video*>& videos, const Dataset& data,
                           int U, std::mt19937_64& rng, int epoch = 0);

/// Snippets labeled by one annotation in stage 1.
std::vector<int> stage1_snippets(int t, int u, int T);

/// Mines every video in `videos` with the current model.
std::vector<VideoMining> mine_videos(const ModelParams<double>& params,
                                     const std::vector<const Video*>& videos,
                                     const Dataset& data, const MiningOptions& opt);

/// Stage-2 pool from mining results, honouring the background ablations.
TrainingPool mined_pool(const std::vector<VideoMining>& mining,
                        const std::vector<const Video*>& videos, const Dataset& data,
                        const Ablation& ablation, int epoch = 0);

/// N_p pairs, balanced between same-class (action, action) and
/// different-class (action, other-class action or background) when possible.
std::vector<SnippetPair> sample_pairs(const PartPool& part, int n_pairs, std::mt19937_64& rng);

/// Labels of one training step on the window [offset, offset + length).
StepLabels step_labels(const VideoPool& pool, int offset, int length, int n_pairs,
                       std::mt19937_64& rng);

struct RunOptions {
  Config config;
  int epochs_stage1 = 50;
  int epochs_stage2 = 50;
  int mining_rounds = 1;
  Ablation ablation;
};

struct EpochRecord {
  std::string stage;
  int epoch = 0;
  PartLoss loss;  // per-term mean over the epoch's steps, summed over parts
  double total = 0.0;
  long action_snippets = 0;
  long background_snippets = 0;
  long pairs = 0;
};

struct TwoStageResult {
  ModelParams<double> stage1;
  ModelParams<double> final_params;
  long steps = 0;
  std::vector<VideoMining> mining;  // last mining round
  std::vector<EpochRecord> records;
};

/// Trainer owning parameters and optimizer state.
class Trainer {
 public:
  Trainer(const Dataset& data, const RunOptions& opt);

  void train_stage1(int epochs);
  /// One mining round followed by `epochs` stage-2 epochs.
  void train_stage2(int epochs);

  /// Replaces the parameters (e.g. from a checkpoint) and resets the optimizer.
  void set_params(const ModelParams<double>& p);

  const ModelParams<double>& params() const { return params_; }
  long steps() const { return state_.step; }
  const std::vector<EpochRecord>& records() const { return records_; }
  const std::vector<VideoMining>& last_mining() const { return mining_; }
  const std::vector<const Video*>& train_videos() const { return train_; }

 private:
  void run_epoch(const TrainingPool& pool, const std::string& stage, int epoch);

  const Dataset& data_;
  RunOptions opt_;
  std::vector<const Video*> train_;
  ModelParams<double> params_;
  AdamState<double> state_;
  std::mt19937_64 rng_;
  std::vector<EpochRecord> records_;
  std::vector<VideoMining> mining_;
};

TwoStageResult run_two_stage(const Dataset& data, const RunOptions& opt);

/// Synthetic benchmark: 20 training and 10 test videos, 4 classes.
struct BenchmarkSetup {
  SynthConfig synth;
  RunOptions run;
};
BenchmarkSetup default_benchmark();

}  // namespace detal

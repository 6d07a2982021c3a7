#pragma once

// On-disk formats.
//
//   features     "DETAL1", u32 T, u32 D, T*D float32, all little-endian, row-major
//   manifest     one JSON document; feature paths relative to its directory
//   annotations  JSON lines {video_id, t, class_id}
//   checkpoint   "DETALCK1", u32 header length, JSON header, float32 blob
//   pool         JSON lines, one mining record per video
//   detections   JSON lines {video_id, start, end, class_id, confidence}
//
// Readers throw DataError on anything malformed; run-config parsing throws
// std::invalid_argument.

#include "detal/dataset.hpp"
#include "detal/eval.hpp"
#include "detal/model.hpp"
#include "detal/pipeline.hpp"
#include "detal/synthgen.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace detal {

void write_features(const std::string& path, const FeatureSequence& x);
FeatureSequence read_features(const std::string& path);

/// Writes <dir>/manifest.json, <dir>/annotations.jsonl and one feature file
/// per stream and video under <dir>/features.
void save_dataset(const Dataset& d, const std::string& dir);

/// Loads a manifest and everything it references. When `missing` is given,
/// videos whose feature files cannot be read are kept with empty features and
/// described there; otherwise that is a DataError.
Dataset load_dataset(const std::string& manifest_path,
                     std::vector<std::string>* missing = nullptr);

void write_annotations(const std::string& path, const std::vector<SingleFrameAnnotation>& a);
std::vector<SingleFrameAnnotation> read_annotations(const std::string& path);

/// FNV-1a over the canonical JSON form of the config.
std::uint64_t config_hash(const Config& c);

struct Checkpoint {
  ModelParams<double> params;
  long step = 0;
  Config config;
  std::uint64_t config_hash = 0;
};

/// Parameters are stored as float32; loading widens them back to double.
void save_checkpoint(const std::string& path, const ModelParams<double>& params, long step,
                     const Config& config);
Checkpoint load_checkpoint(const std::string& path);

inline constexpr int kPoolSchema = 1;

void write_pool(const std::string& path, const std::vector<VideoMining>& mining);
std::vector<VideoMining> read_pool(const std::string& path);

void write_detections(const std::string& path, const std::vector<VideoDetection>& d);
std::vector<VideoDetection> read_detections(const std::string& path);

/// Everything a run needs: model/mining config, generator config, switches.
struct RunConfig {
  RunOptions run;
  SynthConfig synth;
};

/// Keys not present keep their defaults; unknown keys are rejected.
RunConfig parse_run_config(const std::string& json_text);
RunConfig read_run_config(const std::string& path);
std::string run_config_json(const RunConfig& rc);

void write_epoch_csv(const std::string& path, const std::vector<EpochRecord>& records);
void write_train_summary(const std::string& path, const RunConfig& rc,
                         const std::vector<EpochRecord>& records, long steps,
                         const std::vector<VideoMining>& mining);

void write_eval_csv(const std::string& path, const EvalReport& r);
void write_eval_json(const std::string& path, const EvalReport& r);

/// Whole file as bytes; DataError if unreadable.
std::string read_file(const std::string& path);

}  // namespace detal

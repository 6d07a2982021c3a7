// detal: synth | train | mine | infer | eval | gradcheck
//
// Exit codes: 0 ok, 1 invalid configuration or arguments, 2 data error,
// 3 numerical failure.

#include "detal/gradcheck.hpp"
#include "detal/io.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

using namespace detal;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kConfig = 1, kData = 2, kNumeric = 3 };

struct AblationFlags {
  Ablation a;
  void add(CLI::App* app) {
    app->add_flag("--no-de", a.no_de, "skip Dilation-Erosion and stage 2");
    app->add_flag("--no-dilation", a.no_dilation, "coarse segment replaces the inflated one");
    app->add_flag("--no-erosion", a.no_erosion, "coarse segment replaces the refined one");
    app->add_flag("--no-hcs", a.no_hcs, "coarse segment replaces the high-confidence one");
    app->add_flag("--no-bg", a.no_bg, "no background supervision");
    app->add_flag("--no-eb", a.no_eb, "no evident background");
    app->add_flag("--no-hb", a.no_hb, "no hard background");
  }
  // flags only switch things off; they never re-enable a config setting
  void merge_into(Ablation& dst) const {
    dst.no_de |= a.no_de;
    dst.no_dilation |= a.no_dilation;
    dst.no_erosion |= a.no_erosion;
    dst.no_hcs |= a.no_hcs;
    dst.no_bg |= a.no_bg;
    dst.no_eb |= a.no_eb;
    dst.no_hb |= a.no_hb;
  }
};

std::vector<double> parse_range(const std::string& spec) {
  double lo, step, hi;
  char c1, c2;
  std::istringstream in(spec);
  if (!(in >> lo >> c1 >> step >> c2 >> hi) || c1 != ':' || c2 != ':' || step <= 0 || hi < lo)
    throw std::invalid_argument("range must look like lo:step:hi, got '" + spec + "'");
  return threshold_range(lo, step, hi);
}

// Run config from file, else the synthetic benchmark defaults adapted to the
// dataset's N_c and D.
RunConfig resolve_config(const std::string& path, const Dataset* data) {
  if (!path.empty()) return read_run_config(path);
  RunConfig rc;
  const BenchmarkSetup b = default_benchmark();
  rc.run = b.run;
  rc.synth = b.synth;
  if (data) {
    rc.run.config.N_c = data->num_classes;
    rc.run.config.D = data->feature_dim;
  }
  return rc;
}

DetectOptions detect_options(const Config& c, bool best_only) {
  DetectOptions o;
  o.top_k_divisor = c.top_k_divisor;
  o.epsilon_mode = c.epsilon_mode;
  o.best_only = best_only;
  return o;
}

std::vector<const Video*> split_or_throw(const Dataset& d, const std::string& split) {
  auto v = d.split(split);
  if (v.empty()) throw DataError("no videos in split '" + split + "'");
  return v;
}

void check_compatible(const Checkpoint& ck, const Dataset& d) {
  if (ck.params.num_classes != d.num_classes || ck.params.feature_dim != d.feature_dim)
    throw DataError("checkpoint (N_c=" + std::to_string(ck.params.num_classes) + ", D=" +
                    std::to_string(ck.params.feature_dim) + ") does not fit the dataset (N_c=" +
                    std::to_string(d.num_classes) + ", D=" + std::to_string(d.feature_dim) + ")");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"single-frame supervised temporal action localization"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_config, synth_out;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--config", synth_config, "run config JSON (its synth section is used)");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--seed", synth_seed, "override the generator seed");

  // train
  auto* train = app.add_subcommand("train", "stage-1, stage-2 or two-stage training");
  std::string train_data, train_config, train_out, train_init, train_stage = "two-stage";
  std::optional<int> epochs1, epochs2;
  AblationFlags train_ab;
  train->add_option("--data", train_data, "dataset manifest")->required();
  train->add_option("--config", train_config, "run config JSON");
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--stage", train_stage, "stage1 | stage2 | two-stage")
      ->check(CLI::IsMember({"stage1", "stage2", "two-stage"}));
  train->add_option("--init", train_init, "checkpoint to start from (required for stage2)");
  train->add_option("--epochs1", epochs1, "override stage-1 epochs");
  train->add_option("--epochs2", epochs2, "override stage-2 epochs");
  train_ab.add(train);

  // mine
  auto* mine_cmd = app.add_subcommand("mine", "run Dilation-Erosion and dump the pool");
  std::string mine_data, mine_ckpt, mine_out;
  AblationFlags mine_ab;
  mine_cmd->add_option("--data", mine_data, "dataset manifest")->required();
  mine_cmd->add_option("--checkpoint", mine_ckpt, "model checkpoint")->required();
  mine_cmd->add_option("--out", mine_out, "pool JSONL")->required();
  mine_ab.add(mine_cmd);

  // infer
  auto* infer = app.add_subcommand("infer", "write detections for a split");
  std::string infer_data, infer_ckpt, infer_out, infer_split = "test";
  bool infer_best = false;
  infer->add_option("--data", infer_data, "dataset manifest")->required();
  infer->add_option("--checkpoint", infer_ckpt, "model checkpoint")->required();
  infer->add_option("--out", infer_out, "detections JSONL")->required();
  infer->add_option("--split", infer_split, "dataset split");
  infer->add_flag("--best-only", infer_best, "keep the top detection per class and video");

  // eval
  auto* eval = app.add_subcommand("eval", "mAP report for a checkpoint or a detection file");
  std::string eval_data, eval_ckpt, eval_dets, eval_out, eval_split = "test";
  std::string eval_thr = "0.1:0.1:0.7", eval_avg = "0.1:0.1:0.5";
  bool eval_best = false, eval_anet = false;
  eval->add_option("--data", eval_data, "dataset manifest")->required();
  auto* ck_opt = eval->add_option("--checkpoint", eval_ckpt, "model checkpoint");
  auto* det_opt = eval->add_option("--detections", eval_dets, "detections JSONL");
  ck_opt->excludes(det_opt);
  eval->add_option("--out", eval_out, "report prefix; writes <prefix>.csv and <prefix>.json")
      ->required();
  eval->add_option("--split", eval_split, "dataset split");
  eval->add_option("--thresholds", eval_thr, "tIoU thresholds lo:step:hi");
  eval->add_option("--average", eval_avg, "thresholds averaged into the AVG column");
  eval->add_flag("--anet", eval_anet, "use 0.5:0.05:0.95 for both");
  eval->add_flag("--best-only", eval_best, "keep the top detection per class and video");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of all loss gradients");
  int gc_cases = 20;
  std::uint64_t gc_seed = 1;
  double gc_tol = 1e-4;
  gc->add_option("--cases", gc_cases, "random instances")->check(CLI::PositiveNumber);
  gc->add_option("--seed", gc_seed, "seed of the first instance");
  gc->add_option("--tolerance", gc_tol, "maximum relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*synth) {
      RunConfig rc = resolve_config(synth_config, nullptr);
      if (synth_seed) rc.synth.seed = *synth_seed;
      rc.synth.validate();
      const SynthDataset s = generate_dataset(rc.synth);
      save_dataset(s.data, synth_out);
      std::printf("wrote %zu videos (%d classes, D=%d, U=%d) to %s\n", s.data.videos.size(),
                  s.data.num_classes, s.data.feature_dim, s.data.U, synth_out.c_str());
    }

    if (*train) {
      const Dataset data = load_dataset(train_data);
      RunConfig rc = resolve_config(train_config, &data);
      train_ab.merge_into(rc.run.ablation);
      if (epochs1) rc.run.epochs_stage1 = *epochs1;
      if (epochs2) rc.run.epochs_stage2 = *epochs2;
      if (rc.run.epochs_stage1 < 0 || rc.run.epochs_stage2 < 0)
        throw std::invalid_argument("epoch counts must be >= 0");
      if (train_stage == "stage2" && train_init.empty())
        throw std::invalid_argument("--stage stage2 needs --init");

      fs::create_directories(train_out);
      const auto out = [&](const char* name) { return (fs::path(train_out) / name).string(); };
      Trainer trainer(data, rc.run);
      if (!train_init.empty()) {
        const Checkpoint ck = load_checkpoint(train_init);
        check_compatible(ck, data);
        trainer.set_params(ck.params);
      }
      if (train_stage != "stage2") {
        trainer.train_stage1(rc.run.epochs_stage1);
        save_checkpoint(out("stage1.ckpt"), trainer.params(), trainer.steps(), rc.run.config);
      }
      if (train_stage != "stage1" && !rc.run.ablation.no_de) {
        for (int r = 0; r < rc.run.mining_rounds; ++r) trainer.train_stage2(rc.run.epochs_stage2);
        write_pool(out("pool.jsonl"), trainer.last_mining());
      }
      save_checkpoint(out("final.ckpt"), trainer.params(), trainer.steps(), rc.run.config);
      write_epoch_csv(out("epochs.csv"), trainer.records());
      write_train_summary(out("summary.json"), rc, trainer.records(), trainer.steps(),
                          trainer.last_mining());
      std::printf("%s: %ld steps, checkpoints and reports in %s\n",
                  rc.run.ablation.name().c_str(), trainer.steps(), train_out.c_str());
    }

    if (*mine_cmd) {
      const Dataset data = load_dataset(mine_data);
      const Checkpoint ck = load_checkpoint(mine_ckpt);
      check_compatible(ck, data);
      Ablation ab;
      mine_ab.merge_into(ab);
      const MiningOptions mo{ck.config.eta, ck.config.top_k_divisor, ab};
      const auto mining = mine_videos(ck.params, split_or_throw(data, "train"), data, mo);
      write_pool(mine_out, mining);
      std::printf("mined %zu videos into %s\n", mining.size(), mine_out.c_str());
    }

    if (*infer) {
      const Dataset data = load_dataset(infer_data);
      const Checkpoint ck = load_checkpoint(infer_ckpt);
      check_compatible(ck, data);
      const DetectOptions opt = detect_options(ck.config, infer_best);
      std::vector<VideoDetection> dets;
      for (const auto* v : split_or_throw(data, infer_split))
        for (const auto& d : detect(predict(ck.params, *v), opt)) dets.push_back({v->id, d});
      write_detections(infer_out, dets);
      std::printf("%zu detections written to %s\n", dets.size(), infer_out.c_str());
    }

    if (*eval) {
      if (eval_ckpt.empty() == eval_dets.empty())
        throw std::invalid_argument("eval needs exactly one of --checkpoint or --detections");
      std::vector<std::string> missing;
      const Dataset data = load_dataset(eval_data, &missing);
      std::vector<double> thr = parse_range(eval_thr), avg = parse_range(eval_avg);
      if (eval_anet) thr = avg = threshold_range(0.5, 0.05, 0.95);
      const auto videos = split_or_throw(data, eval_split);
      EvalReport r;
      if (!eval_ckpt.empty()) {
        const Checkpoint ck = load_checkpoint(eval_ckpt);
        check_compatible(ck, data);
        r = map_report(ck.params, videos, detect_options(ck.config, eval_best), thr, avg);
      } else {
        r = evaluate_detections(read_detections(eval_dets), ground_truth_of(videos), thr, avg);
      }
      r.errors.insert(r.errors.begin(), missing.begin(), missing.end());
      write_eval_csv(eval_out + ".csv", r);
      write_eval_json(eval_out + ".json", r);
      for (std::size_t i = 0; i < r.thresholds.size(); ++i)
        std::printf("mAP@%.2f = %.4f\n", r.thresholds[i], r.map[i]);
      std::printf("average = %.4f\n", r.average_map);
      for (const auto& e : r.errors) std::fprintf(stderr, "warning: %s\n", e.c_str());
    }

    if (*gc) {
      const auto results = gradcheck_suite(gc_cases, gc_seed);
      int failed = 0;
      double worst = 0.0;
      for (const auto& o : results) {
        worst = std::max(worst, o.result.max_rel_error);
        if (o.result.max_rel_error < gc_tol) continue;
        ++failed;
        std::printf("FAIL seed %llu %s: rel %.3e at %s[%ld] (analytic %.6e, numeric %.6e)\n",
                    static_cast<unsigned long long>(o.seed), o.term.c_str(),
                    o.result.max_rel_error, o.result.worst_tensor.c_str(),
                    static_cast<long>(o.result.worst_index), o.result.worst_analytic,
                    o.result.worst_numeric);
      }
      std::printf("%zu checks, %d failed, worst relative error %.3e\n", results.size(), failed,
                  worst);
      if (failed > 0) return kNumeric;
    }
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumeric;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "invalid configuration: %s\n", e.what());
    return kConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kData;
  }
  return kOk;
}

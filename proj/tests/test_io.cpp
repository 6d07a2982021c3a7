#include <doctest.h>

#include "detal/io.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include <unistd.h>

using namespace detal;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("detal_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

SynthConfig tiny_synth() {
  SynthConfig s;
  s.num_videos = 4;
  s.num_test_videos = 1;
  s.N_c = 2;
  s.D = 6;
  s.T_range = {30, 40};
  s.instances_per_video_range = {1, 2};
  s.duration_range = {3, 6};
  s.seed = 5;
  return s;
}

void write_text(const std::string& path, const std::string& s) {
  std::ofstream(path, std::ios::binary) << s;
}

bool same_params(const ModelParams<double>& a, const ModelParams<double>& b) {
  bool eq = a.num_classes == b.num_classes && a.feature_dim == b.feature_dim;
  visit_tensors([&](const std::string&, const auto& x, const auto& y) { eq = eq && x == y; },
                a, b);
  return eq;
}

}  // namespace

TEST_CASE("feature files round-trip bit-exactly") {
  TempDir dir;
  FeatureSequence x(7, 5);
  std::mt19937_64 rng(1);
  std::normal_distribution<float> n(0.f, 1.f);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
  x(0, 0) = -0.0f;
  x(1, 1) = 1e-42f;  // subnormal
  write_features(dir / "x.bin", x);
  const auto y = read_features(dir / "x.bin");
  REQUIRE(y.rows() == 7);
  REQUIRE(y.cols() == 5);
  CHECK(std::memcmp(x.data(), y.data(), sizeof(float) * 35) == 0);

  const std::string bytes = read_file(dir / "x.bin");
  write_text(dir / "short.bin", bytes.substr(0, bytes.size() - 1));
  CHECK_THROWS_AS(read_features(dir / "short.bin"), DataError);
  write_text(dir / "magic.bin", "NOTDETAL" + bytes.substr(8));
  CHECK_THROWS_AS(read_features(dir / "magic.bin"), DataError);
  CHECK_THROWS_AS(read_features(dir / "absent.bin"), DataError);
}

TEST_CASE("datasets round-trip") {
  TempDir dir;
  const auto s = generate_dataset(tiny_synth());
  save_dataset(s.data, dir.path.string());
  const auto d = load_dataset(dir / "manifest.json");
  CHECK(d.num_classes == s.data.num_classes);
  CHECK(d.feature_dim == s.data.feature_dim);
  CHECK(d.U == s.data.U);
  CHECK(d.annotations == s.data.annotations);
  REQUIRE(d.videos.size() == s.data.videos.size());
  for (std::size_t i = 0; i < d.videos.size(); ++i) {
    CHECK(d.videos[i].id == s.data.videos[i].id);
    CHECK(d.videos[i].split == s.data.videos[i].split);
    CHECK(d.videos[i].gt == s.data.videos[i].gt);
    CHECK(d.videos[i].rgb == s.data.videos[i].rgb);
    CHECK(d.videos[i].flow == s.data.videos[i].flow);
  }
  CHECK(read_annotations(dir / "annotations.jsonl") == s.data.annotations);
}

TEST_CASE("dataset errors") {
  TempDir dir;
  const auto s = generate_dataset(tiny_synth());
  save_dataset(s.data, dir.path.string());
  const std::string victim = s.data.videos[1].id;
  fs::remove(dir.path / "features" / (victim + ".flow.bin"));
  CHECK_THROWS_AS(load_dataset(dir / "manifest.json"), DataError);
  std::vector<std::string> missing;
  const auto d = load_dataset(dir / "manifest.json", &missing);
  REQUIRE(missing.size() == 1);
  CHECK(missing[0].find(victim) != std::string::npos);
  CHECK(d.videos.size() == s.data.videos.size());

  write_text(dir / "bad.json", "{\"format\": \"detal-manifest\"");
  CHECK_THROWS_AS(load_dataset(dir / "bad.json"), DataError);
  write_text(dir / "other.json", "{\"format\": \"something\", \"version\": 1}");
  CHECK_THROWS_AS(load_dataset(dir / "other.json"), DataError);

  Dataset bad = s.data;
  bad.annotations.push_back({"nope", 0, 0});
  TempDir dir2;
  save_dataset(bad, dir2.path.string());
  CHECK_THROWS_AS(load_dataset(dir2 / "manifest.json"), DataError);

  Dataset oob = s.data;
  oob.annotations[0].t = oob.videos[0].length() + 5;
  oob.annotations[0].video_id = oob.videos[0].id;
  TempDir dir3;
  save_dataset(oob, dir3.path.string());
  CHECK_THROWS_AS(load_dataset(dir3 / "manifest.json"), DataError);
}

TEST_CASE("checkpoints round-trip at float precision") {
  TempDir dir;
  const auto p = init_params<double>(6, 3, 4);
  Config c;
  c.N_c = 3;
  c.D = 6;
  c.seed = 12;
  c.learning_rate = 3e-4;
  save_checkpoint(dir / "a.ckpt", p, 42, c);
  const auto ck = load_checkpoint(dir / "a.ckpt");
  CHECK(ck.step == 42);
  CHECK(ck.config.seed == 12);
  CHECK(ck.config.learning_rate == 3e-4);
  CHECK(ck.config_hash == config_hash(c));
  CHECK(same_params(ck.params, cast_params<double>(cast_params<float>(p))));

  // a loaded checkpoint saves to the same bytes
  save_checkpoint(dir / "b.ckpt", ck.params, ck.step, ck.config);
  CHECK(read_file(dir / "a.ckpt") == read_file(dir / "b.ckpt"));
  const auto again = load_checkpoint(dir / "b.ckpt");
  CHECK(same_params(again.params, ck.params));

  const std::string bytes = read_file(dir / "a.ckpt");
  write_text(dir / "trunc.ckpt", bytes.substr(0, bytes.size() - 4));
  CHECK_THROWS_AS(load_checkpoint(dir / "trunc.ckpt"), DataError);
  write_text(dir / "long.ckpt", bytes + "xxxx");
  CHECK_THROWS_AS(load_checkpoint(dir / "long.ckpt"), DataError);
  std::string tampered = bytes;
  const auto pos = tampered.find("\"learning_rate\"");
  REQUIRE(pos != std::string::npos);
  const auto digit = tampered.find('3', pos);
  tampered[digit] = '5';
  write_text(dir / "tampered.ckpt", tampered);
  CHECK_THROWS_AS(load_checkpoint(dir / "tampered.ckpt"), DataError);
}

TEST_CASE("config hash tracks every field") {
  Config a, b;
  CHECK(config_hash(a) == config_hash(b));
  b.eta = 0.4;
  CHECK(config_hash(a) != config_hash(b));
  b = a;
  b.seed = 1;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("pools round-trip") {
  TempDir dir;
  VideoMining m;
  m.video_id = "v0";
  m.rgb.refined = {{{2, 5}, 1}, {{9, 9}, 0}};
  m.rgb.hard_bg = {{12, 15}};
  m.rgb.evident_bg = {0, 20};
  MiningTrace tr;
  tr.annotation = {"v0", 3, 1};
  tr.coarse = {2, 6};
  tr.inflated = {1, 7};
  tr.high_confidence = {3, 4};
  tr.refined = {2, 5};
  m.rgb.trace = {tr};
  m.flow = m.rgb;
  m.flow.trace[0].flagged = true;
  m.flow.hard_bg.clear();
  VideoMining empty;
  empty.video_id = "v1";
  write_pool(dir / "pool.jsonl", {m, empty});
  const auto back = read_pool(dir / "pool.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0] == m);
  CHECK(back[1] == empty);

  write_text(dir / "bad.jsonl", "{\"schema\": 99, \"video_id\": \"v\"}\n");
  CHECK_THROWS_AS(read_pool(dir / "bad.jsonl"), DataError);
}

TEST_CASE("detections round-trip") {
  TempDir dir;
  std::vector<VideoDetection> d = {{"a", {{1, 4}, 0, 1.2345678901234567}},
                                   {"b", {{0, 0}, 2, 0.1 + 0.2}},
                                   {"a", {{3, 9}, 1, 1e-300}}};
  write_detections(dir / "d.jsonl", d);
  CHECK(read_detections(dir / "d.jsonl") == d);
  write_detections(dir / "none.jsonl", {});
  CHECK(read_detections(dir / "none.jsonl").empty());
  write_text(dir / "bad.jsonl", "{\"video_id\": \"a\", \"start\": 5, \"end\": 2, "
                                "\"class_id\": 0, \"confidence\": 1}\n");
  CHECK_THROWS_AS(read_detections(dir / "bad.jsonl"), DataError);
}

TEST_CASE("run config parsing") {
  const auto defaults = parse_run_config("{}");
  CHECK(defaults.run.config.eta == Config{}.eta);
  CHECK(defaults.run.epochs_stage1 == 50);

  const auto rc = parse_run_config(R"({"config": {"eta": 0.4, "epsilon_mode": "zero"},
      "ablation": {"no_hb": true}, "epochs_stage2": 3, "synth": {"T_range": [90, 120]}})");
  CHECK(rc.run.config.eta == 0.4);
  CHECK(rc.run.config.epsilon_mode == EpsilonMode::Zero);
  CHECK(rc.run.ablation.no_hb);
  CHECK(rc.run.epochs_stage2 == 3);
  CHECK(rc.synth.T_range == std::pair<int, int>{90, 120});

  const auto back = parse_run_config(run_config_json(rc));
  CHECK(run_config_json(back) == run_config_json(rc));
  CHECK(config_hash(back.run.config) == config_hash(rc.run.config));

  CHECK_THROWS_AS(parse_run_config(R"({"config": {"etaa": 0.4}})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config(R"({"config": {"eta": "half"}})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config(R"({"config": {"eta": 1.5}})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config(R"({"config": {"epsilon_mode": "max"}})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config(R"({"epochs_stage1": -1})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config("{"), std::invalid_argument);
  CHECK_THROWS_AS(read_run_config("/nonexistent/run.json"), std::invalid_argument);
}

TEST_CASE("reports") {
  TempDir dir;
  const std::vector<VideoGroundTruth> g = {{"a", {{0, 4}, 0}}};
  const auto r = evaluate_detections({{"a", {{0, 4}, 0, 0.5}}}, g, {0.5}, {0.5});
  write_eval_csv(dir / "e.csv", r);
  write_eval_json(dir / "e.json", r);
  CHECK(read_file(dir / "e.csv") == "tiou,mAP,AP_class0\n0.5,1,1\n");
  CHECK(read_file(dir / "e.json").find("\"average_mAP\": 1.0") != std::string::npos);

  EpochRecord rec;
  rec.stage = "stage1";
  rec.loss.video = 0.25;
  rec.total = 0.25;
  rec.action_snippets = 3;
  write_epoch_csv(dir / "ep.csv", {rec});
  CHECK(read_file(dir / "ep.csv") ==
        "stage,epoch,cls_video,cls_snippet,action,emb,total,action_snippets,"
        "background_snippets,pairs\nstage1,0,0.25,0,0,0,0.25,3,0,0\n");
}

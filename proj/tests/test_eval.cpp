#include <doctest.h>

#include "detal/eval.hpp"
#include "detal/losses.hpp"

#include <algorithm>
#include <random>

using namespace detal;

namespace {

ModelOutputs<double> outputs_from_logits(const Eigen::MatrixXd& logits) {
  ModelOutputs<double> o;
  const Eigen::Index T = logits.rows();
  o.PsiLogits = logits;
  o.Psi = softmax_rows(logits);
  o.LambdaLogits = Eigen::VectorXd::Zero(T);
  o.Lambda = Eigen::VectorXd::Constant(T, 0.5);
  o.ALogits = Eigen::VectorXd::Zero(T);
  o.A = Eigen::VectorXd::Constant(T, 0.5);
  o.E = Eigen::MatrixXd::Zero(T, 2);
  return o;
}

VideoDetection det(const std::string& v, int s, int e, int c, double conf) {
  return {v, {{s, e}, c, conf}};
}

VideoGroundTruth gt(const std::string& v, int s, int e, int c) { return {v, {{s, e}, c}}; }

// three videos, two classes; expected values worked out by hand
const std::vector<VideoGroundTruth> kFixtureGt = {
    gt("v1", 0, 9, 0), gt("v1", 20, 29, 1), gt("v2", 5, 14, 0), gt("v3", 0, 4, 1)};
const std::vector<VideoDetection> kFixtureDets = {
    det("v1", 0, 9, 0, 0.95),   // tiou 1
    det("v2", 10, 19, 0, 0.9),  // tiou 1/3
    det("v3", 0, 4, 0, 0.8),    // no class-0 instance in v3
    det("v2", 6, 14, 0, 0.7),   // tiou 0.9
    det("v1", 22, 31, 1, 0.85), // tiou 2/3
    det("v3", 0, 2, 1, 0.6),    // tiou 0.6
    det("v3", 0, 4, 1, 0.5)};   // tiou 1

std::vector<VideoDetection> random_detections(std::mt19937_64& rng, int n) {
  std::vector<VideoDetection> d;
  std::uniform_real_distribution<double> conf(0.0, 2.0);
  for (int k = 0; k < n; ++k) {
    const int s = static_cast<int>(rng() % 40);
    d.push_back(det("v" + std::to_string(rng() % 3), s, s + static_cast<int>(rng() % 12),
                    static_cast<int>(rng() % 2), conf(rng)));
  }
  return d;
}

}  // namespace

TEST_CASE("average precision basics") {
  const std::vector<VideoGroundTruth> g = {gt("a", 0, 10, 0)};
  for (double thr : {0.1, 0.5, 1.0})
    CHECK(average_precision({det("a", 0, 10, 0, 0.9)}, g, thr).at(0) == 1.0);
  CHECK(average_precision({det("a", 20, 30, 0, 0.9)}, g, 0.1).at(0) == 0.0);
  CHECK(average_precision({det("b", 0, 10, 0, 0.9)}, g, 0.1).at(0) == 0.0);
  CHECK(average_precision({det("a", 0, 10, 1, 0.9)}, g, 0.1).at(0) == 0.0);
  CHECK(mean_average_precision({}, g, 0.5) == 0.0);
  CHECK(mean_average_precision({det("a", 0, 10, 0, 0.9)}, {}, 0.5) == 0.0);
}

TEST_CASE("greedy matching gives 5/6") {
  const std::vector<VideoGroundTruth> g = {gt("a", 0, 4, 0), gt("a", 10, 14, 0)};
  const std::vector<VideoDetection> d = {det("a", 0, 4, 0, 0.9), det("a", 5, 9, 0, 0.8),
                                         det("a", 10, 14, 0, 0.7)};
  CHECK(average_precision(d, g, 0.5).at(0) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  // a duplicate of a matched instance is a false positive
  const std::vector<VideoDetection> dup = {det("a", 0, 4, 0, 0.9), det("a", 0, 4, 0, 0.8)};
  CHECK(average_precision(dup, g, 0.5).at(0) == doctest::Approx(0.5));
}

TEST_CASE("three-video fixture") {
  auto map = [](double thr) { return mean_average_precision(kFixtureDets, kFixtureGt, thr); };
  CHECK(map(0.3) == doctest::Approx(1.0));
  CHECK(map(0.5) == doctest::Approx(0.875));
  CHECK(map(0.7) == doctest::Approx((0.75 + 1.0 / 6.0) / 2.0));
  CHECK(map(0.95) == doctest::Approx(1.0 / 3.0));
  const auto ap = average_precision(kFixtureDets, kFixtureGt, 0.65);
  CHECK(ap.at(0) == doctest::Approx(0.75));
  CHECK(ap.at(1) == doctest::Approx(0.5 + (2.0 / 3.0) * 0.5));
}

TEST_CASE("AP ignores input order and confidence scale") {
  std::mt19937_64 rng(8);
  for (int k = 0; k < 20; ++k) {
    auto d = random_detections(rng, 25);
    const auto ref = average_precision(d, kFixtureGt, 0.3);
    std::shuffle(d.begin(), d.end(), rng);
    CHECK(average_precision(d, kFixtureGt, 0.3) == ref);
    for (auto& x : d) x.detection.confidence *= 3.5;
    const auto scaled = average_precision(d, kFixtureGt, 0.3);
    for (const auto& [c, v] : ref) CHECK(scaled.at(c) == doctest::Approx(v).epsilon(1e-15));
  }
}

TEST_CASE("mAP does not increase with the threshold") {
  std::mt19937_64 rng(9);
  const auto thr = threshold_range(0.05, 0.05, 1.0);
  for (int k = 0; k < 50; ++k) {
    const auto d = random_detections(rng, 30);
    double prev = 1.0;
    for (double t : thr) {
      const double m = mean_average_precision(d, kFixtureGt, t);
      CHECK(m >= 0.0);
      CHECK(m <= prev + 1e-12);
      prev = m;
    }
  }
}

TEST_CASE("threshold ranges") {
  CHECK(threshold_range(0.1, 0.1, 0.7).size() == 7);
  CHECK(threshold_range(0.1, 0.1, 0.5).back() == 0.5);
  CHECK(threshold_range(0.5, 0.05, 0.95).size() == 10);
}

TEST_CASE("evaluation report") {
  const auto r = evaluate_detections(kFixtureDets, kFixtureGt, {0.3, 0.5, 0.7}, {0.3, 0.5});
  CHECK(r.map_at(0.5) == doctest::Approx(0.875));
  CHECK(r.average_map == doctest::Approx((1.0 + 0.875) / 2.0));
  CHECK(r.per_class_ap.size() == 3);
  CHECK_THROWS_AS(r.map_at(0.4), std::out_of_range);

  std::vector<VideoDetection> perfect;
  for (const auto& g : kFixtureGt) perfect.push_back({g.video_id, {g.gt.segment, g.gt.class_id, 1.0}});
  const auto p = evaluate_detections(perfect, kFixtureGt, threshold_range(0.1, 0.1, 0.7),
                                     threshold_range(0.1, 0.1, 0.5));
  for (double m : p.map) CHECK(m == 1.0);
  const auto none = evaluate_detections({}, kFixtureGt, {0.5}, {0.5});
  CHECK(none.map[0] == 0.0);
}

TEST_CASE("detection from a single plateau") {
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(8, 3);
  z.col(0).setConstant(-5);
  z.col(0).segment(2, 4).setConstant(5);
  z.col(1).setConstant(-5);
  const auto o = outputs_from_logits(z);
  const auto d = detect(o, {});
  REQUIRE(d.size() == 1);
  CHECK(d[0].class_id == 0);
  CHECK(d[0].segment == Segment(2, 5));
  const Eigen::VectorXd p = video_class_prob(o.Psi, o.Lambda);
  CHECK(d[0].confidence == doctest::Approx(o.Psi(2, 0) + p(0)));
}

TEST_CASE("negative logits give no detections") {
  const auto o = outputs_from_logits(Eigen::MatrixXd::Constant(8, 3, -1.0));
  CHECK(detect(o, {}).empty());
}

TEST_CASE("two plateaus give two detections ordered by peak") {
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(8, 3);
  z.col(0).setConstant(-5);
  z.col(0).segment(1, 2).setConstant(5);
  z.col(0).segment(5, 2).setConstant(3);
  z.col(1).setConstant(-5);
  const auto d = detect(outputs_from_logits(z), {});
  REQUIRE(d.size() == 2);
  CHECK(d[0].segment == Segment(1, 2));
  CHECK(d[1].segment == Segment(5, 6));
  CHECK(d[0].confidence > d[1].confidence);

  DetectOptions best;
  best.best_only = true;
  const auto b = detect(outputs_from_logits(z), best);
  REQUIRE(b.size() == 1);
  CHECK(b[0] == d[0]);

  // with epsilon 0 every snippet passes
  DetectOptions zero;
  zero.epsilon_mode = EpsilonMode::Zero;
  const auto all = detect(outputs_from_logits(z), zero);
  REQUIRE(all.size() == 1);
  CHECK(all[0].segment == Segment(0, 7));
}

TEST_CASE("videos without features are reported and still count") {
  Video ok;
  ok.id = "ok";
  ok.rgb = FeatureSequence::Ones(6, 4);
  ok.flow = FeatureSequence::Ones(6, 4);
  ok.gt = {{{1, 3}, 0}};
  Video broken;
  broken.id = "broken";
  broken.gt = {{{0, 2}, 1}};
  const auto p = init_params<double>(4, 2, 1);
  const auto r = map_report(p, {&ok, &broken}, {});
  REQUIRE(r.errors.size() == 1);
  CHECK(r.errors[0].find("broken") != std::string::npos);
  for (double m : r.map) {
    CHECK(m >= 0.0);
    CHECK(m <= 0.5);
  }
}

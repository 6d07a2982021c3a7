#include <doctest.h>

#include "detal/synthgen.hpp"

#include <cmath>

using namespace detal;

namespace {

SynthConfig small_config() {
  SynthConfig c;
  c.num_videos = 10;
  c.num_test_videos = 3;
  c.N_c = 3;
  c.seed = 7;
  return c;
}

double cosine(const FeatureSequence& x, int a, int b) {
  return double(x.row(a).dot(x.row(b))) / double(x.row(a).norm() * x.row(b).norm());
}

}  // namespace

TEST_CASE("generated dataset honours its config") {
  const SynthDataset s = generate_dataset(small_config());
  const Dataset& d = s.data;
  CHECK(d.videos.size() == 10);
  CHECK(d.split("test").size() == 3);
  CHECK(d.split("train").size() == 7);
  std::size_t instances = 0;
  for (const auto& v : d.videos) {
    CHECK(v.rgb.rows() == v.flow.rows());
    CHECK(v.rgb.cols() == 32);
    CHECK(v.length() >= 96);
    CHECK(v.length() <= 160);
    for (std::size_t i = 0; i < v.gt.size(); ++i) {
      CHECK(v.gt[i].class_id >= 0);
      CHECK(v.gt[i].class_id < 3);
      CHECK(v.gt[i].segment.end < v.length());
      if (i > 0) CHECK(v.gt[i].segment.start > v.gt[i - 1].segment.end);
    }
    instances += v.gt.size();
  }
  CHECK(d.annotations.size() == instances);
}

TEST_CASE("one annotation per instance, inside it") {
  const SynthDataset s = generate_dataset(small_config());
  for (const auto& v : s.data.videos) {
    const auto anns = s.data.annotations_for(v.id);
    REQUIRE(anns.size() == v.gt.size());
    for (std::size_t i = 0; i < anns.size(); ++i) {
      CHECK(v.gt[i].segment.contains(anns[i].t));
      CHECK(anns[i].class_id == v.gt[i].class_id);
    }
  }
}

TEST_CASE("generation is deterministic") {
  const SynthDataset a = generate_dataset(small_config());
  const SynthDataset b = generate_dataset(small_config());
  REQUIRE(a.data.videos.size() == b.data.videos.size());
  for (std::size_t i = 0; i < a.data.videos.size(); ++i) {
    CHECK(a.data.videos[i].rgb == b.data.videos[i].rgb);
    CHECK(a.data.videos[i].flow == b.data.videos[i].flow);
    CHECK(a.data.videos[i].gt == b.data.videos[i].gt);
  }
  CHECK(a.data.annotations == b.data.annotations);
  SynthConfig other = small_config();
  other.seed = 8;
  CHECK_FALSE(generate_dataset(other).data.videos[0].rgb == a.data.videos[0].rgb);
}

TEST_CASE("duration range is respected") {
  SynthConfig c = small_config();
  c.duration_range = {4, 8};
  for (const auto& v : generate_dataset(c).data.videos)
    for (const auto& g : v.gt) {
      CHECK(g.segment.length() >= 4);
      CHECK(g.segment.length() <= 8);
    }
}

TEST_CASE("unpackable configs are rejected") {
  SynthConfig c = small_config();
  c.T_range = {40, 60};
  c.instances_per_video_range = {3, 4};
  c.duration_range = {10, 20};
  CHECK_THROWS_AS(generate_dataset(c), std::invalid_argument);
  c = small_config();
  c.hard_bg_rate = 1.5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("published U is half the mean duration") {
  const SynthDataset s = generate_dataset(small_config());
  double total = 0;
  int n = 0;
  for (const auto& v : s.data.videos)
    for (const auto& g : v.gt) {
      total += g.segment.length();
      ++n;
    }
  CHECK(s.data.U == int(std::ceil(total / n / 2.0)));
}

TEST_CASE("same-instance snippets are closer than easy background") {
  const SynthDataset s = generate_dataset(SynthConfig{});
  double same = 0, cross = 0;
  long n_same = 0, n_cross = 0;
  for (std::size_t vi = 0; vi < s.data.videos.size(); ++vi) {
    const Video& v = s.data.videos[vi];
    std::vector<int> easy;
    for (int t = 0; t < v.length(); ++t) {
      bool other = false;
      for (const auto& g : v.gt) other = other || g.segment.contains(t);
      for (const auto& h : s.hard_backgrounds[vi]) other = other || h.segment.contains(t);
      if (!other) easy.push_back(t);
    }
    for (const auto& g : v.gt)
      for (int a = g.segment.start; a <= g.segment.end; ++a) {
        for (int b = a + 1; b <= g.segment.end; ++b, ++n_same)
          same += cosine(v.rgb, a, b) + cosine(v.flow, a, b);
        for (int e : easy) {
          cross += cosine(v.rgb, a, e) + cosine(v.flow, a, e);
          ++n_cross;
        }
      }
  }
  CHECK(same / n_same > cross / n_cross + 0.2);
}

TEST_CASE("single-frame sampling") {
  std::mt19937_64 rng(5);
  CHECK(sample_single_frame({5, 5}, SampleMode::Uniform, rng) == 5);
  CHECK(sample_single_frame({5, 5}, SampleMode::CenterBiased, rng) == 5);

  const int n = 100000;
  std::vector<int> uni(10, 0), mid(10, 0);
  for (int k = 0; k < n; ++k) {
    ++uni[std::size_t(sample_single_frame({0, 9}, SampleMode::Uniform, rng))];
    ++mid[std::size_t(sample_single_frame({0, 9}, SampleMode::CenterBiased, rng))];
  }
  const double sigma = std::sqrt(n * 0.1 * 0.9);
  for (int c : uni) CHECK(std::abs(c - n * 0.1) < 5 * sigma);
  for (int i : {4, 5})
    for (int j : {0, 9}) CHECK(mid[std::size_t(i)] > mid[std::size_t(j)]);
}

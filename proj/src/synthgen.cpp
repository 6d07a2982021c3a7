#include "detal/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

namespace detal {

namespace {

constexpr int kBackgroundPrototypes = 3;
constexpr double kHardAngle = 0.9;  // radians between core prototype and hard background
constexpr int kMinBackgroundRun = 6;
constexpr int kMaxBackgroundRun = 16;

Eigen::VectorXd random_unit(int D, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd v(D);
  for (int i = 0; i < D; ++i) v(i) = n(rng);
  return v.normalized();
}

struct StreamPrototypes {
  Eigen::MatrixXd core, edge, confuser, background;
};

StreamPrototypes make_prototypes(int n_c, int D, std::mt19937_64& rng) {
  StreamPrototypes p;
  p.core.resize(n_c, D);
  p.edge.resize(n_c, D);
  p.confuser.resize(n_c, D);
  p.background.resize(kBackgroundPrototypes, D);
  const Eigen::VectorXd generic = random_unit(D, rng);
  for (int c = 0; c < n_c; ++c) {
    p.core.row(c) = random_unit(D, rng).transpose();
    p.edge.row(c) = (generic + random_unit(D, rng)).normalized().transpose();
    p.confuser.row(c) = random_unit(D, rng).transpose();
  }
  for (int b = 0; b < kBackgroundPrototypes; ++b)
    p.background.row(b) = random_unit(D, rng).transpose();
  return p;
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

/// Kinds of snippet content; one label per snippet.
struct SnippetPlan {
  enum Kind { kAction, kHard, kEasy } kind = kEasy;
  int class_id = 0;   // action or hard-background class
  int bg_proto = 0;   // easy background prototype
  double rel = 0.5;   // relative position inside an action instance
};

void render_stream(const std::vector<SnippetPlan>& plan, const StreamPrototypes& p,
                   const SynthConfig& cfg, std::mt19937_64& rng, FeatureSequence& out) {
  const int T = static_cast<int>(plan.size());
  const int D = cfg.D;
  std::normal_distribution<double> noise(0.0, cfg.noise_sigma / std::sqrt(double(D)));
  out.resize(T, D);
  Eigen::VectorXd f(D);
  for (int t = 0; t < T; ++t) {
    const auto& s = plan[static_cast<std::size_t>(t)];
    switch (s.kind) {
      case SnippetPlan::kAction: {
        const double theta = cfg.intra_action_variety * (std::numbers::pi / 2.0) *
                             std::abs(2.0 * s.rel - 1.0);
        f = std::cos(theta) * p.core.row(s.class_id).transpose() +
            std::sin(theta) * p.edge.row(s.class_id).transpose();
        break;
      }
      case SnippetPlan::kHard:
        f = std::cos(kHardAngle) * p.core.row(s.class_id).transpose() +
            std::sin(kHardAngle) * p.confuser.row(s.class_id).transpose();
        break;
      case SnippetPlan::kEasy:
        f = p.background.row(s.bg_proto).transpose();
        break;
    }
    for (int d = 0; d < D; ++d) f(d) += noise(rng);
    const double n = f.norm();
    if (n > 0) f /= n;
    out.row(t) = f.cast<float>().transpose();
  }
}

}  // namespace

void SynthConfig::validate() const {
  auto bad = [](const std::string& m) { throw std::invalid_argument("synth config: " + m); };
  if (num_videos < 1) bad("num_videos must be >= 1");
  if (num_test_videos < 0 || num_test_videos > num_videos)
    bad("num_test_videos must lie in [0, num_videos]");
  if (N_c < 1) bad("N_c must be >= 1");
  if (D < 2 || D % 2 != 0) bad("D must be even and >= 2");
  if (T_range.first < 1 || T_range.second < T_range.first) bad("invalid T_range");
  if (instances_per_video_range.first < 0 ||
      instances_per_video_range.second < instances_per_video_range.first)
    bad("invalid instances_per_video_range");
  if (duration_range.first < 1 || duration_range.second < duration_range.first)
    bad("invalid duration_range");
  if (intra_action_variety < 0) bad("intra_action_variety must be >= 0");
  if (hard_bg_rate < 0 || hard_bg_rate > 1) bad("hard_bg_rate must lie in [0,1]");
  if (noise_sigma < 0) bad("noise_sigma must be >= 0");
  const int n = instances_per_video_range.second;
  const int worst = n * duration_range.second + std::max(0, n - 1);
  if (worst > T_range.first)
    bad("cannot pack " + std::to_string(n) + " instances of up to " +
        std::to_string(duration_range.second) + " snippets into T=" +
        std::to_string(T_range.first));
}

int sample_single_frame(const Segment& gt, SampleMode mode, std::mt19937_64& rng) {
  if (gt.length() == 1) return gt.start;
  if (mode == SampleMode::Uniform) return uniform_int(rng, gt.start, gt.end);
  const double mid = 0.5 * (gt.start + gt.end);
  std::normal_distribution<double> n(mid, gt.length() / 6.0);
  for (;;) {
    const long t = std::lround(n(rng));
    if (t >= gt.start && t <= gt.end) return static_cast<int>(t);
  }
}

int half_mean_duration(const Dataset& d) {
  long total = 0;
  long count = 0;
  for (const auto& v : d.videos)
    for (const auto& g : v.gt) {
      total += g.segment.length();
      ++count;
    }
  if (count == 0) return 0;
  const double mean = double(total) / double(count);
  return static_cast<int>(std::ceil(mean / 2.0));
}

SynthDataset generate_dataset(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);

  const StreamPrototypes rgb_p = make_prototypes(cfg.N_c, cfg.D, rng);
  const StreamPrototypes flow_p = make_prototypes(cfg.N_c, cfg.D, rng);

  SynthDataset out;
  out.prototypes = {rgb_p.core,     flow_p.core,     rgb_p.edge,       flow_p.edge,
                    rgb_p.confuser, flow_p.confuser, rgb_p.background, flow_p.background};
  Dataset& ds = out.data;
  ds.num_classes = cfg.N_c;
  ds.feature_dim = cfg.D;

  for (int vi = 0; vi < cfg.num_videos; ++vi) {
    Video v;
    char id[16];
    std::snprintf(id, sizeof id, "v%03d", vi);
    v.id = id;
    v.split = vi >= cfg.num_videos - cfg.num_test_videos ? "test" : "train";

    const int T = uniform_int(rng, cfg.T_range.first, cfg.T_range.second);
    const int n = uniform_int(rng, cfg.instances_per_video_range.first,
                              cfg.instances_per_video_range.second);
    std::vector<int> durations(static_cast<std::size_t>(n));
    std::vector<int> classes(static_cast<std::size_t>(n));
    int used = std::max(0, n - 1);
    for (int k = 0; k < n; ++k) {
      durations[std::size_t(k)] =
          uniform_int(rng, cfg.duration_range.first, cfg.duration_range.second);
      classes[std::size_t(k)] = uniform_int(rng, 0, cfg.N_c - 1);
      used += durations[std::size_t(k)];
    }
    // split the free snippets into n + 1 gaps (stars and bars)
    const int free = T - used;
    std::vector<int> cuts(static_cast<std::size_t>(n));
    for (auto& c : cuts) c = uniform_int(rng, 0, free);
    std::sort(cuts.begin(), cuts.end());

    std::vector<SnippetPlan> plan(static_cast<std::size_t>(T));
    int cursor = 0;
    int prev_cut = 0;
    for (int k = 0; k < n; ++k) {
      cursor += cuts[std::size_t(k)] - prev_cut + (k > 0 ? 1 : 0);
      prev_cut = cuts[std::size_t(k)];
      const Segment seg(cursor, cursor + durations[std::size_t(k)] - 1);
      v.gt.push_back({seg, classes[std::size_t(k)]});
      for (int t = seg.start; t <= seg.end; ++t) {
        auto& s = plan[std::size_t(t)];
        s.kind = SnippetPlan::kAction;
        s.class_id = classes[std::size_t(k)];
        s.rel = (t - seg.start + 0.5) / seg.length();
      }
      cursor = seg.end + 1;
    }

    // background runs
    std::vector<LabeledSegment> hard;
    std::bernoulli_distribution is_hard(cfg.hard_bg_rate);
    int t = 0;
    while (t < T) {
      if (plan[std::size_t(t)].kind == SnippetPlan::kAction) {
        ++t;
        continue;
      }
      int gap_end = t;
      while (gap_end + 1 < T && plan[std::size_t(gap_end + 1)].kind != SnippetPlan::kAction)
        ++gap_end;
      while (t <= gap_end) {
        int len = uniform_int(rng, kMinBackgroundRun, kMaxBackgroundRun);
        if (gap_end - (t + len - 1) < kMinBackgroundRun) len = gap_end - t + 1;
        const Segment run(t, std::min(gap_end, t + len - 1));
        const bool hard_run = n > 0 && is_hard(rng);
        const int cls = n > 0 ? classes[std::size_t(uniform_int(rng, 0, n - 1))] : 0;
        const int proto = uniform_int(rng, 0, kBackgroundPrototypes - 1);
        for (int u = run.start; u <= run.end; ++u) {
          auto& s = plan[std::size_t(u)];
          s.kind = hard_run ? SnippetPlan::kHard : SnippetPlan::kEasy;
          s.class_id = cls;
          s.bg_proto = proto;
        }
        if (hard_run) hard.push_back({run, cls});
        t = run.end + 1;
      }
    }
    out.hard_backgrounds.push_back(std::move(hard));

    render_stream(plan, rgb_p, cfg, rng, v.rgb);
    render_stream(plan, flow_p, cfg, rng, v.flow);
    ds.videos.push_back(std::move(v));
  }

  for (const auto& v : ds.videos)
    for (const auto& g : v.gt)
      ds.annotations.push_back(
          {v.id, sample_single_frame(g.segment, cfg.annotation_mode, rng), g.class_id});

  ds.U = half_mean_duration(ds);
  return out;
}

}  // namespace detal

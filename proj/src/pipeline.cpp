#include "detal/pipeline.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>

namespace detal {

namespace {

std::vector<int> sorted_unique(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

std::vector<int> minus(const std::vector<int>& a, const std::set<int>& drop) {
  std::vector<int> out;
  for (int x : a)
    if (!drop.count(x)) out.push_back(x);
  return out;
}

std::vector<int> intersect(const std::vector<int>& a, const std::vector<int>& b) {
  const auto sa = sorted_unique(a);
  const auto sb = sorted_unique(b);
  std::vector<int> out;
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(out));
  return out;
}

std::vector<int> span_of(const Segment& s) {
  std::vector<int> v(static_cast<std::size_t>(s.length()));
  std::iota(v.begin(), v.end(), s.start);
  return v;
}

PartPool part_from_mining(const MiningResult& m, const Ablation& ab) {
  PartPool p;
  std::set<int> action;
  for (const auto& r : m.refined) {
    p.instances.push_back({r.class_id, span_of(r.segment)});
    for (int t = r.segment.start; t <= r.segment.end; ++t) action.insert(t);
  }
  std::vector<int> hard;
  if (!ab.no_bg && !ab.no_hb)
    for (const auto& s : m.hard_bg)
      for (int t = s.start; t <= s.end; ++t) hard.push_back(t);
  std::vector<int> evident;
  if (!ab.no_bg && !ab.no_eb) evident = m.evident_bg;
  hard = minus(hard, action);
  evident = minus(evident, action);
  std::vector<int> all = hard;
  all.insert(all.end(), evident.begin(), evident.end());
  p.background = sorted_unique(all);
  p.pair_background = sorted_unique(evident);
  return p;
}

std::vector<int> window(const std::vector<int>& v, int offset, int length) {
  std::vector<int> out;
  for (int t : v)
    if (t >= offset && t < offset + length) out.push_back(t - offset);
  return out;
}

PartPool crop_part(const PartPool& p, int offset, int length) {
  PartPool out;
  for (const auto& inst : p.instances) {
    auto s = window(inst.snippets, offset, length);
    if (!s.empty()) out.instances.push_back({inst.class_id, std::move(s)});
  }
  out.background = window(p.background, offset, length);
  out.pair_background = window(p.pair_background, offset, length);
  return out;
}

}  // namespace

Eigen::VectorXd video_label_of(const std::vector<SingleFrameAnnotation>& annotations, int n_c) {
  Eigen::VectorXd y = Eigen::VectorXd::Zero(n_c);
  for (const auto& a : annotations) y(a.class_id) = 1.0;
  return y;
}

std::vector<int> stage1_snippets(int t, int u, int T) {
  std::vector<int> out;
  for (int i = std::max(0, t - u); i <= std::min(T - 1, t + u); ++i) out.push_back(i);
  return out;
}

TrainingPool stage1_labels(const std::vector<const Video*>& videos, const Dataset& data, int U,
                           std::mt19937_64& rng, int epoch) {
  if (U < 0) throw std::invalid_argument("stage1_labels: U must be >= 0");
  TrainingPool pool;
  pool.provenance = Provenance::Stage1;
  pool.epoch = epoch;
  std::uniform_int_distribution<int> draw(0, U);
  for (const auto* v : videos) {
    const auto anns = data.annotations_for(v->id);
    VideoPool vp;
    vp.video_id = v->id;
    vp.video_label = video_label_of(anns, data.num_classes);
    PartPool part;
    for (const auto& a : anns)
      part.instances.push_back({a.class_id, stage1_snippets(a.t, draw(rng), v->length())});
    vp.rgb = vp.flow = vp.fused = part;
    pool.videos.push_back(std::move(vp));
  }
  return pool;
}

std::vector<VideoMining> mine_videos(const ModelParams<double>& params,
                                     const std::vector<const Video*>& videos,
                                     const Dataset& data, const MiningOptions& opt) {
  std::vector<VideoMining> out;
  for (const auto* v : videos) {
    const auto anns = data.annotations_for(v->id);
    VideoMining vm;
    vm.video_id = v->id;
    for (Stream s : {Stream::Rgb, Stream::Flow}) {
      const FeatureSequence& x = s == Stream::Rgb ? v->rgb : v->flow;
      const auto o = forward(x, params, s);
      MiningInputs in{o.Psi, o.A, &x};
      (s == Stream::Rgb ? vm.rgb : vm.flow) = mine(in, anns, opt);
    }
    out.push_back(std::move(vm));
  }
  return out;
}

TrainingPool mined_pool(const std::vector<VideoMining>& mining,
                        const std::vector<const Video*>& videos, const Dataset& data,
                        const Ablation& ablation, int epoch) {
  if (mining.size() != videos.size())
    throw std::invalid_argument("mined_pool: mining and video lists differ");
  TrainingPool pool;
  pool.provenance = Provenance::Mined;
  pool.epoch = epoch;
  for (std::size_t i = 0; i < mining.size(); ++i) {
    const auto& m = mining[i];
    VideoPool vp;
    vp.video_id = m.video_id;
    vp.video_label = video_label_of(data.annotations_for(videos[i]->id), data.num_classes);
    vp.rgb = part_from_mining(m.rgb, ablation);
    vp.flow = part_from_mining(m.flow, ablation);

    // fused part: where both streams agree
    if (m.rgb.refined.size() != m.flow.refined.size())
      throw std::logic_error("mined_pool: streams disagree on annotation count");
    std::set<int> action;
    for (std::size_t k = 0; k < m.rgb.refined.size(); ++k) {
      const auto& a = m.rgb.refined[k].segment;
      const auto& b = m.flow.refined[k].segment;
      const Segment both(std::max(a.start, b.start), std::min(a.end, b.end));
      vp.fused.instances.push_back({m.rgb.refined[k].class_id, span_of(both)});
      for (int t = both.start; t <= both.end; ++t) action.insert(t);
    }
    vp.fused.background = minus(intersect(vp.rgb.background, vp.flow.background), action);
    vp.fused.pair_background =
        minus(intersect(vp.rgb.pair_background, vp.flow.pair_background), action);
    pool.videos.push_back(std::move(vp));
  }
  return pool;
}

std::vector<SnippetPair> sample_pairs(const PartPool& part, int n_pairs, std::mt19937_64& rng) {
  struct Labeled {
    int t;
    int cls;
  };
  std::vector<Labeled> actions;
  for (const auto& inst : part.instances)
    for (int t : inst.snippets) actions.push_back({t, inst.class_id});
  if (actions.empty() || n_pairs <= 0) return {};

  auto pick = [&rng](std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  };
  std::vector<SnippetPair> pairs;
  const int want_same = (n_pairs + 1) / 2;
  for (int k = 0; k < n_pairs; ++k) {
    const bool try_same = k < want_same;
    bool made = false;
    for (int attempt = 0; attempt < 2 && !made; ++attempt) {
      const bool same = (attempt == 0) == try_same;
      const Labeled a = actions[pick(actions.size())];
      std::vector<int> partners;
      if (same) {
        for (const auto& b : actions)
          if (b.cls == a.cls && b.t != a.t) partners.push_back(b.t);
      } else {
        for (const auto& b : actions)
          if (b.cls != a.cls) partners.push_back(b.t);
        for (int t : part.pair_background)
          if (t != a.t) partners.push_back(t);
      }
      if (partners.empty()) continue;
      pairs.push_back({a.t, partners[pick(partners.size())], same});
      made = true;
    }
  }
  return pairs;
}

StepLabels step_labels(const VideoPool& pool, int offset, int length, int n_pairs,
                       std::mt19937_64& rng) {
  StepLabels out;
  Eigen::VectorXd y = pool.video_label;
  const PartPool rgb = crop_part(pool.rgb, offset, length);
  const PartPool flow = crop_part(pool.flow, offset, length);
  const PartPool fused = crop_part(pool.fused, offset, length);

  // a crop only keeps the classes of the instances it still contains
  Eigen::VectorXd present = Eigen::VectorXd::Zero(y.size());
  for (const auto* p : {&rgb, &flow, &fused})
    for (const auto& inst : p->instances) present(inst.class_id) = 1.0;
  y = y.cwiseProduct(present);

  auto make = [&](const PartPool& p) {
    TrainingLabels l;
    l.instances = p.instances;
    l.background = p.background;
    l.pairs = sample_pairs(p, n_pairs, rng);
    l.video_label = y;
    return l;
  };
  out.rgb = make(rgb);
  out.flow = make(flow);
  out.fused = make(fused);
  return out;
}

Trainer::Trainer(const Dataset& data, const RunOptions& opt)
    : data_(data),
      opt_(opt),
      train_(data.split("train")),
      params_(init_params<double>(data.feature_dim, data.num_classes, opt.config.seed)),
      state_(AdamState<double>::for_params(params_)),
      rng_(opt.config.seed ^ 0x9e3779b97f4a7c15ULL) {
  opt_.config.validate();
  if (opt_.config.N_c != data.num_classes || opt_.config.D != data.feature_dim)
    throw std::invalid_argument("run config N_c/D do not match the dataset");
  if (train_.empty()) throw std::invalid_argument("dataset has no training videos");
}

void Trainer::set_params(const ModelParams<double>& p) {
  if (p.num_classes != params_.num_classes || p.feature_dim != params_.feature_dim)
    throw std::invalid_argument("checkpoint shape does not match the dataset");
  params_ = p;
  state_ = AdamState<double>::for_params(params_);
}

void Trainer::run_epoch(const TrainingPool& pool, const std::string& stage, int epoch) {
  std::vector<std::size_t> order(pool.videos.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng_);

  const Config& c = opt_.config;
  const AdamOptions adam{c.learning_rate, c.weight_decay};
  EpochRecord rec;
  rec.stage = stage;
  rec.epoch = epoch;
  for (std::size_t i : order) {
    const Video& v = *train_[i];
    const VideoPool& vp = pool.videos[i];
    const int T = v.length();
    int offset = 0;
    int length = T;
    // alternate full-length and randomly cropped videos
    if (state_.step % 2 == 1 && T > c.T_crop) {
      length = c.T_crop;
      offset = std::uniform_int_distribution<int>(0, T - c.T_crop)(rng_);
    }
    const StepLabels labels = step_labels(vp, offset, length, c.N_p, rng_);
    const FeatureSequence rgb = v.rgb.middleRows(offset, length);
    const FeatureSequence flow = v.flow.middleRows(offset, length);
    const LossReport r = train_step(params_, state_, rgb, flow, labels, c.mu, adam);
    rec.loss += r.summed();
    for (const auto* l : {&labels.rgb, &labels.flow, &labels.fused}) {
      for (const auto& inst : l->instances)
        rec.action_snippets += static_cast<long>(inst.snippets.size());
      rec.background_snippets += static_cast<long>(l->background.size());
      rec.pairs += static_cast<long>(l->pairs.size());
    }
  }
  const double n = std::max<std::size_t>(1, order.size());
  rec.loss.video /= n;
  rec.loss.snippet /= n;
  rec.loss.action /= n;
  rec.loss.embed /= n;
  rec.total = rec.loss.total();
  records_.push_back(rec);
}

void Trainer::train_stage1(int epochs) {
  const int U = opt_.config.U >= 0 ? opt_.config.U : data_.U;
  for (int e = 0; e < epochs; ++e) {
    const TrainingPool pool = stage1_labels(train_, data_, U, rng_, e);
    run_epoch(pool, "stage1", e);
  }
}

void Trainer::train_stage2(int epochs) {
  const MiningOptions mo{opt_.config.eta, opt_.config.top_k_divisor, opt_.ablation};
  mining_ = mine_videos(params_, train_, data_, mo);
  const TrainingPool pool = mined_pool(mining_, train_, data_, opt_.ablation);
  for (int e = 0; e < epochs; ++e) run_epoch(pool, "stage2", e);
}

TwoStageResult run_two_stage(const Dataset& data, const RunOptions& opt) {
  if (opt.epochs_stage1 < 0 || opt.epochs_stage2 < 0 || opt.mining_rounds < 1)
    throw std::invalid_argument("epoch counts must be >= 0 and mining rounds >= 1");
  Trainer trainer(data, opt);
  trainer.train_stage1(opt.epochs_stage1);
  TwoStageResult res;
  res.stage1 = trainer.params();
  if (!opt.ablation.no_de)
    for (int r = 0; r < opt.mining_rounds; ++r) trainer.train_stage2(opt.epochs_stage2);
  res.final_params = trainer.params();
  res.steps = trainer.steps();
  res.mining = trainer.last_mining();
  res.records = trainer.records();
  return res;
}

BenchmarkSetup default_benchmark() {
  BenchmarkSetup b;
  b.synth.num_videos = 30;
  b.synth.num_test_videos = 10;
  b.synth.N_c = 4;
  b.synth.D = 32;
  b.synth.seed = 2022;

  Config& c = b.run.config;
  c.N_c = 4;
  c.D = 32;
  c.eta = 0.5;
  c.mu = 0.1;
  c.U = -1;  // use the dataset's published value
  c.T_crop = 64;
  c.learning_rate = 1e-3;
  c.weight_decay = 0.005;
  c.N_p = 16;
  c.seed = 1;
  b.run.epochs_stage1 = 50;
  b.run.epochs_stage2 = 50;
  return b;
}

}  // namespace detal

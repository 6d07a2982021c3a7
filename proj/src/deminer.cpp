#include "detal/deminer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace detal {

std::string Ablation::name() const {
  std::string n;
  auto add = [&](bool on, const char* tag) {
    if (!on) return;
    if (!n.empty()) n += "+";
    n += tag;
  };
  add(no_de, "NoDE");
  add(no_dilation, "NoDilation");
  add(no_erosion, "NoErosion");
  add(no_hcs, "NoHCS");
  add(no_bg, "NoBG");
  add(no_eb, "NoEB");
  add(no_hb, "NoHB");
  return n.empty() ? "Full" : n;
}

std::vector<Segment> coarse_segments(const ScoreSequence& psi_row, double eta) {
  return extract_segments(psi_row, relative_threshold(psi_row, eta));
}

std::vector<Segment> auxiliary_segments(const ScoreSequence& actionness, double eta) {
  return extract_segments(actionness, relative_threshold(actionness, eta));
}

Segment inflated_segment(const std::vector<Segment>& coarse,
                         const std::vector<Segment>& auxiliary, int t, bool* flagged) {
  bool found = false;
  Segment cover(t, t);
  for (const auto* list : {&coarse, &auxiliary})
    for (const auto& s : *list)
      if (s.contains(t)) {
        cover.start = std::min(cover.start, s.start);
        cover.end = std::max(cover.end, s.end);
        found = true;
      }
  if (flagged) *flagged = !found;
  return cover;
}

ScoreSequence corrected_score(const ScoreSequence& psi_row, const ScoreSequence& actionness) {
  if (psi_row.size() != actionness.size())
    throw std::invalid_argument("corrected_score: length mismatch");
  return psi_row + actionness;
}

Segment high_confidence_segment(const Segment& coarse, const ScoreSequence& corrected,
                                int t_label) {
  if (!coarse.contains(t_label))
    throw std::invalid_argument("high_confidence_segment: label outside coarse segment");
  const double med = median(corrected.segment(coarse.start, coarse.length()));
  Segment run(t_label, t_label);
  while (run.start > coarse.start && corrected(run.start - 1) >= med) --run.start;
  while (run.end < coarse.end && corrected(run.end + 1) >= med) ++run.end;
  return run;
}

double cosine_distance(const FeatureSequence& x, int a, int b) {
  const Eigen::VectorXd u = x.row(a).cast<double>().transpose();
  const Eigen::VectorXd v = x.row(b).cast<double>().transpose();
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) return 1.0;
  return 1.0 - u.dot(v) / (nu * nv);
}

double stg_evaluate(int t, int t_label, const ScoreSequence& corrected,
                    const FeatureSequence& features) {
  if (t == t_label) throw std::invalid_argument("stg_evaluate: t equals the labeled snippet");
  return corrected(t) * std::exp(-cosine_distance(features, t, t_label));
}

Segment grow_from_seed(const Segment& inflated, int t_label,
                       const std::vector<double>& evaluation, double threshold) {
  if (!inflated.contains(t_label))
    throw std::invalid_argument("grow_from_seed: label outside inflated segment");
  if (static_cast<int>(evaluation.size()) != inflated.length())
    throw std::invalid_argument("grow_from_seed: evaluation length mismatch");
  auto at = [&](int t) { return evaluation[static_cast<std::size_t>(t - inflated.start)]; };
  int first = t_label;
  for (int i = t_label - 1; i >= inflated.start; --i)
    if (at(i) >= threshold) first = i;
  int last = t_label;
  for (int i = t_label + 1; i <= inflated.end; ++i)
    if (at(i) >= threshold) last = i;
  return {first, last};
}

Segment stg(const Segment& inflated, const Segment& high_conf, int t_label,
            const ScoreSequence& corrected, const FeatureSequence& features) {
  if (!inflated.contains(high_conf) || !high_conf.contains(t_label))
    throw std::invalid_argument("stg: requires label in high-confidence in inflated");
  std::vector<double> eval(static_cast<std::size_t>(inflated.length()));
  for (int t = inflated.start; t <= inflated.end; ++t)
    eval[static_cast<std::size_t>(t - inflated.start)] =
        t == t_label ? corrected(t) : stg_evaluate(t, t_label, corrected, features);

  std::vector<double> high;
  for (int t = high_conf.start; t <= high_conf.end; ++t)
    if (t != t_label) high.push_back(eval[static_cast<std::size_t>(t - inflated.start)]);
  const double threshold =
      high.empty() ? corrected(t_label)
                   : median(Eigen::Map<const Eigen::VectorXd>(high.data(),
                                                              static_cast<Eigen::Index>(high.size())));
  return grow_from_seed(inflated, t_label, eval, threshold);
}

std::vector<Segment> hard_backgrounds(const std::vector<Segment>& coarse_all,
                                      const std::vector<Segment>& refined_all) {
  std::vector<Segment> out;
  for (const auto& p : coarse_all) {
    const bool disjoint = std::all_of(refined_all.begin(), refined_all.end(),
                                      [&](const Segment& r) { return tiou(p, r) == 0.0; });
    if (disjoint && std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
  }
  return out;
}

std::vector<int> evident_backgrounds(const ScoreSequence& actionness,
                                     const ScoreSequence& psi_bg, int k) {
  if (actionness.size() != psi_bg.size())
    throw std::invalid_argument("evident_backgrounds: length mismatch");
  const int T = static_cast<int>(actionness.size());
  k = std::clamp(k, 0, T);
  const Eigen::VectorXd score = (psi_bg - actionness) / 2.0;
  std::vector<int> idx(static_cast<std::size_t>(T));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return score(a) > score(b); });
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

void resolve_overlaps(std::vector<LabeledSegment>& refined, const std::vector<int>& seeds) {
  if (refined.size() != seeds.size())
    throw std::invalid_argument("resolve_overlaps: size mismatch");
  std::vector<std::size_t> order(refined.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return seeds[a] < seeds[b]; });
  for (std::size_t k = 1; k < order.size(); ++k) {
    auto& prev = refined[order[k - 1]].segment;
    auto& cur = refined[order[k]].segment;
    const int t_prev = seeds[order[k - 1]];
    const int t_cur = seeds[order[k]];
    if (prev.end < cur.start || t_prev == t_cur) continue;
    const int lo = cur.start;
    const int hi = prev.end;
    const int mid = lo + (hi - lo) / 2;
    prev.end = std::clamp(mid, t_prev, t_cur - 1);
    cur.start = std::max(cur.start, prev.end + 1);
    if (cur.start > t_cur) cur.start = t_cur;
  }
}

MiningResult mine(const MiningInputs& in, const std::vector<SingleFrameAnnotation>& annotations,
                  const MiningOptions& opt) {
  if (!in.features) throw std::invalid_argument("mine: features missing");
  const int T = static_cast<int>(in.psi.rows());
  const int n_c = static_cast<int>(in.psi.cols()) - 1;
  if (in.actionness.size() != T || in.features->rows() != T)
    throw std::invalid_argument("mine: inputs disagree on length");
  const Ablation& ab = opt.ablation;

  MiningResult res;
  const auto aux = auxiliary_segments(in.actionness, opt.eta);
  std::vector<int> classes;
  std::vector<int> seeds;

  for (const auto& a : annotations) {
    if (a.t < 0 || a.t >= T) throw std::out_of_range("mine: annotation outside video");
    if (a.class_id < 0 || a.class_id >= n_c)
      throw std::out_of_range("mine: annotation class out of range");
    const ScoreSequence row = in.psi.col(a.class_id);
    const auto coarse = coarse_segments(row, opt.eta);
    if (std::find(classes.begin(), classes.end(), a.class_id) == classes.end())
      classes.push_back(a.class_id);

    MiningTrace tr;
    tr.annotation = a;
    tr.coarse = Segment(a.t, a.t);
    for (const auto& s : coarse)
      if (s.contains(a.t)) tr.coarse = s;
    tr.inflated = inflated_segment(coarse, aux, a.t, &tr.flagged);
    if (ab.no_dilation) tr.inflated = tr.coarse;

    const ScoreSequence corrected = corrected_score(row, in.actionness);
    tr.high_confidence =
        ab.no_hcs ? tr.coarse : high_confidence_segment(tr.coarse, corrected, a.t);
    tr.refined = ab.no_erosion
                     ? tr.coarse
                     : stg(tr.inflated, tr.high_confidence, a.t, corrected, *in.features);
    res.refined.push_back({tr.refined, a.class_id});
    seeds.push_back(a.t);
    res.trace.push_back(tr);
  }

  resolve_overlaps(res.refined, seeds);
  for (std::size_t k = 0; k < res.trace.size(); ++k) res.trace[k].refined = res.refined[k].segment;

  std::vector<Segment> coarse_all;
  for (int c : classes) {
    const ScoreSequence row = in.psi.col(c);
    for (const auto& s : coarse_segments(row, opt.eta)) coarse_all.push_back(s);
  }
  std::vector<Segment> refined_segments;
  for (const auto& r : res.refined) refined_segments.push_back(r.segment);
  res.hard_bg = hard_backgrounds(coarse_all, refined_segments);

  const ScoreSequence bg = in.psi.col(n_c);
  res.evident_bg = evident_backgrounds(in.actionness, bg, top_k_count(T, opt.top_k_divisor));
  return res;
}

}  // namespace detal

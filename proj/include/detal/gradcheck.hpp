#pragma once

// Central finite-difference check of the analytic gradients. Only the
// value path of loss_and_grad is used to build the numeric estimate.

#include "detal/training.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace detal {

struct GradCheckCase {
  ModelParams<double> params;
  FeatureSequence rgb, flow;
  StepLabels labels;
  double mu = 0.1;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  Eigen::Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  long entries = 0;
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true
/// gradient is ~0 from turning round-off into a large ratio.
inline double gradient_rel_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

inline constexpr double kGradCheckStep = 1e-4;
inline constexpr double kGradCheckFloor = 1e-5;

inline GradCheckResult finite_difference_check(const GradCheckCase& c, const TermMask& mask,
                                               double h = kGradCheckStep,
                                               double floor = kGradCheckFloor) {
  ModelParams<double> analytic = zeros_like(c.params);
  loss_and_grad(c.params, c.rgb, c.flow, c.labels, c.mu, &analytic, mask);

  ModelParams<double> probe = c.params;
  auto value = [&]() {
    return loss_and_grad<double>(probe, c.rgb, c.flow, c.labels, c.mu, nullptr, mask)
        .total();
  };

  GradCheckResult res;
  visit_tensors(
      [&](const std::string& name, auto& x, const auto& g) {
        for (Eigen::Index i = 0; i < x.size(); ++i) {
          const double saved = x.data()[i];
          x.data()[i] = saved + h;
          const double up = value();
          x.data()[i] = saved - h;
          const double down = value();
          x.data()[i] = saved;
          const double numeric = (up - down) / (2.0 * h);
          const double err = gradient_rel_error(g.data()[i], numeric, floor);
          ++res.entries;
          if (err > res.max_rel_error || res.worst_index < 0) {
            res.max_rel_error = err;
            res.worst_tensor = name;
            res.worst_index = i;
            res.worst_analytic = g.data()[i];
            res.worst_numeric = numeric;
          }
        }
      },
      probe, analytic);
  return res;
}

namespace detail {

inline TrainingLabels random_labels(int T, int n_c, std::mt19937_64& rng) {
  TrainingLabels l;
  l.video_label = Eigen::VectorXd::Zero(n_c);
  std::uniform_int_distribution<int> cls(0, n_c - 1);
  std::vector<int> order(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) order[static_cast<std::size_t>(t)] = t;
  std::shuffle(order.begin(), order.end(), rng);

  // first half of a random permutation becomes action snippets in 1-2
  // instances, a share of the remainder background
  const int n_action = std::max(1, T / 2);
  const int n_inst = n_action >= 2 ? 2 : 1;
  for (int k = 0; k < n_inst; ++k) {
    ActionInstance inst;
    inst.class_id = cls(rng);
    l.video_label(inst.class_id) = 1.0;
    l.instances.push_back(inst);
  }
  for (int k = 0; k < n_action; ++k)
    l.instances[static_cast<std::size_t>(k % n_inst)].snippets.push_back(
        order[static_cast<std::size_t>(k)]);
  for (int k = n_action; k < T; ++k)
    if (k % 2 == 0) l.background.push_back(order[static_cast<std::size_t>(k)]);

  std::uniform_int_distribution<int> idx(0, T - 1);
  for (int k = 0; k < 4; ++k) {
    int i = idx(rng), j = idx(rng);
    if (i == j) j = (j + 1) % T;
    l.pairs.push_back({i, j, k % 2 == 0});
  }
  return l;
}

}  // namespace detail

/// Small random instance: T in [3, 8], D in {6, 8}, N_c in [1, 3], unit-norm
/// feature rows, independent labels per part.
inline GradCheckCase random_gradcheck_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> t_dist(3, 8), d_dist(3, 4), c_dist(1, 3);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int T = t_dist(rng);
  const int D = 2 * d_dist(rng);
  const int n_c = c_dist(rng);

  GradCheckCase c;
  c.params = init_params<double>(D, n_c, rng());
  // spread fusion weights away from their initial symmetric value
  std::uniform_real_distribution<double> w(0.2, 1.0);
  for (Eigen::Index i = 0; i < c.params.fusion.size(); ++i)
    c.params.fusion.data()[i] = w(rng);
  c.rgb.resize(T, D);
  c.flow.resize(T, D);
  // unit-norm rows, as produced by the synthetic generator
  for (FeatureSequence* f : {&c.rgb, &c.flow}) {
    for (Eigen::Index i = 0; i < f->size(); ++i) f->data()[i] = float(normal(rng));
    f->rowwise().normalize();
  }
  c.labels.rgb = detail::random_labels(T, n_c, rng);
  c.labels.flow = detail::random_labels(T, n_c, rng);
  c.labels.fused = detail::random_labels(T, n_c, rng);
  std::uniform_real_distribution<double> mu(0.05, 1.0);
  c.mu = mu(rng);
  return c;
}

struct GradCheckOutcome {
  std::uint64_t seed = 0;
  std::string term;  // cls_video, cls_snippet, action, emb or total
  GradCheckResult result;
};

/// Every loss term in isolation and the total, on `cases` random instances
/// with seeds first_seed, first_seed + 1, ...
inline std::vector<GradCheckOutcome> gradcheck_suite(int cases, std::uint64_t first_seed) {
  const std::pair<const char*, TermMask> terms[] = {
      {"cls_video", TermMask::only_video()}, {"cls_snippet", TermMask::only_snippet()},
      {"action", TermMask::only_action()},   {"emb", TermMask::only_embed()},
      {"total", TermMask::all()}};
  std::vector<GradCheckOutcome> out;
  for (int k = 0; k < cases; ++k) {
    const std::uint64_t seed = first_seed + static_cast<std::uint64_t>(k);
    const GradCheckCase c = random_gradcheck_case(seed);
    for (const auto& [name, mask] : terms)
      out.push_back({seed, name, finite_difference_check(c, mask)});
  }
  return out;
}

}  // namespace detal

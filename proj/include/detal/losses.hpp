#pragma once

// Training objective. Every term is available as a plain value function and as
// a gradient-accumulating variant operating on a stream's ModelOutputs.

#include "detal/core.hpp"
#include "detal/model.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace detal {

/// Lower bound applied before every logarithm.
inline constexpr double kLogClamp = 1e-7;

template <typename Scalar>
Scalar clamped_log(Scalar x) {
  return std::log(std::clamp(x, Scalar(kLogClamp), Scalar(1)));
}

/// d/dx of clamped_log; zero where the clamp is active.
template <typename Scalar>
Scalar clamped_log_grad(Scalar x) {
  return (x >= Scalar(kLogClamp) && x <= Scalar(1)) ? Scalar(1) / x : Scalar(0);
}

/// Annotated action instance: its class and the snippets labeled with it.
struct ActionInstance {
  int class_id = 0;
  std::vector<int> snippets;
};

struct SnippetPair {
  int i = 0;
  int j = 0;
  bool same_class = false;
};

/// Supervision for one video and one model part.
struct TrainingLabels {
  std::vector<ActionInstance> instances;
  std::vector<int> background;
  std::vector<SnippetPair> pairs;
  Eigen::VectorXd video_label;  // multi-hot over N_c
};

/// Attention-weighted CAM pooled over time, background column dropped,
/// followed by a softmax over the action classes.
template <typename DPsi, typename DLambda>
VectorX<typename DPsi::Scalar> video_class_prob(const Eigen::MatrixBase<DPsi>& psi,
                                                const Eigen::MatrixBase<DLambda>& lambda) {
  const Eigen::Index n_c = psi.cols() - 1;
  return softmax(psi.leftCols(n_c).transpose() * lambda);
}

template <typename DP, typename DY>
double loss_video(const Eigen::MatrixBase<DP>& p, const Eigen::MatrixBase<DY>& y) {
  double l = 0.0;
  for (Eigen::Index c = 0; c < p.size(); ++c)
    if (y(c) != 0) l -= static_cast<double>(y(c)) * clamped_log(double(p(c)));
  return l;
}

namespace detail {

template <typename Scalar>
Scalar instance_mean_neglog_psi(const MatrixX<Scalar>& psi, const ActionInstance& inst,
                                MatrixX<Scalar>* dpsi) {
  if (inst.snippets.empty()) return Scalar(0);
  const Scalar w = Scalar(1) / Scalar(inst.snippets.size());
  Scalar l = 0;
  for (int i : inst.snippets) {
    l -= w * clamped_log(psi(i, inst.class_id));
    if (dpsi) (*dpsi)(i, inst.class_id) -= w * clamped_log_grad(psi(i, inst.class_id));
  }
  return l;
}

}  // namespace detail

/// Per-instance mean of -log CAM at the instance class, plus mu times the mean
/// of -log CAM at the background class over background snippets.
template <typename Scalar>
Scalar loss_snippet(const MatrixX<Scalar>& psi, const TrainingLabels& labels,
                    double mu, MatrixX<Scalar>* dpsi = nullptr) {
  Scalar l = 0;
  for (const auto& inst : labels.instances)
    l += detail::instance_mean_neglog_psi(psi, inst, dpsi);
  if (!labels.background.empty()) {
    const Eigen::Index bg = psi.cols() - 1;
    const Scalar w = Scalar(mu) / Scalar(labels.background.size());
    for (int j : labels.background) {
      l -= w * clamped_log(psi(j, bg));
      if (dpsi) (*dpsi)(j, bg) -= w * clamped_log_grad(psi(j, bg));
    }
  }
  return l;
}

/// Per-instance mean of -log A over action snippets plus mu times the mean of
/// -log(1 - A) over background snippets.
template <typename Scalar>
Scalar loss_action(const VectorX<Scalar>& a, const TrainingLabels& labels, double mu,
                   VectorX<Scalar>* da = nullptr) {
  Scalar l = 0;
  for (const auto& inst : labels.instances) {
    if (inst.snippets.empty()) continue;
    const Scalar w = Scalar(1) / Scalar(inst.snippets.size());
    for (int i : inst.snippets) {
      l -= w * clamped_log(a(i));
      if (da) (*da)(i) -= w * clamped_log_grad(a(i));
    }
  }
  if (!labels.background.empty()) {
    const Scalar w = Scalar(mu) / Scalar(labels.background.size());
    for (int j : labels.background) {
      const Scalar q = Scalar(1) - a(j);
      l -= w * clamped_log(q);
      if (da) (*da)(j) += w * clamped_log_grad(q);
    }
  }
  return l;
}

/// Pair loss on cosine distance d = 1 - cos: same-class pairs pay d, other
/// pairs pay -log(1 - exp(-d)). Zero-norm rows count as d = 1 with no
/// gradient. Returns 0 for an empty pair set.
template <typename Scalar>
Scalar loss_embed(const MatrixX<Scalar>& e, const std::vector<SnippetPair>& pairs,
                  MatrixX<Scalar>* de = nullptr) {
  if (pairs.empty()) return Scalar(0);
  const Scalar inv_np = Scalar(1) / Scalar(pairs.size());
  Scalar l = 0;
  for (const auto& pr : pairs) {
    const auto u = e.row(pr.i);
    const auto v = e.row(pr.j);
    const Scalar nu = u.norm();
    const Scalar nv = v.norm();
    const bool degenerate = nu == Scalar(0) || nv == Scalar(0);
    const Scalar cos = degenerate ? Scalar(0) : u.dot(v) / (nu * nv);
    const Scalar d = Scalar(1) - cos;
    const Scalar k = std::exp(-d);
    const Scalar x = pr.same_class ? k : Scalar(1) - k;
    l -= inv_np * clamped_log(x);
    if (de && !degenerate) {
      const Scalar dx_dd = pr.same_class ? -k : k;
      const Scalar dl_dcos = inv_np * clamped_log_grad(x) * dx_dd;  // -dl/dd
      VectorX<Scalar> du =
          dl_dcos * (v.transpose() / (nu * nv) - cos * u.transpose() / (nu * nu));
      VectorX<Scalar> dv =
          dl_dcos * (u.transpose() / (nu * nv) - cos * v.transpose() / (nv * nv));
      de->row(pr.i) += du.transpose();
      de->row(pr.j) += dv.transpose();
    }
  }
  return l;
}

/// Selects which loss terms contribute; used to check terms in isolation.
struct TermMask {
  bool video = true;
  bool snippet = true;
  bool action = true;
  bool embed = true;

  static TermMask all() { return {}; }
  static TermMask only_video() { return {true, false, false, false}; }
  static TermMask only_snippet() { return {false, true, false, false}; }
  static TermMask only_action() { return {false, false, true, false}; }
  static TermMask only_embed() { return {false, false, false, true}; }
};

struct PartLoss {
  double video = 0.0;
  double snippet = 0.0;
  double action = 0.0;
  double embed = 0.0;

  double total() const { return video + snippet + action + embed; }
  PartLoss& operator+=(const PartLoss& o) {
    video += o.video;
    snippet += o.snippet;
    action += o.action;
    embed += o.embed;
    return *this;
  }
};

/// All four terms on one part's outputs. When `grads` is non-null the
/// gradients with respect to that part's logits and embeddings are added to it.
template <typename Scalar>
PartLoss part_loss(const ModelOutputs<Scalar>& out, const TrainingLabels& labels,
                   double mu, OutputGrads<Scalar>* grads,
                   const TermMask& mask = TermMask::all()) {
  const Eigen::Index T = out.length();
  const Eigen::Index n_c = out.Psi.cols() - 1;
  if (labels.video_label.size() != n_c)
    throw std::invalid_argument("video label width does not match class count");
  auto check = [T](int idx) {
    if (idx < 0 || idx >= T) throw std::out_of_range("label index out of range");
  };
  for (const auto& inst : labels.instances) {
    if (inst.class_id < 0 || inst.class_id >= n_c)
      throw std::out_of_range("instance class out of range");
    for (int i : inst.snippets) check(i);
  }
  for (int j : labels.background) check(j);
  for (const auto& pr : labels.pairs) {
    check(pr.i);
    check(pr.j);
  }

  PartLoss pl;
  MatrixX<Scalar> dpsi;
  VectorX<Scalar> da, dlambda;
  if (grads) {
    dpsi = MatrixX<Scalar>::Zero(out.Psi.rows(), out.Psi.cols());
    da = VectorX<Scalar>::Zero(T);
    dlambda = VectorX<Scalar>::Zero(T);
  }

  // video classification
  const VectorX<Scalar> p = video_class_prob(out.Psi, out.Lambda);
  pl.video = mask.video ? loss_video(p, labels.video_label) : 0.0;
  if (grads && mask.video) {
    VectorX<Scalar> g(n_c);
    for (Eigen::Index c = 0; c < n_c; ++c)
      g(c) = -Scalar(labels.video_label(c)) * clamped_log_grad(p(c));
    const VectorX<Scalar> ds = (p.array() * (g.array() - p.dot(g))).matrix();
    dlambda += out.Psi.leftCols(n_c) * ds;
    dpsi.leftCols(n_c) += out.Lambda * ds.transpose();
  }

  if (mask.snippet)
    pl.snippet = double(loss_snippet(out.Psi, labels, mu, grads ? &dpsi : nullptr));
  if (mask.action)
    pl.action = double(loss_action(out.A, labels, mu, grads ? &da : nullptr));
  if (mask.embed)
    pl.embed = double(loss_embed(out.E, labels.pairs, grads ? &grads->dE : nullptr));

  if (grads) {
    // softmax Jacobian per row
    const VectorX<Scalar> inner = (dpsi.array() * out.Psi.array()).rowwise().sum();
    grads->dPsiLogits +=
        (out.Psi.array() * (dpsi.colwise() - inner).array()).matrix();
    grads->dALogits += (da.array() * out.A.array() * (Scalar(1) - out.A.array())).matrix();
    grads->dLambdaLogits +=
        (dlambda.array() * out.Lambda.array() * (Scalar(1) - out.Lambda.array())).matrix();
  }
  return pl;
}

}  // namespace detal

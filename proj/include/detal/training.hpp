#pragma once

#include "detal/losses.hpp"
#include "detal/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace detal {

/// Raised when a loss term or parameter becomes non-finite.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Labels for the three supervised parts of one video.
struct StepLabels {
  TrainingLabels rgb, flow, fused;

  const TrainingLabels& part(Stream s) const {
    switch (s) {
      case Stream::Rgb: return rgb;
      case Stream::Flow: return flow;
      case Stream::Fused: return fused;
    }
    return fused;
  }
};

struct LossReport {
  PartLoss rgb, flow, fused;

  double total() const { return rgb.total() + flow.total() + fused.total(); }
  /// Each term summed over the three parts.
  PartLoss summed() const {
    PartLoss s = rgb;
    s += flow;
    s += fused;
    return s;
  }
};

namespace detail {

inline void check_finite(const PartLoss& p, const char* part) {
  auto one = [&](double v, const char* term) {
    if (!std::isfinite(v))
      throw NumericalError(std::string("non-finite loss term ") + part + "." + term);
  };
  one(p.video, "cls_video");
  one(p.snippet, "cls_snippet");
  one(p.action, "action");
  one(p.embed, "emb");
}

}  // namespace detail

/// Total loss summed over rgb, flow and fused parts. Gradients with respect to
/// every parameter are accumulated into `grad` (same shapes as `params`)
/// when it is non-null.
template <typename Scalar>
LossReport loss_and_grad(const ModelParams<Scalar>& params, const FeatureSequence& rgb,
                         const FeatureSequence& flow, const StepLabels& labels, double mu,
                         ModelParams<Scalar>* grad,
                         const TermMask& mask = TermMask::all()) {
  if (rgb.rows() != flow.rows())
    throw std::invalid_argument("rgb and flow lengths differ");
  StreamCache<Scalar> c_rgb, c_flow;
  const auto o_rgb = forward(rgb, params.rgb, &c_rgb);
  const auto o_flow = forward(flow, params.flow, &c_flow);
  const auto o_fused = fuse(o_rgb, o_flow, params.fusion);

  LossReport r;
  if (!grad) {
    r.rgb = part_loss<Scalar>(o_rgb, labels.rgb, mu, nullptr, mask);
    r.flow = part_loss<Scalar>(o_flow, labels.flow, mu, nullptr, mask);
    r.fused = part_loss<Scalar>(o_fused, labels.fused, mu, nullptr, mask);
    return r;
  }

  auto g_rgb = OutputGrads<Scalar>::zeros(o_rgb);
  auto g_flow = OutputGrads<Scalar>::zeros(o_flow);
  auto g_fused = OutputGrads<Scalar>::zeros(o_fused);
  r.rgb = part_loss<Scalar>(o_rgb, labels.rgb, mu, &g_rgb, mask);
  r.flow = part_loss<Scalar>(o_flow, labels.flow, mu, &g_flow, mask);
  r.fused = part_loss<Scalar>(o_fused, labels.fused, mu, &g_fused, mask);

  // fusion backward
  const auto& w = params.fusion;
  auto& gw = grad->fusion;
  gw(kFuseActionness, 0) += g_fused.dALogits.dot(o_rgb.ALogits);
  gw(kFuseActionness, 1) += g_fused.dALogits.dot(o_flow.ALogits);
  gw(kFuseCam, 0) += (g_fused.dPsiLogits.array() * o_rgb.PsiLogits.array()).sum();
  gw(kFuseCam, 1) += (g_fused.dPsiLogits.array() * o_flow.PsiLogits.array()).sum();
  gw(kFuseAttention, 0) += g_fused.dLambdaLogits.dot(o_rgb.LambdaLogits);
  gw(kFuseAttention, 1) += g_fused.dLambdaLogits.dot(o_flow.LambdaLogits);

  g_rgb.dALogits += w(kFuseActionness, 0) * g_fused.dALogits;
  g_flow.dALogits += w(kFuseActionness, 1) * g_fused.dALogits;
  g_rgb.dPsiLogits += w(kFuseCam, 0) * g_fused.dPsiLogits;
  g_flow.dPsiLogits += w(kFuseCam, 1) * g_fused.dPsiLogits;
  g_rgb.dLambdaLogits += w(kFuseAttention, 0) * g_fused.dLambdaLogits;
  g_flow.dLambdaLogits += w(kFuseAttention, 1) * g_fused.dLambdaLogits;
  const Eigen::Index e_rgb = o_rgb.E.cols();
  g_rgb.dE += g_fused.dE.leftCols(e_rgb);
  g_flow.dE += g_fused.dE.rightCols(o_flow.E.cols());

  backward(c_rgb, params.rgb, g_rgb, grad->rgb);
  backward(c_flow, params.flow, g_flow, grad->flow);
  return r;
}

struct AdamOptions {
  double learning_rate = 1e-4;
  double weight_decay = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Scalar>
struct AdamState {
  ModelParams<Scalar> m, v;
  long step = 0;

  static AdamState for_params(const ModelParams<Scalar>& p) {
    return {zeros_like(p), zeros_like(p), 0};
  }
};

/// One Adam update with decoupled weight decay.
template <typename Scalar>
void adam_update(ModelParams<Scalar>& params, const ModelParams<Scalar>& grad,
                 AdamState<Scalar>& state, const AdamOptions& opt) {
  ++state.step;
  const Scalar b1 = Scalar(opt.beta1);
  const Scalar b2 = Scalar(opt.beta2);
  const Scalar corr1 = Scalar(1) - std::pow(b1, Scalar(state.step));
  const Scalar corr2 = Scalar(1) - std::pow(b2, Scalar(state.step));
  const Scalar lr = Scalar(opt.learning_rate);
  const Scalar wd = Scalar(opt.weight_decay);
  const Scalar eps = Scalar(opt.epsilon);
  visit_tensors(
      [&](const std::string&, auto& x, const auto& g, auto& m, auto& v) {
        m = b1 * m + (Scalar(1) - b1) * g;
        v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
        const auto step = ((m.array() / corr1) /
                           ((v.array() / corr2).sqrt() + eps)).matrix();
        x -= lr * (step + wd * x);
      },
      params, grad, state.m, state.v);
}

/// Forward, loss, analytic backward and one optimizer update for one video.
/// Parameters are left untouched when the loss is non-finite.
template <typename Scalar>
LossReport train_step(ModelParams<Scalar>& params, AdamState<Scalar>& state,
                      const FeatureSequence& rgb, const FeatureSequence& flow,
                      const StepLabels& labels, double mu, const AdamOptions& opt) {
  ModelParams<Scalar> grad = zeros_like(params);
  const LossReport r = loss_and_grad(params, rgb, flow, labels, mu, &grad);
  detail::check_finite(r.rgb, "rgb");
  detail::check_finite(r.flow, "flow");
  detail::check_finite(r.fused, "fused");
  if (!all_finite(grad)) throw NumericalError("non-finite gradient");
  adam_update(params, grad, state, opt);
  return r;
}

}  // namespace detal

#pragma once

// Snippet classification model: temporal-conv embedding followed by an
// actionness head, a class activation (CAM) head and an attention head, one
// copy per stream, plus learned late fusion of the two streams.
//
// Activations: tanh in hidden layers, sigmoid for actionness and attention,
// row-wise softmax over N_c + 1 classes for the CAM (last column is the
// background class). Temporal convolutions have width 3 and zero padding.

#include "detal/core.hpp"

#include <cmath>
#include <random>
#include <string>

namespace detal {

template <typename Scalar>
struct Conv1d {
  MatrixX<Scalar> weight;  // out x (3 * in); taps ordered t-1, t, t+1
  VectorX<Scalar> bias;
};

template <typename Scalar>
struct Dense {
  MatrixX<Scalar> weight;  // out x in
  VectorX<Scalar> bias;
};

template <typename Scalar>
struct StreamParams {
  Conv1d<Scalar> embed;
  Conv1d<Scalar> act1, act2;
  Dense<Scalar> act_out;
  Dense<Scalar> cam1, cam2, cam_out;
  Conv1d<Scalar> att1, att2;
};

/// Rows of the fusion matrix; columns are (rgb, flow).
enum FusionKind { kFuseActionness = 0, kFuseCam = 1, kFuseAttention = 2 };

template <typename Scalar>
struct ModelParams {
  int num_classes = 0;
  int feature_dim = 0;
  StreamParams<Scalar> rgb, flow;
  MatrixX<Scalar> fusion;  // 3 x 2

  int embed_dim() const { return feature_dim / 2; }
  int hidden_dim() const { return feature_dim / 2; }

  const StreamParams<Scalar>& stream(Stream s) const {
    return s == Stream::Flow ? flow : rgb;
  }
  StreamParams<Scalar>& stream(Stream s) { return s == Stream::Flow ? flow : rgb; }
};

namespace detail {

template <typename F, typename... S>
void visit_stream(const std::string& prefix, F& f, S&... s) {
  f(prefix + "embed.weight", s.embed.weight...);
  f(prefix + "embed.bias", s.embed.bias...);
  f(prefix + "act1.weight", s.act1.weight...);
  f(prefix + "act1.bias", s.act1.bias...);
  f(prefix + "act2.weight", s.act2.weight...);
  f(prefix + "act2.bias", s.act2.bias...);
  f(prefix + "act_out.weight", s.act_out.weight...);
  f(prefix + "act_out.bias", s.act_out.bias...);
  f(prefix + "cam1.weight", s.cam1.weight...);
  f(prefix + "cam1.bias", s.cam1.bias...);
  f(prefix + "cam2.weight", s.cam2.weight...);
  f(prefix + "cam2.bias", s.cam2.bias...);
  f(prefix + "cam_out.weight", s.cam_out.weight...);
  f(prefix + "cam_out.bias", s.cam_out.bias...);
  f(prefix + "att1.weight", s.att1.weight...);
  f(prefix + "att1.bias", s.att1.bias...);
  f(prefix + "att2.weight", s.att2.weight...);
  f(prefix + "att2.bias", s.att2.bias...);
}

}  // namespace detail

/// Calls f(name, tensor_of_p0, tensor_of_p1, ...) for every parameter tensor,
/// in a fixed order shared by the optimizer, checkpoints and gradient checks.
template <typename F, typename... P>
void visit_tensors(F&& f, P&... params) {
  detail::visit_stream("rgb.", f, params.rgb...);
  detail::visit_stream("flow.", f, params.flow...);
  f(std::string("fusion"), params.fusion...);
}

template <typename Scalar>
Eigen::Index parameter_count(const ModelParams<Scalar>& p) {
  Eigen::Index n = 0;
  visit_tensors([&](const std::string&, const auto& t) { n += t.size(); }, p);
  return n;
}

/// Same shapes as `p`, all zeros.
template <typename Scalar>
ModelParams<Scalar> zeros_like(const ModelParams<Scalar>& p) {
  ModelParams<Scalar> z = p;
  visit_tensors([](const std::string&, auto& t) { t.setZero(); }, z);
  return z;
}

template <typename Scalar>
bool all_finite(const ModelParams<Scalar>& p) {
  bool ok = true;
  visit_tensors([&](const std::string&, const auto& t) { ok = ok && t.allFinite(); },
                p);
  return ok;
}

template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& p) {
  ModelParams<To> out;
  out.num_classes = p.num_classes;
  out.feature_dim = p.feature_dim;
  visit_tensors(
      [](const std::string&, auto& dst, const auto& src) {
        dst = src.template cast<To>();
      },
      out, p);
  return out;
}

namespace detail {

template <typename Scalar>
void init_layer(MatrixX<Scalar>& w, VectorX<Scalar>& b, int out, int fan_in,
                std::mt19937_64& rng) {
  // Glorot-style uniform init.
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  w.resize(out, fan_in);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = Scalar(dist(rng));
  b = VectorX<Scalar>::Zero(out);
}

template <typename Scalar>
StreamParams<Scalar> init_stream(int D, int N_c, std::mt19937_64& rng) {
  const int e = D / 2;
  const int h = D / 2;
  StreamParams<Scalar> s;
  init_layer(s.embed.weight, s.embed.bias, e, 3 * D, rng);
  init_layer(s.act1.weight, s.act1.bias, h, 3 * e, rng);
  init_layer(s.act2.weight, s.act2.bias, h, 3 * h, rng);
  init_layer(s.act_out.weight, s.act_out.bias, 1, h, rng);
  init_layer(s.cam1.weight, s.cam1.bias, h, e, rng);
  init_layer(s.cam2.weight, s.cam2.bias, h, h, rng);
  init_layer(s.cam_out.weight, s.cam_out.bias, N_c + 1, h, rng);
  init_layer(s.att1.weight, s.att1.bias, h, 3 * e, rng);
  init_layer(s.att2.weight, s.att2.bias, 1, 3 * h, rng);
  return s;
}

}  // namespace detail

/// Random initialization; fusion weights start at 0.5 each.
template <typename Scalar>
ModelParams<Scalar> init_params(int feature_dim, int num_classes,
                                std::uint64_t seed) {
  if (feature_dim < 2 || feature_dim % 2 != 0)
    throw std::invalid_argument("feature dimension must be even and >= 2");
  if (num_classes < 1) throw std::invalid_argument("need at least one class");
  std::mt19937_64 rng(seed);
  ModelParams<Scalar> p;
  p.num_classes = num_classes;
  p.feature_dim = feature_dim;
  p.rgb = detail::init_stream<Scalar>(feature_dim, num_classes, rng);
  p.flow = detail::init_stream<Scalar>(feature_dim, num_classes, rng);
  p.fusion = MatrixX<Scalar>::Constant(3, 2, Scalar(0.5));
  return p;
}

template <typename Scalar>
struct ModelOutputs {
  MatrixX<Scalar> E;          // T x embed width
  VectorX<Scalar> A;          // actionness in [0,1]
  MatrixX<Scalar> Psi;        // T x (N_c + 1), rows on the simplex
  VectorX<Scalar> Lambda;     // attention in [0,1]
  MatrixX<Scalar> PsiLogits;  // pre-softmax CAM
  VectorX<Scalar> ALogits;
  VectorX<Scalar> LambdaLogits;

  Eigen::Index length() const { return Psi.rows(); }
};

// ---------------------------------------------------------------------------
// Elementwise helpers

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return x.unaryExpr([](S v) { return S(1) / (S(1) + std::exp(-v)); });
}

/// Row-wise softmax with max subtraction.
template <typename Derived>
MatrixX<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& z) {
  using S = typename Derived::Scalar;
  MatrixX<S> out = z;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    out.row(r).array() -= out.row(r).maxCoeff();
    out.row(r) = out.row(r).array().exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

template <typename Derived>
VectorX<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& z) {
  using S = typename Derived::Scalar;
  VectorX<S> out = z;
  out.array() -= out.maxCoeff();
  out = out.array().exp().matrix();
  return out / out.sum();
}

/// Rows [x_{t-1}, x_t, x_{t+1}] with zero padding at both ends.
template <typename Scalar>
MatrixX<Scalar> im2col3(const MatrixX<Scalar>& x) {
  const Eigen::Index T = x.rows();
  const Eigen::Index C = x.cols();
  MatrixX<Scalar> cols = MatrixX<Scalar>::Zero(T, 3 * C);
  cols.middleCols(C, C) = x;
  if (T > 1) {
    cols.block(1, 0, T - 1, C) = x.topRows(T - 1);
    cols.block(0, 2 * C, T - 1, C) = x.bottomRows(T - 1);
  }
  return cols;
}

/// Adjoint of im2col3.
template <typename Scalar>
MatrixX<Scalar> col2im3(const MatrixX<Scalar>& dcols) {
  const Eigen::Index T = dcols.rows();
  const Eigen::Index C = dcols.cols() / 3;
  MatrixX<Scalar> dx = dcols.middleCols(C, C);
  if (T > 1) {
    dx.topRows(T - 1) += dcols.block(1, 0, T - 1, C);
    dx.bottomRows(T - 1) += dcols.block(0, 2 * C, T - 1, C);
  }
  return dx;
}

template <typename Scalar, typename W, typename B>
MatrixX<Scalar> affine(const MatrixX<Scalar>& x, const W& weight, const B& bias) {
  MatrixX<Scalar> y = x * weight.transpose();
  y.rowwise() += bias.transpose();
  return y;
}

template <typename Scalar>
MatrixX<Scalar> tanh_of(const MatrixX<Scalar>& x) {
  return x.array().tanh().matrix();
}

/// Intermediate activations kept for the backward pass.
template <typename Scalar>
struct StreamCache {
  MatrixX<Scalar> x_cols;  // im2col of the input features
  MatrixX<Scalar> E, e_cols;
  MatrixX<Scalar> act_h1, act_h1_cols, act_h2;
  MatrixX<Scalar> cam_h1, cam_h2;
  MatrixX<Scalar> att_h1, att_h1_cols;
};

/// Forward pass of one stream. `cache` may be null.
template <typename Scalar>
ModelOutputs<Scalar> forward(const FeatureSequence& features,
                             const StreamParams<Scalar>& p,
                             StreamCache<Scalar>* cache = nullptr) {
  if (features.rows() < 1)
    throw std::invalid_argument("forward: empty feature sequence");
  if (features.cols() * 3 != p.embed.weight.cols())
    throw std::invalid_argument(
        "forward: feature width " + std::to_string(features.cols()) +
        " does not match model width " + std::to_string(p.embed.weight.cols() / 3));

  StreamCache<Scalar> local;
  StreamCache<Scalar>& c = cache ? *cache : local;
  const MatrixX<Scalar> x = features.template cast<Scalar>();

  c.x_cols = im2col3(x);
  c.E = tanh_of<Scalar>(affine(c.x_cols, p.embed.weight, p.embed.bias));
  c.e_cols = im2col3(c.E);

  c.act_h1 = tanh_of<Scalar>(affine(c.e_cols, p.act1.weight, p.act1.bias));
  c.act_h1_cols = im2col3(c.act_h1);
  c.act_h2 = tanh_of<Scalar>(affine(c.act_h1_cols, p.act2.weight, p.act2.bias));

  c.cam_h1 = tanh_of<Scalar>(affine(c.E, p.cam1.weight, p.cam1.bias));
  c.cam_h2 = tanh_of<Scalar>(affine(c.cam_h1, p.cam2.weight, p.cam2.bias));

  c.att_h1 = tanh_of<Scalar>(affine(c.e_cols, p.att1.weight, p.att1.bias));
  c.att_h1_cols = im2col3(c.att_h1);

  ModelOutputs<Scalar> out;
  out.E = c.E;
  out.ALogits = affine(c.act_h2, p.act_out.weight, p.act_out.bias).col(0);
  out.PsiLogits = affine(c.cam_h2, p.cam_out.weight, p.cam_out.bias);
  out.LambdaLogits = affine(c.att_h1_cols, p.att2.weight, p.att2.bias).col(0);
  out.A = sigmoid(out.ALogits);
  out.Psi = softmax_rows(out.PsiLogits);
  out.Lambda = sigmoid(out.LambdaLogits);
  return out;
}

template <typename Scalar>
ModelOutputs<Scalar> forward(const FeatureSequence& features,
                             const ModelParams<Scalar>& p, Stream s,
                             StreamCache<Scalar>* cache = nullptr) {
  if (s == Stream::Fused)
    throw std::invalid_argument("forward: fused outputs come from fuse()");
  return forward(features, p.stream(s), cache);
}

/// Late fusion: weighted sum of the streams' pre-activation scores, then the
/// usual activations; embeddings are concatenated.
template <typename Scalar>
ModelOutputs<Scalar> fuse(const ModelOutputs<Scalar>& rgb,
                          const ModelOutputs<Scalar>& flow,
                          const MatrixX<Scalar>& fusion) {
  if (rgb.length() != flow.length())
    throw std::invalid_argument("fuse: stream lengths differ");
  ModelOutputs<Scalar> out;
  out.E.resize(rgb.E.rows(), rgb.E.cols() + flow.E.cols());
  out.E << rgb.E, flow.E;
  out.ALogits = fusion(kFuseActionness, 0) * rgb.ALogits +
                fusion(kFuseActionness, 1) * flow.ALogits;
  out.PsiLogits =
      fusion(kFuseCam, 0) * rgb.PsiLogits + fusion(kFuseCam, 1) * flow.PsiLogits;
  out.LambdaLogits = fusion(kFuseAttention, 0) * rgb.LambdaLogits +
                     fusion(kFuseAttention, 1) * flow.LambdaLogits;
  out.A = sigmoid(out.ALogits);
  out.Psi = softmax_rows(out.PsiLogits);
  out.Lambda = sigmoid(out.LambdaLogits);
  return out;
}

template <typename Scalar>
ModelOutputs<Scalar> fuse(const ModelOutputs<Scalar>& rgb,
                          const ModelOutputs<Scalar>& flow,
                          const ModelParams<Scalar>& p) {
  return fuse(rgb, flow, p.fusion);
}

/// Gradients with respect to a stream's outputs, all in logit space except E.
template <typename Scalar>
struct OutputGrads {
  MatrixX<Scalar> dE;
  VectorX<Scalar> dALogits;
  MatrixX<Scalar> dPsiLogits;
  VectorX<Scalar> dLambdaLogits;

  static OutputGrads zeros(const ModelOutputs<Scalar>& o) {
    OutputGrads g;
    g.dE = MatrixX<Scalar>::Zero(o.E.rows(), o.E.cols());
    g.dALogits = VectorX<Scalar>::Zero(o.length());
    g.dPsiLogits = MatrixX<Scalar>::Zero(o.Psi.rows(), o.Psi.cols());
    g.dLambdaLogits = VectorX<Scalar>::Zero(o.length());
    return g;
  }
};

namespace detail {

template <typename Scalar, typename Layer>
void affine_backward(const MatrixX<Scalar>& dy, const MatrixX<Scalar>& x,
                     const Layer& layer, Layer& grad, MatrixX<Scalar>* dx) {
  grad.weight.noalias() += dy.transpose() * x;
  grad.bias += dy.colwise().sum().transpose();
  if (dx) *dx = dy * layer.weight;
}

template <typename Scalar>
MatrixX<Scalar> tanh_backward(const MatrixX<Scalar>& dy, const MatrixX<Scalar>& y) {
  return (dy.array() * (Scalar(1) - y.array().square())).matrix();
}

}  // namespace detail

/// Backpropagates output gradients through one stream, accumulating into
/// `grad`.
template <typename Scalar>
void backward(const StreamCache<Scalar>& c, const StreamParams<Scalar>& p,
              const OutputGrads<Scalar>& g, StreamParams<Scalar>& grad) {
  using M = MatrixX<Scalar>;
  using detail::affine_backward;
  using detail::tanh_backward;

  M dE = g.dE;
  M tmp;

  // actionness head
  const M d_alog = g.dALogits;
  affine_backward<Scalar>(d_alog, c.act_h2, p.act_out, grad.act_out, &tmp);
  M d_pre = tanh_backward<Scalar>(tmp, c.act_h2);
  affine_backward<Scalar>(d_pre, c.act_h1_cols, p.act2, grad.act2, &tmp);
  d_pre = tanh_backward<Scalar>(col2im3<Scalar>(tmp), c.act_h1);
  affine_backward<Scalar>(d_pre, c.e_cols, p.act1, grad.act1, &tmp);
  M d_ecols = tmp;

  // CAM head
  affine_backward<Scalar>(g.dPsiLogits, c.cam_h2, p.cam_out, grad.cam_out, &tmp);
  d_pre = tanh_backward<Scalar>(tmp, c.cam_h2);
  affine_backward<Scalar>(d_pre, c.cam_h1, p.cam2, grad.cam2, &tmp);
  d_pre = tanh_backward<Scalar>(tmp, c.cam_h1);
  affine_backward<Scalar>(d_pre, c.E, p.cam1, grad.cam1, &tmp);
  dE += tmp;

  // attention head
  const M d_llog = g.dLambdaLogits;
  affine_backward<Scalar>(d_llog, c.att_h1_cols, p.att2, grad.att2, &tmp);
  d_pre = tanh_backward<Scalar>(col2im3<Scalar>(tmp), c.att_h1);
  affine_backward<Scalar>(d_pre, c.e_cols, p.att1, grad.att1, &tmp);
  d_ecols += tmp;

  dE += col2im3<Scalar>(d_ecols);
  d_pre = tanh_backward<Scalar>(dE, c.E);
  affine_backward<Scalar>(d_pre, c.x_cols, p.embed, grad.embed,
                          static_cast<M*>(nullptr));
}

}  // namespace detal

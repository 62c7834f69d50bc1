#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "melo/errors.hpp"

namespace melo {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// Architecture of the fully convolutional network: two same-padded
/// convolutions with `channels` kernels of kernel_rows x kernel_cols each,
/// batch normalization, ReLU and dropout after each, then a 1x1 convolution
/// head with sigmoid. Output shape equals input shape.
struct NetShape {
  int rows = 128;
  int cols = 64;
  int channels = 21;
  int kernel_rows = 32;
  int kernel_cols = 16;

  int pad_top() const { return (kernel_rows - 1) / 2; }
  int pad_left() const { return (kernel_cols - 1) / 2; }
  int pixels() const { return rows * cols; }
};

/// Every learnable tensor. Convolution weights are stored GEMM-ready as
/// (kernel_cols * in_channels * kernel_rows) x out_channels; element
/// (o, i, kr, kc) lives at ((kc * in_channels + i) * kernel_rows + kr, o).
template <typename S>
struct ParamTensors {
  Mat<S> conv1_w;
  Vec<S> conv1_b;
  Vec<S> bn1_gamma, bn1_beta;
  Mat<S> conv2_w;
  Vec<S> conv2_b;
  Vec<S> bn2_gamma, bn2_beta;
  Vec<S> head_w;
  Vec<S> head_b;  // size 1

  template <typename F>
  void for_each(F&& f) {
    f("conv1.weight", conv1_w);
    f("conv1.bias", conv1_b);
    f("bn1.gamma", bn1_gamma);
    f("bn1.beta", bn1_beta);
    f("conv2.weight", conv2_w);
    f("conv2.bias", conv2_b);
    f("bn2.gamma", bn2_gamma);
    f("bn2.beta", bn2_beta);
    f("head.weight", head_w);
    f("head.bias", head_b);
  }

  template <typename F>
  void for_each(F&& f) const {
    const_cast<ParamTensors<S>*>(this)->for_each(
        [&](const char* name, auto& t) { f(name, std::as_const(t)); });
  }

  void set_zero() {
    for_each([](const char*, auto& t) { t.setZero(); });
  }
};

template <typename S>
struct ModelParams {
  NetShape shape;
  ParamTensors<S> t;
  Vec<S> bn1_mean, bn1_var, bn2_mean, bn2_var;  // running statistics
  S bn_eps = S(1e-5);
  S bn_momentum = S(0.1);
};

enum class Mode { train, eval };

struct TrainConfig {
  double dropout_p = 0.3;
  double l1_coeff = 1e-5;   // applied to convolution and head weights only
  int batch_size = 16;
  int patience = 20;        // epochs without validation improvement
  int max_epochs = 500;
  std::uint64_t seed = 0;
  double lr = 1.0;
  double rho = 0.95;        // AdaDelta decay
  double eps = 1e-6;        // AdaDelta stability
  double val_fraction = 0.10;
};

namespace detail {

// Feature maps are (rows*cols) x channels with pixel index q = c*rows + r,
// one channel per matrix column. im2col unrolls the pitch axis only:
// col(q, i*kh + kr) = feat(r + kr - pad_top, c) of channel i, zero outside.
template <typename S>
void im2col(const Mat<S>& feat, int H, int W, int kh, int pad_top, Mat<S>& col) {
  const int HW = H * W;
  col.resize(HW, feat.cols() * kh);
  for (int ic = 0; ic < feat.cols(); ++ic) {
    for (int kr = 0; kr < kh; ++kr) {
      int dr = kr - pad_top;
      auto dst = col.col(ic * kh + kr);
      if (dr == 0) {
        dst = feat.col(ic);
        continue;
      }
      dst.setZero();
      if (std::abs(dr) >= H) continue;
      if (dr > 0) {
        dst.head(HW - dr) = feat.col(ic).tail(HW - dr);
        for (int c = 0; c < W; ++c) dst.segment(c * H + H - dr, dr).setZero();
      } else {
        dst.tail(HW + dr) = feat.col(ic).head(HW + dr);
        for (int c = 0; c < W; ++c) dst.segment(c * H, -dr).setZero();
      }
    }
  }
}

// Same-padded correlation as one GEMM per kernel time offset. In the pixel-
// major layout a time shift is a contiguous row block, so each offset
// touches one block of `col` and one block of `out`.
template <typename S>
void correlate(const Mat<S>& col, const Mat<S>& weight, const Vec<S>& bias, int H, int W,
               int kw, int pad_left, Mat<S>& out) {
  const int ckh = int(col.cols());
  out.resize(H * W, weight.cols());
  for (int oc = 0; oc < weight.cols(); ++oc) out.col(oc).setConstant(bias(oc));
  for (int kc = 0; kc < kw; ++kc) {
    int dc = kc - pad_left;
    int c0 = std::max(0, -dc);
    int c1 = std::min(W, W - dc);
    if (c1 <= c0) continue;
    int n = (c1 - c0) * H;
    out.middleRows(c0 * H, n).noalias() +=
        col.middleRows((c0 + dc) * H, n) * weight.middleRows(kc * ckh, ckh);
  }
}

template <typename S>
void correlate_grad_w(const Mat<S>& col, const Mat<S>& dout, int H, int W, int kw,
                      int pad_left, Mat<S>& dweight, Vec<S>& dbias) {
  const int ckh = int(col.cols());
  for (int kc = 0; kc < kw; ++kc) {
    int dc = kc - pad_left;
    int c0 = std::max(0, -dc);
    int c1 = std::min(W, W - dc);
    if (c1 <= c0) continue;
    int n = (c1 - c0) * H;
    dweight.middleRows(kc * ckh, ckh).noalias() +=
        col.middleRows((c0 + dc) * H, n).transpose() * dout.middleRows(c0 * H, n);
  }
  dbias.noalias() += dout.colwise().sum().transpose();
}

// Gradient w.r.t. the input of a correlation equals a correlation of the
// output gradient with the channel-transposed, spatially flipped kernel and
// complementary padding.
template <typename S>
Mat<S> transpose_flip(const Mat<S>& weight, int in_channels, int out_channels, int kh, int kw) {
  Mat<S> back(kh * out_channels * kw, in_channels);
  for (int kc = 0; kc < kw; ++kc)
    for (int oc = 0; oc < out_channels; ++oc)
      for (int kr = 0; kr < kh; ++kr)
        for (int ic = 0; ic < in_channels; ++ic)
          back((kc * out_channels + oc) * kh + kr, ic) =
              weight(((kw - 1 - kc) * in_channels + ic) * kh + (kh - 1 - kr), oc);
  return back;
}

template <typename S>
struct BnCache {
  Mat<S> xhat;
  Vec<S> invstd;
  Vec<S> mean, var;  // batch statistics
};

template <typename S>
void batchnorm_forward_train(const Mat<S>& x, const Vec<S>& gamma, const Vec<S>& beta, S eps,
                             Mat<S>& y, BnCache<S>& cache) {
  const auto m = S(x.rows());
  const int channels = int(x.cols());
  cache.mean.resize(channels);
  cache.var.resize(channels);
  cache.invstd.resize(channels);
  cache.xhat.resize(x.rows(), channels);
  y.resize(x.rows(), channels);
  for (int c = 0; c < channels; ++c) {
    S mu = x.col(c).mean();
    S var = (x.col(c).array() - mu).square().sum() / m;
    S invstd = S(1) / std::sqrt(var + eps);
    cache.mean(c) = mu;
    cache.var(c) = var;
    cache.invstd(c) = invstd;
    cache.xhat.col(c) = (x.col(c).array() - mu) * invstd;
    y.col(c) = cache.xhat.col(c).array() * gamma(c) + beta(c);
  }
}

template <typename S>
void batchnorm_forward_eval(const Mat<S>& x, const Vec<S>& gamma, const Vec<S>& beta,
                            const Vec<S>& mean, const Vec<S>& var, S eps, Mat<S>& y) {
  y.resize(x.rows(), x.cols());
  for (int c = 0; c < x.cols(); ++c) {
    S invstd = S(1) / std::sqrt(var(c) + eps);
    y.col(c) = (x.col(c).array() - mean(c)) * (gamma(c) * invstd) + beta(c);
  }
}

template <typename S>
void batchnorm_backward(const Mat<S>& dy, const BnCache<S>& cache, const Vec<S>& gamma,
                        Mat<S>& dx, Vec<S>& dgamma, Vec<S>& dbeta) {
  const auto m = S(dy.rows());
  dx.resize(dy.rows(), dy.cols());
  for (int c = 0; c < dy.cols(); ++c) {
    S dg = (dy.col(c).array() * cache.xhat.col(c).array()).sum();
    S db = dy.col(c).sum();
    dgamma(c) += dg;
    dbeta(c) += db;
    dx.col(c) = (gamma(c) * cache.invstd(c)) *
                (dy.col(c).array() - db / m - cache.xhat.col(c).array() * (dg / m));
  }
}

template <typename S>
void dropout_mask(Mat<S>& mask, Eigen::Index rows, Eigen::Index cols, double p,
                  std::mt19937_64& rng) {
  mask.resize(rows, cols);
  const S keep_inv = S(1.0 / (1.0 - p));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) mask(r, c) = unit(rng) >= p ? keep_inv : S(0);
}

// Everything the backward pass needs from one batched forward pass.
template <typename S>
struct ForwardCache {
  Mat<S> x;             // (batch*pixels) x 1
  Mat<S> z1, z2;        // convolution outputs
  BnCache<S> bn1, bn2;
  Mat<S> relu1, relu2;  // post-ReLU activations
  Mat<S> mask1, mask2;  // dropout masks (empty in eval mode / p = 0)
  Mat<S> d1, d2;        // layer inputs after dropout
  Vec<S> y;             // sigmoid output
};

template <typename S>
void forward_stacked(const ModelParams<S>& params, const Mat<S>& x, Mode mode, double dropout_p,
                     std::mt19937_64& rng, ForwardCache<S>& fc) {
  const NetShape& sh = params.shape;
  const int H = sh.rows, W = sh.cols;
  const int batch = int(x.rows()) / sh.pixels();
  const bool drop = mode == Mode::train && dropout_p > 0.0;

  fc.x = x;
  Mat<S> col;
  // conv1 per example (GEMM blocks must not cross window boundaries)
  fc.z1.resize(x.rows(), sh.channels);
  for (int e = 0; e < batch; ++e) {
    Mat<S> xe = x.middleRows(e * sh.pixels(), sh.pixels());
    im2col(xe, H, W, sh.kernel_rows, sh.pad_top(), col);
    Mat<S> out;
    correlate(col, params.t.conv1_w, params.t.conv1_b, H, W, sh.kernel_cols, sh.pad_left(), out);
    fc.z1.middleRows(e * sh.pixels(), sh.pixels()) = out;
  }

  Mat<S> a1;
  if (mode == Mode::train)
    batchnorm_forward_train(fc.z1, params.t.bn1_gamma, params.t.bn1_beta, params.bn_eps, a1,
                            fc.bn1);
  else
    batchnorm_forward_eval(fc.z1, params.t.bn1_gamma, params.t.bn1_beta, params.bn1_mean,
                           params.bn1_var, params.bn_eps, a1);
  fc.relu1 = a1.cwiseMax(S(0));
  if (drop) {
    dropout_mask(fc.mask1, fc.relu1.rows(), fc.relu1.cols(), dropout_p, rng);
    fc.d1 = fc.relu1.cwiseProduct(fc.mask1);
  } else {
    fc.d1 = fc.relu1;
  }

  fc.z2.resize(x.rows(), sh.channels);
  for (int e = 0; e < batch; ++e) {
    Mat<S> de = fc.d1.middleRows(e * sh.pixels(), sh.pixels());
    im2col(de, H, W, sh.kernel_rows, sh.pad_top(), col);
    Mat<S> out;
    correlate(col, params.t.conv2_w, params.t.conv2_b, H, W, sh.kernel_cols, sh.pad_left(), out);
    fc.z2.middleRows(e * sh.pixels(), sh.pixels()) = out;
  }

  Mat<S> a2;
  if (mode == Mode::train)
    batchnorm_forward_train(fc.z2, params.t.bn2_gamma, params.t.bn2_beta, params.bn_eps, a2,
                            fc.bn2);
  else
    batchnorm_forward_eval(fc.z2, params.t.bn2_gamma, params.t.bn2_beta, params.bn2_mean,
                           params.bn2_var, params.bn_eps, a2);
  fc.relu2 = a2.cwiseMax(S(0));
  if (drop) {
    dropout_mask(fc.mask2, fc.relu2.rows(), fc.relu2.cols(), dropout_p, rng);
    fc.d2 = fc.relu2.cwiseProduct(fc.mask2);
  } else {
    fc.d2 = fc.relu2;
  }

  Vec<S> z = fc.d2 * params.t.head_w;
  z.array() += params.t.head_b(0);
  fc.y = (S(1) / (S(1) + (-z.array()).exp())).matrix();
}

}  // namespace detail

/// Glorot-uniform initialized parameters; biases zero, batchnorm identity.
template <typename S>
ModelParams<S> init_params(const NetShape& shape, std::uint64_t seed) {
  ModelParams<S> p;
  p.shape = shape;
  std::mt19937_64 rng(seed);
  auto glorot = [&](Mat<S>& w, Eigen::Index rows, Eigen::Index cols, double fan_in,
                    double fan_out) {
    double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    w.resize(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = 0; r < rows; ++r) w(r, c) = S(dist(rng));
  };

  const int kk = shape.kernel_rows * shape.kernel_cols;
  const int ch = shape.channels;
  glorot(p.t.conv1_w, shape.kernel_cols * 1 * shape.kernel_rows, ch, kk, double(ch) * kk);
  glorot(p.t.conv2_w, shape.kernel_cols * ch * shape.kernel_rows, ch, double(ch) * kk,
         double(ch) * kk);
  Mat<S> head;
  glorot(head, ch, 1, ch, 1.0);
  p.t.head_w = head.col(0);
  p.t.conv1_b = Vec<S>::Zero(ch);
  p.t.conv2_b = Vec<S>::Zero(ch);
  p.t.head_b = Vec<S>::Zero(1);
  p.t.bn1_gamma = Vec<S>::Ones(ch);
  p.t.bn1_beta = Vec<S>::Zero(ch);
  p.t.bn2_gamma = Vec<S>::Ones(ch);
  p.t.bn2_beta = Vec<S>::Zero(ch);
  p.bn1_mean = Vec<S>::Zero(ch);
  p.bn1_var = Vec<S>::Ones(ch);
  p.bn2_mean = Vec<S>::Zero(ch);
  p.bn2_var = Vec<S>::Ones(ch);
  return p;
}

/// Runs the network on one window (rows x cols). Train mode normalizes with
/// the window's own statistics and applies inverted dropout; eval mode is
/// deterministic. Pure: running statistics are not updated.
template <typename S>
Mat<S> forward(const ModelParams<S>& params, const Mat<S>& window, Mode mode,
               std::mt19937_64& rng, double dropout_p = 0.3) {
  const NetShape& sh = params.shape;
  if (window.rows() != sh.rows || window.cols() != sh.cols)
    throw ArgumentError("forward: window shape mismatch");
  if (!window.allFinite()) throw NumericError("forward: non-finite input");
  params.t.for_each([](const char* name, const auto& t) {
    if (!t.allFinite()) throw NumericError(std::string("forward: non-finite parameter ") + name);
  });

  Mat<S> x = Eigen::Map<const Mat<S>>(window.data(), sh.pixels(), 1);
  detail::ForwardCache<S> fc;
  detail::forward_stacked(params, x, mode, dropout_p, rng, fc);
  return Eigen::Map<const Mat<S>>(fc.y.data(), sh.rows, sh.cols);
}

template <typename S>
Mat<S> forward_eval(const ModelParams<S>& params, const Mat<S>& window) {
  std::mt19937_64 rng(0);
  return forward(params, window, Mode::eval, rng, 0.0);
}

template <typename S>
struct BatchStats {
  Vec<S> bn1_mean, bn1_var, bn2_mean, bn2_var;
};

template <typename S>
struct LossGrad {
  S loss = S(0);
  ParamTensors<S> grads;
  BatchStats<S> stats;
};

/// Mean squared error over the batch plus L1 weight regularization, with
/// gradients for every learnable tensor by backpropagation. The rng drives
/// the dropout masks; pass a same-seeded generator to replay a pass.
template <typename S>
LossGrad<S> loss_and_grad(const ModelParams<S>& params,
                          const std::vector<std::pair<Mat<S>, Mat<S>>>& batch,
                          const TrainConfig& config, std::mt19937_64& rng) {
  if (batch.empty()) throw ArgumentError("loss_and_grad: empty batch");
  const NetShape& sh = params.shape;
  const int px = sh.pixels();
  const int n = int(batch.size());

  Mat<S> x(n * px, 1);
  Vec<S> target(n * px);
  for (int e = 0; e < n; ++e) {
    const auto& [in, tgt] = batch[e];
    if (in.rows() != sh.rows || in.cols() != sh.cols || tgt.rows() != sh.rows ||
        tgt.cols() != sh.cols)
      throw ArgumentError("loss_and_grad: window shape mismatch");
    x.col(0).segment(e * px, px) = Eigen::Map<const Vec<S>>(in.data(), px);
    target.segment(e * px, px) = Eigen::Map<const Vec<S>>(tgt.data(), px);
  }

  detail::ForwardCache<S> fc;
  detail::forward_stacked(params, x, Mode::train, config.dropout_p, rng, fc);

  const S m = S(n) * S(px);
  LossGrad<S> out;
  Vec<S> diff = fc.y - target;
  out.loss = diff.squaredNorm() / m;

  out.grads = params.t;  // adopt shapes
  out.grads.set_zero();

  const S l1 = S(config.l1_coeff);
  if (l1 > S(0)) {
    out.loss += l1 * (params.t.conv1_w.template lpNorm<1>() +
                      params.t.conv2_w.template lpNorm<1>() +
                      params.t.head_w.template lpNorm<1>());
  }

  // sigmoid + MSE
  Vec<S> dz =
      ((S(2) / m) * diff.array() * fc.y.array() * (S(1) - fc.y.array())).matrix();

  // 1x1 head
  out.grads.head_w.noalias() = fc.d2.transpose() * dz;
  out.grads.head_b(0) = dz.sum();
  Mat<S> dd2 = dz * params.t.head_w.transpose();

  // dropout2 + relu2
  if (fc.mask2.size() > 0) dd2 = dd2.cwiseProduct(fc.mask2);
  Mat<S> da2 = ((fc.relu2.array() > S(0)).template cast<S>() * dd2.array()).matrix();

  // bn2
  Mat<S> dz2;
  detail::batchnorm_backward(da2, fc.bn2, params.t.bn2_gamma, dz2, out.grads.bn2_gamma,
                             out.grads.bn2_beta);

  // conv2: weight grads and input grads, per example
  Mat<S> back2 = detail::transpose_flip(params.t.conv2_w, sh.channels, sh.channels,
                                        sh.kernel_rows, sh.kernel_cols);
  Mat<S> dd1(n * px, sh.channels);
  {
    Mat<S> col, dcol, din;
    Vec<S> zero_bias = Vec<S>::Zero(sh.channels);
    for (int e = 0; e < n; ++e) {
      Mat<S> de = fc.d1.middleRows(e * px, px);
      detail::im2col(de, sh.rows, sh.cols, sh.kernel_rows, sh.pad_top(), col);
      Mat<S> doute = dz2.middleRows(e * px, px);
      detail::correlate_grad_w(col, doute, sh.rows, sh.cols, sh.kernel_cols, sh.pad_left(),
                               out.grads.conv2_w, out.grads.conv2_b);
      detail::im2col(doute, sh.rows, sh.cols, sh.kernel_rows,
                     sh.kernel_rows - 1 - sh.pad_top(), dcol);
      detail::correlate(dcol, back2, zero_bias, sh.rows, sh.cols, sh.kernel_cols,
                        sh.kernel_cols - 1 - sh.pad_left(), din);
      dd1.middleRows(e * px, px) = din;
    }
  }

  // dropout1 + relu1
  if (fc.mask1.size() > 0) dd1 = dd1.cwiseProduct(fc.mask1);
  Mat<S> da1 = ((fc.relu1.array() > S(0)).template cast<S>() * dd1.array()).matrix();

  // bn1
  Mat<S> dz1;
  detail::batchnorm_backward(da1, fc.bn1, params.t.bn1_gamma, dz1, out.grads.bn1_gamma,
                             out.grads.bn1_beta);

  // conv1 weight grads (input gradient not needed)
  {
    Mat<S> col;
    for (int e = 0; e < n; ++e) {
      Mat<S> xe = fc.x.middleRows(e * px, px);
      detail::im2col(xe, sh.rows, sh.cols, sh.kernel_rows, sh.pad_top(), col);
      Mat<S> doute = dz1.middleRows(e * px, px);
      detail::correlate_grad_w(col, doute, sh.rows, sh.cols, sh.kernel_cols, sh.pad_left(),
                               out.grads.conv1_w, out.grads.conv1_b);
    }
  }

  if (l1 > S(0)) {
    auto add_sign = [&](const Mat<S>& w, Mat<S>& g) {
      g.array() += l1 * w.array().sign();
    };
    add_sign(params.t.conv1_w, out.grads.conv1_w);
    add_sign(params.t.conv2_w, out.grads.conv2_w);
    Vec<S> hs = params.t.head_w.array().sign().matrix() * l1;
    out.grads.head_w += hs;
  }

  out.stats.bn1_mean = fc.bn1.mean;
  out.stats.bn1_var = fc.bn1.var;
  out.stats.bn2_mean = fc.bn2.mean;
  out.stats.bn2_var = fc.bn2.var;
  return out;
}

template <typename S>
struct OptimizerState {
  ParamTensors<S> sq_grad;    // E[g^2]
  ParamTensors<S> sq_update;  // E[dx^2]
  S rho;
  S eps;
};

template <typename S>
OptimizerState<S> make_optimizer(const ModelParams<S>& params, S rho, S eps) {
  OptimizerState<S> st;
  st.sq_grad = params.t;
  st.sq_grad.set_zero();
  st.sq_update = params.t;
  st.sq_update.set_zero();
  st.rho = rho;
  st.eps = eps;
  return st;
}

namespace detail {

template <typename S, typename T>
void adadelta_tensor(T& param, T& eg, T& ed, const T& grad, S rho, S eps, S lr) {
  if (!grad.allFinite()) throw NumericError("adadelta_step: non-finite gradient");
  eg.array() = rho * eg.array() + (S(1) - rho) * grad.array().square();
  T delta =
      (-(ed.array() + eps).sqrt() / (eg.array() + eps).sqrt() * grad.array()).matrix();
  ed.array() = rho * ed.array() + (S(1) - rho) * delta.array().square();
  param.array() += lr * delta.array();
}

}  // namespace detail

/// One AdaDelta update over all learnable tensors, in place.
template <typename S>
void adadelta_step(OptimizerState<S>& state, ModelParams<S>& params,
                   const ParamTensors<S>& grads, S lr = S(1)) {
  auto step = [&](auto& p, auto& eg, auto& ed, const auto& g) {
    detail::adadelta_tensor(p, eg, ed, g, state.rho, state.eps, lr);
  };
  step(params.t.conv1_w, state.sq_grad.conv1_w, state.sq_update.conv1_w, grads.conv1_w);
  step(params.t.conv1_b, state.sq_grad.conv1_b, state.sq_update.conv1_b, grads.conv1_b);
  step(params.t.bn1_gamma, state.sq_grad.bn1_gamma, state.sq_update.bn1_gamma, grads.bn1_gamma);
  step(params.t.bn1_beta, state.sq_grad.bn1_beta, state.sq_update.bn1_beta, grads.bn1_beta);
  step(params.t.conv2_w, state.sq_grad.conv2_w, state.sq_update.conv2_w, grads.conv2_w);
  step(params.t.conv2_b, state.sq_grad.conv2_b, state.sq_update.conv2_b, grads.conv2_b);
  step(params.t.bn2_gamma, state.sq_grad.bn2_gamma, state.sq_update.bn2_gamma, grads.bn2_gamma);
  step(params.t.bn2_beta, state.sq_grad.bn2_beta, state.sq_update.bn2_beta, grads.bn2_beta);
  step(params.t.head_w, state.sq_grad.head_w, state.sq_update.head_w, grads.head_w);
  step(params.t.head_b, state.sq_grad.head_b, state.sq_update.head_b, grads.head_b);
}

/// One training example at piece granularity: the full binary roll and the
/// aligned melody-only roll.
template <typename S>
struct PiecePair {
  std::string name;
  Mat<S> input;
  Mat<S> target;
};

/// Adds floor(n/2) copies of randomly chosen pieces with the melody
/// transposed down two octaves or up one octave (uniform per copy).
/// Accompaniment pixels stay put; pixels shifted outside the pitch range
/// are dropped.
template <typename S>
std::vector<PiecePair<S>> augment(std::vector<PiecePair<S>> pieces, std::mt19937_64& rng) {
  const std::size_t extra = pieces.size() / 2;
  if (extra == 0) return pieces;
  std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1);
  std::uniform_int_distribution<int> dir(0, 1);
  for (std::size_t k = 0; k < extra; ++k) {
    const PiecePair<S>& src = pieces[pick(rng)];
    int shift = dir(rng) == 0 ? -24 : 12;

    const int rows = int(src.input.rows());
    Mat<S> accomp = (src.input.array() * (S(1) - src.target.array())).matrix();
    Mat<S> shifted = Mat<S>::Zero(rows, src.input.cols());
    int src_lo = std::max(0, -shift);
    int src_hi = std::min(rows, rows - shift);
    if (src_hi > src_lo)
      shifted.middleRows(src_lo + shift, src_hi - src_lo) =
          src.target.middleRows(src_lo, src_hi - src_lo);

    PiecePair<S> copy;
    copy.name = src.name + "+aug" + std::to_string(k);
    copy.target = shifted;
    copy.input = (accomp.array() + shifted.array() - accomp.array() * shifted.array()).matrix();
    pieces.push_back(std::move(copy));
  }
  return pieces;
}

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double elapsed_s = 0.0;
};

template <typename S>
struct TrainResult {
  ModelParams<S> params;  // parameters of the best validation epoch
  std::vector<EpochStats> history;
  int best_epoch = 0;
};

namespace detail {

template <typename S>
std::vector<std::pair<int, Mat<S>>> cut_piece(const Mat<S>& piece, int wcols, int stride) {
  std::vector<std::pair<int, Mat<S>>> windows;
  const int total = int(piece.cols());
  for (int start = 0; start < total; start += stride) {
    Mat<S> w = Mat<S>::Zero(piece.rows(), wcols);
    int n = std::min(wcols, total - start);
    w.leftCols(n) = piece.middleCols(start, n);
    windows.emplace_back(start, std::move(w));
  }
  return windows;
}

}  // namespace detail

/// Trains from scratch: piece-level train/validation split, 50% melody-
/// transposition augmentation of the training split, mini-batch AdaDelta,
/// early stopping on validation MSE. Fully deterministic for a given seed
/// (history timing aside).
inline void validate(const TrainConfig& config) {
  if (config.dropout_p < 0.0 || config.dropout_p >= 1.0)
    throw ArgumentError("train config: dropout_p must lie in [0, 1)");
  if (config.patience < 1) throw ArgumentError("train config: patience must be >= 1");
  if (config.batch_size < 1) throw ArgumentError("train config: batch_size must be >= 1");
  if (config.l1_coeff < 0.0) throw ArgumentError("train config: l1_coeff must be >= 0");
  if (config.max_epochs < 0) throw ArgumentError("train config: max_epochs must be >= 0");
}

template <typename S>
TrainResult<S> train(const std::vector<PiecePair<S>>& pieces, const TrainConfig& config,
                     const NetShape& shape = {}) {
  validate(config);
  if (pieces.size() < 2)
    throw ArgumentError("train: need at least 2 pieces for a train/validation split");

  std::mt19937_64 rng(config.seed);

  std::vector<std::size_t> order(pieces.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t val_count = std::size_t(std::llround(config.val_fraction * double(pieces.size())));
  val_count = std::clamp<std::size_t>(val_count, 1, pieces.size() - 1);

  std::vector<PiecePair<S>> train_pieces, val_pieces;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < order.size() - val_count ? train_pieces : val_pieces).push_back(pieces[order[i]]);
  }
  train_pieces = augment(std::move(train_pieces), rng);

  const int stride = std::max(1, shape.cols / 2);
  std::vector<std::pair<Mat<S>, Mat<S>>> train_windows, val_windows;
  auto collect = [&](const std::vector<PiecePair<S>>& ps,
                     std::vector<std::pair<Mat<S>, Mat<S>>>& out) {
    for (const PiecePair<S>& p : ps) {
      auto in_w = detail::cut_piece(p.input, shape.cols, stride);
      auto tgt_w = detail::cut_piece(p.target, shape.cols, stride);
      for (std::size_t i = 0; i < in_w.size(); ++i)
        out.emplace_back(std::move(in_w[i].second), std::move(tgt_w[i].second));
    }
  };
  collect(train_pieces, train_windows);
  collect(val_pieces, val_windows);

  ModelParams<S> params = init_params<S>(shape, rng());
  OptimizerState<S> opt = make_optimizer(params, S(config.rho), S(config.eps));

  TrainResult<S> result;
  result.params = params;
  double best_val = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;

  auto val_loss_of = [&](const ModelParams<S>& p) {
    if (val_windows.empty()) return 0.0;
    double se = 0.0;
    double count = 0.0;
    for (const auto& [in, tgt] : val_windows) {
      Mat<S> y = forward_eval(p, in);
      se += double((y - tgt).squaredNorm());
      count += double(tgt.size());
    }
    return se / count;
  };

  std::vector<std::size_t> widx(train_windows.size());
  for (std::size_t i = 0; i < widx.size(); ++i) widx[i] = i;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    std::shuffle(widx.begin(), widx.end(), rng);

    double loss_sum = 0.0;
    double seen = 0.0;
    for (std::size_t pos = 0; pos < widx.size(); pos += std::size_t(config.batch_size)) {
      std::vector<std::pair<Mat<S>, Mat<S>>> batch;
      for (std::size_t i = pos; i < std::min(widx.size(), pos + std::size_t(config.batch_size));
           ++i)
        batch.push_back(train_windows[widx[i]]);
      LossGrad<S> lg = loss_and_grad(params, batch, config, rng);
      if (!std::isfinite(double(lg.loss))) throw NumericError("train: non-finite loss");
      adadelta_step(opt, params, lg.grads, S(config.lr));

      const S mom = params.bn_momentum;
      params.bn1_mean = (S(1) - mom) * params.bn1_mean + mom * lg.stats.bn1_mean;
      params.bn1_var = (S(1) - mom) * params.bn1_var + mom * lg.stats.bn1_var;
      params.bn2_mean = (S(1) - mom) * params.bn2_mean + mom * lg.stats.bn2_mean;
      params.bn2_var = (S(1) - mom) * params.bn2_var + mom * lg.stats.bn2_var;

      loss_sum += double(lg.loss) * double(batch.size());
      seen += double(batch.size());
    }

    EpochStats es;
    es.epoch = epoch;
    es.train_loss = loss_sum / seen;
    es.val_loss = val_loss_of(params);
    es.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(es);

    if (es.val_loss < best_val) {
      best_val = es.val_loss;
      result.params = params;
      result.best_epoch = epoch;
      bad_epochs = 0;
    } else {
      ++bad_epochs;
    }
    if (bad_epochs >= config.patience) break;
  }
  return result;
}

/// History as JSON lines. elapsed_s is written as 0 when timing is off so
/// repeated runs with one seed produce byte-identical files.
std::string history_jsonl(const std::vector<EpochStats>& history, bool include_timing);

template <typename S>
struct Checkpoint {
  ModelParams<S> params;
  TrainConfig config;
};

/// Versioned binary container: named tensors with logical shapes, 64-bit
/// little-endian floats, plus the TrainConfig.
void save_checkpoint(const ModelParams<double>& params, const TrainConfig& config,
                     const std::string& path);
Checkpoint<double> load_checkpoint(const std::string& path);

template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& in) {
  ModelParams<To> out;
  out.shape = in.shape;
  out.bn_eps = To(in.bn_eps);
  out.bn_momentum = To(in.bn_momentum);
  out.bn1_mean = in.bn1_mean.template cast<To>();
  out.bn1_var = in.bn1_var.template cast<To>();
  out.bn2_mean = in.bn2_mean.template cast<To>();
  out.bn2_var = in.bn2_var.template cast<To>();
  out.t.conv1_w = in.t.conv1_w.template cast<To>();
  out.t.conv1_b = in.t.conv1_b.template cast<To>();
  out.t.bn1_gamma = in.t.bn1_gamma.template cast<To>();
  out.t.bn1_beta = in.t.bn1_beta.template cast<To>();
  out.t.conv2_w = in.t.conv2_w.template cast<To>();
  out.t.conv2_b = in.t.conv2_b.template cast<To>();
  out.t.bn2_gamma = in.t.bn2_gamma.template cast<To>();
  out.t.bn2_beta = in.t.bn2_beta.template cast<To>();
  out.t.head_w = in.t.head_w.template cast<To>();
  out.t.head_b = in.t.head_b.template cast<To>();
  return out;
}

}  // namespace melo

// astkit/nn.hpp

// Copyright 2026  astkit authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef ASTKIT_NN_HPP_
#define ASTKIT_NN_HPP_

#include <cmath>
#include <stdexcept>
#include <vector>

#include "astkit/common.hpp"

namespace astkit {
namespace nn {

// Output length of one stride-s convolution with same-style padding.
inline Eigen::Index strided_out_len(Eigen::Index t, int stride) {
  return (t + stride - 1) / stride;  // ceil(t / stride)
}

template <typename Scalar>
Vec<Scalar> sigmoid(const Vec<Scalar>& x) {
  return x.unaryExpr([](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)); });
}

template <typename Scalar>
Vec<Scalar> softmax(const Vec<Scalar>& z) {
  const Scalar m = z.maxCoeff();
  Vec<Scalar> e = (z.array() - m).exp();
  return e / e.sum();
}

template <typename Scalar>
Vec<Scalar> log_softmax(const Vec<Scalar>& z) {
  const Scalar m = z.maxCoeff();
  const Scalar lse = std::log((z.array() - m).exp().sum()) + m;
  return z.array() - lse;
}

// ---------------------------------------------------------------------------
// 1-D convolution over time, features as input channels.
// Weight layout: (C_out) x (C_in * K); pad (K-1)/2 zeros on both sides so the
// output length is ceil(T / stride).
// ---------------------------------------------------------------------------

template <typename Scalar>
struct Conv1dCache {
  Mat<Scalar> x_col;  // (C_in*K) x T_out
  Eigen::Index t_in = 0;
  Eigen::Index c_in = 0;
};

template <typename Scalar>
Mat<Scalar> conv1d_forward(const Mat<Scalar>& weight, const Vec<Scalar>& bias,
                           const Mat<Scalar>& x, int kernel, int stride,
                           Conv1dCache<Scalar>* cache = nullptr) {
  const Eigen::Index c_in = x.rows();
  const Eigen::Index t_in = x.cols();
  const int pad = (kernel - 1) / 2;
  const Eigen::Index t_out = (t_in + 2 * pad - kernel) / stride + 1;
  Mat<Scalar> x_col = Mat<Scalar>::Zero(c_in * kernel, t_out);
  for (Eigen::Index t = 0; t < t_out; ++t) {
    for (int k = 0; k < kernel; ++k) {
      const Eigen::Index src = t * stride + k - pad;
      if (src >= 0 && src < t_in) x_col.block(k * c_in, t, c_in, 1) = x.col(src);
    }
  }
  Mat<Scalar> y = weight * x_col;
  y.colwise() += bias;
  if (cache) {
    cache->x_col = std::move(x_col);
    cache->t_in = t_in;
    cache->c_in = c_in;
  }
  return y;
}

template <typename Scalar>
Mat<Scalar> conv1d_backward(const Mat<Scalar>& weight, const Conv1dCache<Scalar>& cache,
                            const Mat<Scalar>& dy, int kernel, int stride,
                            Mat<Scalar>& dweight, Vec<Scalar>& dbias) {
  dweight.noalias() += dy * cache.x_col.transpose();
  dbias += dy.rowwise().sum();
  const Mat<Scalar> dx_col = weight.transpose() * dy;
  const int pad = (kernel - 1) / 2;
  Mat<Scalar> dx = Mat<Scalar>::Zero(cache.c_in, cache.t_in);
  for (Eigen::Index t = 0; t < dy.cols(); ++t) {
    for (int k = 0; k < kernel; ++k) {
      const Eigen::Index src = t * stride + k - pad;
      if (src >= 0 && src < cache.t_in)
        dx.col(src) += dx_col.block(k * cache.c_in, t, cache.c_in, 1);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Batch normalization per channel over the time axis of one sequence.
// Training mode normalizes with the sequence's own statistics and folds them
// into the running buffers; inference mode uses the accumulated statistics.
// ---------------------------------------------------------------------------

constexpr double kBatchNormEps = 1e-5;
constexpr double kBatchNormMomentum = 0.1;

template <typename Scalar>
struct BatchNormCache {
  Mat<Scalar> xhat;
  Vec<Scalar> inv_std;
};

template <typename Scalar>
Mat<Scalar> batchnorm_forward_train(const Vec<Scalar>& gamma, const Vec<Scalar>& beta,
                                    const Mat<Scalar>& x, Vec<Scalar>* running_mean,
                                    Vec<Scalar>* running_var, BatchNormCache<Scalar>* cache) {
  const auto t = static_cast<Scalar>(x.cols());
  const Vec<Scalar> mean = x.rowwise().mean();
  const Vec<Scalar> var =
      (x.colwise() - mean).array().square().rowwise().sum().matrix() / t;
  Vec<Scalar> inv_std =
      (var.array() + Scalar(kBatchNormEps)).sqrt().inverse().matrix();
  Mat<Scalar> xhat = (x.colwise() - mean).array().colwise() * inv_std.array();
  Mat<Scalar> y = (xhat.array().colwise() * gamma.array()).matrix();
  y.colwise() += beta;
  if (running_mean) {
    const auto m = Scalar(kBatchNormMomentum);
    *running_mean = (Scalar(1) - m) * (*running_mean) + m * mean;
    *running_var = (Scalar(1) - m) * (*running_var) + m * var;
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <typename Scalar>
Mat<Scalar> batchnorm_forward_infer(const Vec<Scalar>& gamma, const Vec<Scalar>& beta,
                                    const Mat<Scalar>& x, const Vec<Scalar>& running_mean,
                                    const Vec<Scalar>& running_var) {
  const Vec<Scalar> inv_std =
      (running_var.array() + Scalar(kBatchNormEps)).sqrt().inverse().matrix();
  Mat<Scalar> y = ((x.colwise() - running_mean).array().colwise() *
                   (gamma.array() * inv_std.array()))
                      .matrix();
  y.colwise() += beta;
  return y;
}

template <typename Scalar>
Mat<Scalar> batchnorm_backward(const Vec<Scalar>& gamma, const BatchNormCache<Scalar>& cache,
                               const Mat<Scalar>& dy, Vec<Scalar>& dgamma, Vec<Scalar>& dbeta) {
  const auto t = static_cast<Scalar>(dy.cols());
  const Vec<Scalar> sum_dy = dy.rowwise().sum();
  const Vec<Scalar> sum_dy_xhat = (dy.array() * cache.xhat.array()).rowwise().sum().matrix();
  dgamma += sum_dy_xhat;
  dbeta += sum_dy;
  // dx = gamma * inv_std / T * (T*dy - sum(dy) - xhat * sum(dy*xhat))
  Mat<Scalar> dx = t * dy.array();
  dx.colwise() -= sum_dy;
  dx.array() -= cache.xhat.array().colwise() * sum_dy_xhat.array();
  dx.array().colwise() *= (gamma.array() * cache.inv_std.array() / t);
  return dx;
}

// ---------------------------------------------------------------------------
// LSTM. Gate order in the stacked weight matrices is [input; forget; cell;
// output], so wx is (4H x D), wh is (4H x H), bias is (4H).
// ---------------------------------------------------------------------------

template <typename Scalar>
struct LstmStepCache {
  Vec<Scalar> x, h_prev, c_prev;
  Vec<Scalar> i, f, g, o, c, tanh_c;
};

template <typename Scalar>
void lstm_step_forward(const Mat<Scalar>& wx, const Mat<Scalar>& wh, const Vec<Scalar>& bias,
                       const Vec<Scalar>& x, const Vec<Scalar>& h_prev, const Vec<Scalar>& c_prev,
                       Vec<Scalar>& h_out, Vec<Scalar>& c_out,
                       LstmStepCache<Scalar>* cache = nullptr) {
  const Eigen::Index hidden = wh.cols();
  Vec<Scalar> z = wx * x + wh * h_prev + bias;
  const Vec<Scalar> i = sigmoid<Scalar>(z.segment(0, hidden));
  const Vec<Scalar> f = sigmoid<Scalar>(z.segment(hidden, hidden));
  const Vec<Scalar> g = z.segment(2 * hidden, hidden).array().tanh().matrix();
  const Vec<Scalar> o = sigmoid<Scalar>(z.segment(3 * hidden, hidden));
  c_out = f.cwiseProduct(c_prev) + i.cwiseProduct(g);
  const Vec<Scalar> tanh_c = c_out.array().tanh().matrix();
  h_out = o.cwiseProduct(tanh_c);
  if (cache) {
    cache->x = x;
    cache->h_prev = h_prev;
    cache->c_prev = c_prev;
    cache->i = i;
    cache->f = f;
    cache->g = g;
    cache->o = o;
    cache->c = c_out;
    cache->tanh_c = tanh_c;
  }
}

// Accumulates parameter gradients and returns (dx, dh_prev, dc_prev) given
// upstream dh and dc for this step.
template <typename Scalar>
void lstm_step_backward(const Mat<Scalar>& wx, const Mat<Scalar>& wh,
                        const LstmStepCache<Scalar>& cache, const Vec<Scalar>& dh,
                        const Vec<Scalar>& dc_in, Mat<Scalar>& dwx, Mat<Scalar>& dwh,
                        Vec<Scalar>& dbias, Vec<Scalar>& dx, Vec<Scalar>& dh_prev,
                        Vec<Scalar>& dc_prev) {
  const Eigen::Index hidden = wh.cols();
  const Vec<Scalar> do_ = dh.cwiseProduct(cache.tanh_c);
  Vec<Scalar> dc = dc_in +
                   dh.cwiseProduct(cache.o)
                       .cwiseProduct((Scalar(1) - cache.tanh_c.array().square()).matrix());
  const Vec<Scalar> di = dc.cwiseProduct(cache.g);
  const Vec<Scalar> df = dc.cwiseProduct(cache.c_prev);
  const Vec<Scalar> dg = dc.cwiseProduct(cache.i);
  dc_prev = dc.cwiseProduct(cache.f);

  Vec<Scalar> dz(4 * hidden);
  dz.segment(0, hidden) =
      di.array() * cache.i.array() * (Scalar(1) - cache.i.array());
  dz.segment(hidden, hidden) =
      df.array() * cache.f.array() * (Scalar(1) - cache.f.array());
  dz.segment(2 * hidden, hidden) = dg.array() * (Scalar(1) - cache.g.array().square());
  dz.segment(3 * hidden, hidden) =
      do_.array() * cache.o.array() * (Scalar(1) - cache.o.array());

  dwx.noalias() += dz * cache.x.transpose();
  dwh.noalias() += dz * cache.h_prev.transpose();
  dbias += dz;
  dx = wx.transpose() * dz;
  dh_prev = wh.transpose() * dz;
}

template <typename Scalar>
struct LstmSequenceCache {
  std::vector<LstmStepCache<Scalar>> steps;
};

// Runs the cell over all columns of x (zero initial state); returns H x T.
template <typename Scalar>
Mat<Scalar> lstm_forward(const Mat<Scalar>& wx, const Mat<Scalar>& wh, const Vec<Scalar>& bias,
                         const Mat<Scalar>& x, LstmSequenceCache<Scalar>* cache = nullptr) {
  const Eigen::Index hidden = wh.cols();
  const Eigen::Index t_len = x.cols();
  Mat<Scalar> out(hidden, t_len);
  Vec<Scalar> h = Vec<Scalar>::Zero(hidden), c = Vec<Scalar>::Zero(hidden);
  if (cache) cache->steps.resize(t_len);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    Vec<Scalar> h_next(hidden), c_next(hidden);
    lstm_step_forward<Scalar>(wx, wh, bias, x.col(t), h, c, h_next, c_next,
                              cache ? &cache->steps[t] : nullptr);
    h = std::move(h_next);
    c = std::move(c_next);
    out.col(t) = h;
  }
  return out;
}

template <typename Scalar>
Mat<Scalar> lstm_backward(const Mat<Scalar>& wx, const Mat<Scalar>& wh,
                          const LstmSequenceCache<Scalar>& cache, const Mat<Scalar>& dout,
                          Mat<Scalar>& dwx, Mat<Scalar>& dwh, Vec<Scalar>& dbias) {
  const Eigen::Index hidden = wh.cols();
  const Eigen::Index t_len = dout.cols();
  const Eigen::Index in_dim = wx.cols();
  Mat<Scalar> dx(in_dim, t_len);
  Vec<Scalar> dh_carry = Vec<Scalar>::Zero(hidden), dc_carry = Vec<Scalar>::Zero(hidden);
  for (Eigen::Index t = t_len - 1; t >= 0; --t) {
    const Vec<Scalar> dh = dout.col(t) + dh_carry;
    Vec<Scalar> dx_t(in_dim), dh_prev(hidden), dc_prev(hidden);
    lstm_step_backward<Scalar>(wx, wh, cache.steps[t], dh, dc_carry, dwx, dwh, dbias, dx_t,
                               dh_prev, dc_prev);
    dx.col(t) = dx_t;
    dh_carry = std::move(dh_prev);
    dc_carry = std::move(dc_prev);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Inverted dropout.
// ---------------------------------------------------------------------------

template <typename Scalar>
Mat<Scalar> dropout_mask(Eigen::Index rows, Eigen::Index cols, Scalar rate, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Scalar keep = Scalar(1) - rate;
  Mat<Scalar> mask(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r)
      mask(r, c) = unif(rng) < static_cast<double>(keep) ? Scalar(1) / keep : Scalar(0);
  return mask;
}

}  // namespace nn
}  // namespace astkit

#endif  // ASTKIT_NN_HPP_

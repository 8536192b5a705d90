// astkit/model.hpp

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

#ifndef ASTKIT_MODEL_HPP_
#define ASTKIT_MODEL_HPP_

#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "astkit/bpe.hpp"
#include "astkit/common.hpp"
#include "astkit/nn.hpp"

namespace astkit {
namespace model {

// Strided CNN front end feeding a bidirectional recurrent stack.
struct EncoderConfig {
  int n_cnn_layers = 2;
  int cnn_stride_time = 2;
  int cnn_channels = 128;
  int cnn_kernel_time = 3;
  int n_rnn_layers = 3;
  int rnn_hidden = 512;
  bool bidirectional = true;
  int input_dim = 13;

  int state_dim() const { return bidirectional ? 2 * rnn_hidden : rnn_hidden; }

  Eigen::Index output_length(Eigen::Index t) const {
    for (int l = 0; l < n_cnn_layers; ++l) t = nn::strided_out_len(t, cnn_stride_time);
    return t;
  }
};

// Embedding + recurrent stack + bilinear attention over encoder states.
struct DecoderConfig {
  int embed_dim = 128;
  int n_rnn_layers = 3;
  int rnn_hidden = 256;
  std::string attention_type = "bilinear";
  int vocab_size = 0;
};

// Named, shaped parameter arrays. Vector-shaped parameters are stored as
// single-column matrices. Names under "encoder." form a self-contained
// namespace; ".running_" entries are batch-norm buffers, not trainables.
template <typename Scalar>
class ParameterSet {
 public:
  using Map = std::map<std::string, Mat<Scalar>>;

  Mat<Scalar>& at(const std::string& name) {
    auto it = values_.find(name);
    if (it == values_.end()) throw std::invalid_argument("ParameterSet: no parameter " + name);
    return it->second;
  }
  const Mat<Scalar>& at(const std::string& name) const {
    auto it = values_.find(name);
    if (it == values_.end()) throw std::invalid_argument("ParameterSet: no parameter " + name);
    return it->second;
  }

  void insert(const std::string& name, Mat<Scalar> value) {
    if (values_.count(name))
      throw std::invalid_argument("ParameterSet: duplicate parameter " + name);
    values_[name] = std::move(value);
  }

  bool has(const std::string& name) const { return values_.count(name) > 0; }

  static bool is_buffer(const std::string& name) {
    return name.find(".running_") != std::string::npos;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(values_.size());
    for (const auto& [k, v] : values_) out.push_back(k);
    return out;
  }

  Map& values() { return values_; }
  const Map& values() const { return values_; }

  void validate_finite() const {
    for (const auto& [k, v] : values_)
      if (!v.allFinite()) throw std::runtime_error("ParameterSet: non-finite values in " + k);
  }

  template <typename Other>
  ParameterSet<Other> cast() const {
    ParameterSet<Other> out;
    for (const auto& [k, v] : values_) out.insert(k, v.template cast<Other>());
    return out;
  }

 private:
  Map values_;
};

namespace detail {

template <typename Scalar>
Mat<Scalar> uniform_init(Eigen::Index rows, Eigen::Index cols, double scale, Rng& rng) {
  std::uniform_real_distribution<double> unif(-scale, scale);
  Mat<Scalar> m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = static_cast<Scalar>(unif(rng));
  return m;
}

template <typename Scalar>
void init_lstm(ParameterSet<Scalar>& p, const std::string& prefix, int in_dim, int hidden,
               Rng& rng) {
  p.insert(prefix + ".wx", uniform_init<Scalar>(4 * hidden, in_dim, 1.0 / std::sqrt(in_dim), rng));
  p.insert(prefix + ".wh", uniform_init<Scalar>(4 * hidden, hidden, 1.0 / std::sqrt(hidden), rng));
  Mat<Scalar> b = Mat<Scalar>::Zero(4 * hidden, 1);
  b.block(hidden, 0, hidden, 1).setOnes();  // forget-gate bias
  p.insert(prefix + ".bias", std::move(b));
}

}  // namespace detail

template <typename Scalar>
ParameterSet<Scalar> init_parameters(const EncoderConfig& enc, const DecoderConfig& dec,
                                     std::uint64_t seed) {
  check_arg(dec.vocab_size >= text::Vocabulary::kNumReserved + 1,
            "init_parameters: vocab_size must cover reserved ids plus one real token");
  check_arg(enc.cnn_kernel_time % 2 == 1, "init_parameters: cnn kernel must be odd");
  Rng rng(split_seed(seed, "init_parameters"));
  ParameterSet<Scalar> p;

  int in_ch = enc.input_dim;
  for (int l = 1; l <= enc.n_cnn_layers; ++l) {
    const std::string prefix = "encoder.cnn" + std::to_string(l);
    const int fan_in = in_ch * enc.cnn_kernel_time;
    p.insert(prefix + ".weight",
             detail::uniform_init<Scalar>(enc.cnn_channels, fan_in, 1.0 / std::sqrt(fan_in), rng));
    p.insert(prefix + ".bias", Mat<Scalar>::Zero(enc.cnn_channels, 1));
    p.insert(prefix + ".bn.gamma", Mat<Scalar>::Ones(enc.cnn_channels, 1));
    p.insert(prefix + ".bn.beta", Mat<Scalar>::Zero(enc.cnn_channels, 1));
    p.insert(prefix + ".bn.running_mean", Mat<Scalar>::Zero(enc.cnn_channels, 1));
    p.insert(prefix + ".bn.running_var", Mat<Scalar>::Ones(enc.cnn_channels, 1));
    in_ch = enc.cnn_channels;
  }
  int rnn_in = in_ch;
  for (int l = 1; l <= enc.n_rnn_layers; ++l) {
    const std::string prefix = "encoder.rnn" + std::to_string(l);
    detail::init_lstm(p, prefix + ".fwd", rnn_in, enc.rnn_hidden, rng);
    if (enc.bidirectional) detail::init_lstm(p, prefix + ".bwd", rnn_in, enc.rnn_hidden, rng);
    rnn_in = enc.state_dim();
  }

  p.insert("decoder.embed.weight",
           detail::uniform_init<Scalar>(dec.embed_dim, dec.vocab_size, 0.1, rng));
  int dec_in = dec.embed_dim;
  for (int l = 1; l <= dec.n_rnn_layers; ++l) {
    detail::init_lstm(p, "decoder.rnn" + std::to_string(l), dec_in, dec.rnn_hidden, rng);
    dec_in = dec.rnn_hidden;
  }
  p.insert("decoder.attn.weight",
           detail::uniform_init<Scalar>(dec.rnn_hidden, enc.state_dim(),
                                        1.0 / std::sqrt(enc.state_dim()), rng));
  const int out_in = dec.rnn_hidden + enc.state_dim();
  p.insert("decoder.out.weight",
           detail::uniform_init<Scalar>(dec.vocab_size, out_in, 1.0 / std::sqrt(out_in), rng));
  p.insert("decoder.out.bias", Mat<Scalar>::Zero(dec.vocab_size, 1));
  return p;
}

template <typename Scalar>
struct EncoderStates {
  Mat<Scalar> states;  // state_dim x T'
  Eigen::Index input_length = 0;
  // (tag, dim x T_tag) pairs in probe order, filled when requested
  std::vector<std::pair<std::string, Mat<Scalar>>> intermediates;

  Eigen::Index length() const { return states.cols(); }
};

inline std::vector<std::string> probe_tags(const EncoderConfig& cfg) {
  std::vector<std::string> tags{"input"};
  for (int l = 1; l <= cfg.n_cnn_layers; ++l) tags.push_back("cnn" + std::to_string(l));
  for (int l = 1; l <= cfg.n_rnn_layers; ++l) tags.push_back("rnn" + std::to_string(l));
  return tags;
}

// Options for a training-mode pass. `rng` must be set when dropout > 0.
template <typename Scalar>
struct TrainOptions {
  bool training = true;
  Scalar dropout = 0;
  Rng* rng = nullptr;
  bool update_running_stats = false;
};

namespace detail {

template <typename Scalar>
struct EncoderTape {
  std::vector<Mat<Scalar>> cnn_inputs;        // input to each conv layer
  std::vector<nn::Conv1dCache<Scalar>> conv;  // per cnn layer
  std::vector<Mat<Scalar>> pre_relu;          // conv output before relu
  std::vector<nn::BatchNormCache<Scalar>> bn;
  std::vector<nn::LstmSequenceCache<Scalar>> rnn_fwd, rnn_bwd;
  std::vector<Mat<Scalar>> rnn_inputs;      // input to each rnn layer (post dropout of below)
  std::vector<Mat<Scalar>> dropout_masks;   // per rnn layer output
};

template <typename Scalar>
Mat<Scalar> reverse_cols(const Mat<Scalar>& m) {
  Mat<Scalar> out(m.rows(), m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c) out.col(c) = m.col(m.cols() - 1 - c);
  return out;
}

// Shared encoder pass. In training mode uses per-sequence batch-norm
// statistics (optionally folding them into the running buffers via
// mutable_params) and applies dropout to recurrent outputs.
template <typename Scalar>
EncoderStates<Scalar> encode_impl(const Mat<Scalar>& feats, const ParameterSet<Scalar>& params,
                                  const EncoderConfig& cfg, bool keep_intermediate,
                                  const TrainOptions<Scalar>& opts,
                                  ParameterSet<Scalar>* mutable_params,
                                  EncoderTape<Scalar>* tape) {
  if (feats.rows() != cfg.input_dim) {
    std::ostringstream msg;
    msg << "encode: feature dim mismatch: expected " << cfg.input_dim << ", got " << feats.rows();
    throw std::invalid_argument(msg.str());
  }
  check_arg(feats.cols() >= 1, "encode: empty feature sequence");

  EncoderStates<Scalar> enc;
  enc.input_length = feats.cols();
  if (keep_intermediate) enc.intermediates.emplace_back("input", feats);

  Mat<Scalar> x = feats;
  for (int l = 1; l <= cfg.n_cnn_layers; ++l) {
    const std::string prefix = "encoder.cnn" + std::to_string(l);
    const Mat<Scalar>& w = params.at(prefix + ".weight");
    const Vec<Scalar> b = params.at(prefix + ".bias").col(0);
    const Vec<Scalar> gamma = params.at(prefix + ".bn.gamma").col(0);
    const Vec<Scalar> beta = params.at(prefix + ".bn.beta").col(0);
    if (tape) tape->cnn_inputs.push_back(x);
    nn::Conv1dCache<Scalar> conv_cache;
    Mat<Scalar> y = nn::conv1d_forward<Scalar>(w, b, x, cfg.cnn_kernel_time, cfg.cnn_stride_time,
                                               tape ? &conv_cache : nullptr);
    if (tape) {
      tape->conv.push_back(std::move(conv_cache));
      tape->pre_relu.push_back(y);
    }
    y = y.cwiseMax(Scalar(0));
    if (opts.training) {
      Vec<Scalar>* rmean = nullptr;
      Vec<Scalar>* rvar = nullptr;
      Vec<Scalar> rmean_val, rvar_val;
      if (opts.update_running_stats && mutable_params) {
        rmean_val = mutable_params->at(prefix + ".bn.running_mean").col(0);
        rvar_val = mutable_params->at(prefix + ".bn.running_var").col(0);
        rmean = &rmean_val;
        rvar = &rvar_val;
      }
      nn::BatchNormCache<Scalar> bn_cache;
      x = nn::batchnorm_forward_train<Scalar>(gamma, beta, y, rmean, rvar,
                                              tape ? &bn_cache : nullptr);
      if (tape) tape->bn.push_back(std::move(bn_cache));
      if (rmean) {
        mutable_params->at(prefix + ".bn.running_mean").col(0) = rmean_val;
        mutable_params->at(prefix + ".bn.running_var").col(0) = rvar_val;
      }
    } else {
      x = nn::batchnorm_forward_infer<Scalar>(gamma, beta, y,
                                              params.at(prefix + ".bn.running_mean").col(0),
                                              params.at(prefix + ".bn.running_var").col(0));
    }
    if (keep_intermediate) enc.intermediates.emplace_back("cnn" + std::to_string(l), x);
  }

  for (int l = 1; l <= cfg.n_rnn_layers; ++l) {
    const std::string prefix = "encoder.rnn" + std::to_string(l);
    if (tape) tape->rnn_inputs.push_back(x);
    nn::LstmSequenceCache<Scalar> fwd_cache, bwd_cache;
    Mat<Scalar> fwd = nn::lstm_forward<Scalar>(
        params.at(prefix + ".fwd.wx"), params.at(prefix + ".fwd.wh"),
        params.at(prefix + ".fwd.bias").col(0), x, tape ? &fwd_cache : nullptr);
    Mat<Scalar> out;
    if (cfg.bidirectional) {
      const Mat<Scalar> rev = reverse_cols(x);
      Mat<Scalar> bwd = nn::lstm_forward<Scalar>(
          params.at(prefix + ".bwd.wx"), params.at(prefix + ".bwd.wh"),
          params.at(prefix + ".bwd.bias").col(0), rev, tape ? &bwd_cache : nullptr);
      out.resize(2 * cfg.rnn_hidden, x.cols());
      out.topRows(cfg.rnn_hidden) = fwd;
      out.bottomRows(cfg.rnn_hidden) = reverse_cols(bwd);
    } else {
      out = std::move(fwd);
    }
    if (tape) {
      tape->rnn_fwd.push_back(std::move(fwd_cache));
      tape->rnn_bwd.push_back(std::move(bwd_cache));
    }
    if (opts.training && opts.dropout > Scalar(0)) {
      check_arg(opts.rng != nullptr, "encode: dropout requires an rng");
      Mat<Scalar> mask = nn::dropout_mask<Scalar>(out.rows(), out.cols(), opts.dropout, *opts.rng);
      out = out.cwiseProduct(mask);
      if (tape) tape->dropout_masks.push_back(std::move(mask));
    } else if (tape) {
      tape->dropout_masks.push_back(Mat<Scalar>::Ones(out.rows(), out.cols()));
    }
    if (keep_intermediate) enc.intermediates.emplace_back("rnn" + std::to_string(l), out);
    x = std::move(out);
  }
  enc.states = std::move(x);
  return enc;
}

// Backward through the encoder; returns nothing useful below the input.
template <typename Scalar>
void encoder_backward(const ParameterSet<Scalar>& params, const EncoderConfig& cfg,
                      const EncoderTape<Scalar>& tape, Mat<Scalar> dstates,
                      ParameterSet<Scalar>& grads) {
  for (int l = cfg.n_rnn_layers; l >= 1; --l) {
    const std::string prefix = "encoder.rnn" + std::to_string(l);
    dstates = dstates.cwiseProduct(tape.dropout_masks[l - 1]);
    const Mat<Scalar>& in = tape.rnn_inputs[l - 1];
    Mat<Scalar> dx = Mat<Scalar>::Zero(in.rows(), in.cols());
    {
      Vec<Scalar> dbias = grads.at(prefix + ".fwd.bias").col(0);
      dx += nn::lstm_backward<Scalar>(params.at(prefix + ".fwd.wx"), params.at(prefix + ".fwd.wh"),
                                      tape.rnn_fwd[l - 1], dstates.topRows(cfg.rnn_hidden),
                                      grads.at(prefix + ".fwd.wx"), grads.at(prefix + ".fwd.wh"),
                                      dbias);
      grads.at(prefix + ".fwd.bias").col(0) = dbias;
    }
    if (cfg.bidirectional) {
      Vec<Scalar> dbias = grads.at(prefix + ".bwd.bias").col(0);
      const Mat<Scalar> dbwd = reverse_cols<Scalar>(dstates.bottomRows(cfg.rnn_hidden));
      Mat<Scalar> dx_rev = nn::lstm_backward<Scalar>(
          params.at(prefix + ".bwd.wx"), params.at(prefix + ".bwd.wh"), tape.rnn_bwd[l - 1], dbwd,
          grads.at(prefix + ".bwd.wx"), grads.at(prefix + ".bwd.wh"), dbias);
      grads.at(prefix + ".bwd.bias").col(0) = dbias;
      dx += reverse_cols(dx_rev);
    }
    dstates = std::move(dx);
  }
  for (int l = cfg.n_cnn_layers; l >= 1; --l) {
    const std::string prefix = "encoder.cnn" + std::to_string(l);
    Vec<Scalar> dgamma = grads.at(prefix + ".bn.gamma").col(0);
    Vec<Scalar> dbeta = grads.at(prefix + ".bn.beta").col(0);
    Mat<Scalar> dy = nn::batchnorm_backward<Scalar>(params.at(prefix + ".bn.gamma").col(0),
                                                    tape.bn[l - 1], dstates, dgamma, dbeta);
    grads.at(prefix + ".bn.gamma").col(0) = dgamma;
    grads.at(prefix + ".bn.beta").col(0) = dbeta;
    dy = dy.cwiseProduct(
        (tape.pre_relu[l - 1].array() > Scalar(0)).template cast<Scalar>().matrix());
    Vec<Scalar> dbias = grads.at(prefix + ".bias").col(0);
    dstates = nn::conv1d_backward<Scalar>(params.at(prefix + ".weight"), tape.conv[l - 1], dy,
                                          cfg.cnn_kernel_time, cfg.cnn_stride_time,
                                          grads.at(prefix + ".weight"), dbias);
    grads.at(prefix + ".bias").col(0) = dbias;
  }
}

}  // namespace detail

// Inference-mode encoder: accumulated batch-norm statistics, no dropout.
// Deterministic and batch-size invariant.
template <typename Scalar>
EncoderStates<Scalar> encode(const Mat<Scalar>& feats, const ParameterSet<Scalar>& params,
                             const EncoderConfig& cfg, bool keep_intermediate = false) {
  TrainOptions<Scalar> opts;
  opts.training = false;
  return detail::encode_impl<Scalar>(feats, params, cfg, keep_intermediate, opts, nullptr,
                                     nullptr);
}

template <typename Scalar>
struct DecoderState {
  Mat<Scalar> h;  // rnn_hidden x n_layers
  Mat<Scalar> c;

  static DecoderState zero(const DecoderConfig& cfg) {
    DecoderState s;
    s.h = Mat<Scalar>::Zero(cfg.rnn_hidden, cfg.n_rnn_layers);
    s.c = Mat<Scalar>::Zero(cfg.rnn_hidden, cfg.n_rnn_layers);
    return s;
  }
};

namespace detail {

template <typename Scalar>
struct DecoderStepTape {
  int input_token = -1;
  Vec<Scalar> embed_masked;                        // embedding after dropout
  Vec<Scalar> embed_mask;                          // empty when no dropout
  std::vector<nn::LstmStepCache<Scalar>> lstm;     // per layer
  std::vector<Vec<Scalar>> layer_out_masks;        // per layer (empty = none)
  std::vector<Vec<Scalar>> layer_inputs;           // input fed to each layer
  Vec<Scalar> query;      // top hidden after dropout (attention query)
  Vec<Scalar> u;          // attn.weight^T * query
  Vec<Scalar> alpha;      // attention weights over T'
  Vec<Scalar> context;
  Vec<Scalar> probs;      // softmax of logits
};

// One decoder step. Computes log-probabilities over the vocabulary, the new
// recurrent state, and the attention distribution.
template <typename Scalar>
Vec<Scalar> decoder_step_impl(int prev_token, const DecoderState<Scalar>& state,
                              const EncoderStates<Scalar>& enc,
                              const ParameterSet<Scalar>& params, const DecoderConfig& cfg,
                              const TrainOptions<Scalar>& opts, DecoderState<Scalar>& next,
                              DecoderStepTape<Scalar>* tape) {
  check_arg(enc.length() >= 1, "decode_step: empty encoder states");
  check_arg(prev_token >= 0 && prev_token < cfg.vocab_size,
            "decode_step: invalid token id " + std::to_string(prev_token));

  const Mat<Scalar>& embed = params.at("decoder.embed.weight");
  Vec<Scalar> x = embed.col(prev_token);
  const bool use_dropout = opts.training && opts.dropout > Scalar(0);
  if (use_dropout) {
    check_arg(opts.rng != nullptr, "decode_step: dropout requires an rng");
    const Mat<Scalar> m = nn::dropout_mask<Scalar>(x.size(), 1, opts.dropout, *opts.rng);
    if (tape) tape->embed_mask = m.col(0);
    x = x.cwiseProduct(m.col(0));
  }
  if (tape) {
    tape->input_token = prev_token;
    tape->embed_masked = x;
    tape->lstm.resize(cfg.n_rnn_layers);
    tape->layer_out_masks.resize(cfg.n_rnn_layers);
    tape->layer_inputs.resize(cfg.n_rnn_layers);
  }

  next.h.resizeLike(state.h);
  next.c.resizeLike(state.c);
  for (int l = 0; l < cfg.n_rnn_layers; ++l) {
    const std::string prefix = "decoder.rnn" + std::to_string(l + 1);
    if (tape) tape->layer_inputs[l] = x;
    Vec<Scalar> h(cfg.rnn_hidden), c(cfg.rnn_hidden);
    nn::lstm_step_forward<Scalar>(params.at(prefix + ".wx"), params.at(prefix + ".wh"),
                                  params.at(prefix + ".bias").col(0), x, state.h.col(l),
                                  state.c.col(l), h, c, tape ? &tape->lstm[l] : nullptr);
    next.h.col(l) = h;
    next.c.col(l) = c;
    x = std::move(h);
    if (use_dropout) {
      const Mat<Scalar> m = nn::dropout_mask<Scalar>(x.size(), 1, opts.dropout, *opts.rng);
      if (tape) tape->layer_out_masks[l] = m.col(0);
      x = x.cwiseProduct(m.col(0));
    }
  }

  // bilinear attention: score_j = query^T attn.weight enc_j
  const Mat<Scalar>& attn_w = params.at("decoder.attn.weight");
  const Vec<Scalar> u = attn_w.transpose() * x;
  const Vec<Scalar> scores = enc.states.transpose() * u;
  const Vec<Scalar> alpha = nn::softmax<Scalar>(scores);
  const Vec<Scalar> context = enc.states * alpha;

  const Mat<Scalar>& out_w = params.at("decoder.out.weight");
  Vec<Scalar> pre(out_w.cols());
  pre.head(x.size()) = x;
  pre.tail(context.size()) = context;
  const Vec<Scalar> logits = out_w * pre + params.at("decoder.out.bias").col(0);
  Vec<Scalar> logp = nn::log_softmax<Scalar>(logits);

  if (tape) {
    tape->query = x;
    tape->u = u;
    tape->alpha = alpha;
    tape->context = context;
    tape->probs = logp.array().exp().matrix();
  }
  return logp;
}

}  // namespace detail

// Inference-mode decoder step (the surface used by beam search).
// Returns log-probabilities (logsumexp 0), the new state, and the attention
// weights (nonnegative, summing to 1).
template <typename Scalar>
std::tuple<Vec<Scalar>, DecoderState<Scalar>, Vec<Scalar>> decode_step(
    int prev_token, const DecoderState<Scalar>& state, const EncoderStates<Scalar>& enc,
    const ParameterSet<Scalar>& params, const DecoderConfig& cfg) {
  TrainOptions<Scalar> opts;
  opts.training = false;
  DecoderState<Scalar> next;
  detail::DecoderStepTape<Scalar> tape;
  Vec<Scalar> logp =
      detail::decoder_step_impl<Scalar>(prev_token, state, enc, params, cfg, opts, next, &tape);
  return {std::move(logp), std::move(next), std::move(tape.alpha)};
}

// One (features, target-ids) training pair. Targets must end with eos.
// teacher_inputs[t] is the token fed at step t; index 0 is bos. When empty,
// pure teacher forcing is used (bos followed by targets[0..L-2]).
template <typename Scalar>
struct BatchItem {
  Mat<Scalar> feats;
  std::vector<int> targets;
  std::vector<int> teacher_inputs;
};

template <typename Scalar>
std::vector<int> teacher_forcing_inputs(const std::vector<int>& targets) {
  std::vector<int> inputs(targets.size());
  inputs[0] = text::Vocabulary::kBos;
  for (std::size_t t = 1; t < targets.size(); ++t) inputs[t] = targets[t - 1];
  return inputs;
}

// Chooses the token fed at the next step during training, given the gold
// token and the model's previous prediction. See training_engine.
using InputSampler = std::function<int(int gold_input, int model_prev)>;

namespace detail {

template <typename Scalar>
struct ItemForward {
  EncoderTape<Scalar> enc_tape;
  EncoderStates<Scalar> enc;
  std::vector<DecoderStepTape<Scalar>> steps;
  std::vector<int> inputs;   // realized decoder inputs
  std::vector<int> targets;
  double loss_sum = 0.0;     // sum of -log p(target)
  int n_correct = 0;         // argmax == target count
};

template <typename Scalar>
ItemForward<Scalar> item_forward(const BatchItem<Scalar>& item, const ParameterSet<Scalar>& params,
                                 const EncoderConfig& enc_cfg, const DecoderConfig& dec_cfg,
                                 const TrainOptions<Scalar>& opts,
                                 ParameterSet<Scalar>* mutable_params, const InputSampler& sampler,
                                 bool need_tape) {
  check_arg(!item.targets.empty(), "forward: item with empty target");
  check_arg(item.targets.back() == text::Vocabulary::kEos,
            "forward: targets must end with eos");
  for (int id : item.targets)
    check_arg(id >= 0 && id < dec_cfg.vocab_size, "forward: target id out of range");

  ItemForward<Scalar> fw;
  fw.targets = item.targets;
  fw.enc = encode_impl<Scalar>(item.feats, params, enc_cfg, false, opts, mutable_params,
                               need_tape ? &fw.enc_tape : nullptr);

  const std::size_t n_steps = item.targets.size();
  std::vector<int> gold_inputs =
      item.teacher_inputs.empty() ? teacher_forcing_inputs<Scalar>(item.targets)
                                  : item.teacher_inputs;
  check_arg(gold_inputs.size() == n_steps, "forward: teacher_inputs length mismatch");

  fw.steps.resize(n_steps);
  fw.inputs.resize(n_steps);
  DecoderState<Scalar> state = DecoderState<Scalar>::zero(dec_cfg);
  int model_prev = text::Vocabulary::kBos;
  for (std::size_t t = 0; t < n_steps; ++t) {
    int input = gold_inputs[t];
    if (sampler && t > 0) input = sampler(gold_inputs[t], model_prev);
    fw.inputs[t] = input;
    DecoderState<Scalar> next;
    const Vec<Scalar> logp = decoder_step_impl<Scalar>(input, state, fw.enc, params, dec_cfg, opts,
                                                       next, &fw.steps[t]);
    const int target = item.targets[t];
    fw.loss_sum -= static_cast<double>(logp(target));
    Eigen::Index argmax;
    logp.maxCoeff(&argmax);
    if (static_cast<int>(argmax) == target) ++fw.n_correct;
    model_prev = static_cast<int>(argmax);
    state = std::move(next);
  }
  return fw;
}

template <typename Scalar>
void item_backward(const ItemForward<Scalar>& fw, const ParameterSet<Scalar>& params,
                   const EncoderConfig& enc_cfg, const DecoderConfig& dec_cfg,
                   ParameterSet<Scalar>& grads) {
  const Eigen::Index t_enc = fw.enc.length();
  const int n_layers = dec_cfg.n_rnn_layers;
  Mat<Scalar> denc = Mat<Scalar>::Zero(fw.enc.states.rows(), t_enc);
  Mat<Scalar> dh_carry = Mat<Scalar>::Zero(dec_cfg.rnn_hidden, n_layers);
  Mat<Scalar> dc_carry = Mat<Scalar>::Zero(dec_cfg.rnn_hidden, n_layers);

  const Mat<Scalar>& attn_w = params.at("decoder.attn.weight");
  const Mat<Scalar>& out_w = params.at("decoder.out.weight");
  Mat<Scalar>& dembed = grads.at("decoder.embed.weight");

  for (auto t = static_cast<std::ptrdiff_t>(fw.steps.size()) - 1; t >= 0; --t) {
    const DecoderStepTape<Scalar>& tape = fw.steps[t];
    // d(-log p[target]) w.r.t. logits = probs - onehot(target)
    Vec<Scalar> dlogits = tape.probs;
    dlogits(fw.targets[t]) -= Scalar(1);

    Vec<Scalar> pre(out_w.cols());
    pre.head(tape.query.size()) = tape.query;
    pre.tail(tape.context.size()) = tape.context;
    grads.at("decoder.out.weight").noalias() += dlogits * pre.transpose();
    grads.at("decoder.out.bias").col(0) += dlogits;
    const Vec<Scalar> dpre = out_w.transpose() * dlogits;
    Vec<Scalar> dquery = dpre.head(tape.query.size());
    const Vec<Scalar> dcontext = dpre.tail(tape.context.size());

    // context = enc * alpha
    Vec<Scalar> dalpha = fw.enc.states.transpose() * dcontext;
    denc.noalias() += dcontext * tape.alpha.transpose();
    // softmax backward
    const Scalar dot = tape.alpha.dot(dalpha);
    const Vec<Scalar> dscores =
        tape.alpha.cwiseProduct(dalpha - Vec<Scalar>::Constant(dalpha.size(), dot));
    // scores = enc^T u
    const Vec<Scalar> du = fw.enc.states * dscores;
    denc.noalias() += tape.u * dscores.transpose();
    // u = attn_w^T query
    grads.at("decoder.attn.weight").noalias() += tape.query * du.transpose();
    dquery += attn_w * du;

    // back through the decoder stack (query = top layer output after dropout)
    Vec<Scalar> dx = dquery;
    for (int l = n_layers - 1; l >= 0; --l) {
      if (tape.layer_out_masks[l].size() > 0) dx = dx.cwiseProduct(tape.layer_out_masks[l]);
      const std::string prefix = "decoder.rnn" + std::to_string(l + 1);
      const Vec<Scalar> dh = dx + dh_carry.col(l);
      Vec<Scalar> dbias = grads.at(prefix + ".bias").col(0);
      Vec<Scalar> dx_step(tape.layer_inputs[l].size()), dh_prev(dec_cfg.rnn_hidden),
          dc_prev(dec_cfg.rnn_hidden);
      nn::lstm_step_backward<Scalar>(params.at(prefix + ".wx"), params.at(prefix + ".wh"),
                                     tape.lstm[l], dh, dc_carry.col(l), grads.at(prefix + ".wx"),
                                     grads.at(prefix + ".wh"), dbias, dx_step, dh_prev, dc_prev);
      grads.at(prefix + ".bias").col(0) = dbias;
      dh_carry.col(l) = dh_prev;
      dc_carry.col(l) = dc_prev;
      dx = std::move(dx_step);
    }
    if (tape.embed_mask.size() > 0) dx = dx.cwiseProduct(tape.embed_mask);
    dembed.col(tape.input_token) += dx;
  }

  encoder_backward<Scalar>(params, enc_cfg, fw.enc_tape, std::move(denc), grads);
}

}  // namespace detail

template <typename Scalar>
ParameterSet<Scalar> zero_like(const ParameterSet<Scalar>& params) {
  ParameterSet<Scalar> out;
  for (const auto& [name, value] : params.values())
    out.insert(name, Mat<Scalar>::Zero(value.rows(), value.cols()));
  return out;
}

// Mean negative log-likelihood per target token over the batch.
template <typename Scalar>
double forward_loss(const std::vector<BatchItem<Scalar>>& batch, const ParameterSet<Scalar>& params,
                    const EncoderConfig& enc_cfg, const DecoderConfig& dec_cfg,
                    const TrainOptions<Scalar>& opts = {}) {
  check_arg(!batch.empty(), "forward_loss: empty batch");
  double loss_sum = 0.0;
  std::size_t n_tokens = 0;
  for (const auto& item : batch) {
    const auto fw = detail::item_forward<Scalar>(item, params, enc_cfg, dec_cfg, opts, nullptr,
                                                 nullptr, false);
    loss_sum += fw.loss_sum;
    n_tokens += item.targets.size();
  }
  return loss_sum / static_cast<double>(n_tokens);
}

template <typename Scalar>
struct ForwardBackwardResult {
  double loss = 0.0;          // mean per token
  std::size_t n_tokens = 0;
  std::size_t n_correct = 0;  // teacher-forced argmax matches
  ParameterSet<Scalar> grads;
  std::vector<std::vector<int>> realized_inputs;  // per item
};

// Forward + full backprop. `sampler`, when set, picks each step's input from
// (gold, model_prev) — scheduled sampling; gradients treat inputs as data.
template <typename Scalar>
ForwardBackwardResult<Scalar> forward_backward(const std::vector<BatchItem<Scalar>>& batch,
                                               ParameterSet<Scalar>& params,
                                               const EncoderConfig& enc_cfg,
                                               const DecoderConfig& dec_cfg,
                                               const TrainOptions<Scalar>& opts = {},
                                               const InputSampler& sampler = nullptr) {
  check_arg(!batch.empty(), "forward_backward: empty batch");
  ForwardBackwardResult<Scalar> result;
  result.grads = zero_like(params);
  double loss_sum = 0.0;
  for (const auto& item : batch) {
    auto fw = detail::item_forward<Scalar>(item, params, enc_cfg, dec_cfg, opts,
                                           opts.update_running_stats ? &params : nullptr, sampler,
                                           true);
    detail::item_backward<Scalar>(fw, params, enc_cfg, dec_cfg, result.grads);
    loss_sum += fw.loss_sum;
    result.n_tokens += fw.targets.size();
    result.n_correct += static_cast<std::size_t>(fw.n_correct);
    result.realized_inputs.push_back(std::move(fw.inputs));
  }
  const auto scale = Scalar(1) / static_cast<Scalar>(result.n_tokens);
  for (auto& [name, g] : result.grads.values())
    if (!ParameterSet<Scalar>::is_buffer(name)) g *= scale;
  result.loss = loss_sum / static_cast<double>(result.n_tokens);
  return result;
}

// Teacher-forced token accuracy in inference mode (no dropout, running BN).
template <typename Scalar>
double teacher_forced_accuracy(const std::vector<BatchItem<Scalar>>& batch,
                               const ParameterSet<Scalar>& params, const EncoderConfig& enc_cfg,
                               const DecoderConfig& dec_cfg) {
  check_arg(!batch.empty(), "teacher_forced_accuracy: empty batch");
  TrainOptions<Scalar> opts;
  opts.training = false;
  std::size_t correct = 0, total = 0;
  for (const auto& item : batch) {
    const auto fw = detail::item_forward<Scalar>(item, params, enc_cfg, dec_cfg, opts, nullptr,
                                                 nullptr, false);
    correct += static_cast<std::size_t>(fw.n_correct);
    total += item.targets.size();
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

// Copies every "encoder.*" array from src into a copy of dst. Validates the
// full name/shape correspondence first; on any mismatch throws with the
// offending names and transfers nothing.
template <typename Scalar>
ParameterSet<Scalar> transfer_encoder(const ParameterSet<Scalar>& src,
                                      const ParameterSet<Scalar>& dst) {
  std::vector<std::string> offenders;
  for (const auto& [name, value] : src.values()) {
    if (name.rfind("encoder.", 0) != 0) continue;
    if (!dst.has(name)) {
      offenders.push_back(name + " (missing in destination)");
    } else {
      const auto& d = dst.at(name);
      if (d.rows() != value.rows() || d.cols() != value.cols()) {
        std::ostringstream os;
        os << name << " (shape " << value.rows() << "x" << value.cols() << " vs " << d.rows()
           << "x" << d.cols() << ")";
        offenders.push_back(os.str());
      }
    }
  }
  for (const auto& [name, value] : dst.values()) {
    if (name.rfind("encoder.", 0) == 0 && !src.has(name))
      offenders.push_back(name + " (missing in source)");
  }
  if (!offenders.empty()) {
    std::string msg = "transfer_encoder: incompatible encoder parameters:";
    for (const auto& o : offenders) msg += "\n  " + o;
    throw std::invalid_argument(msg);
  }
  ParameterSet<Scalar> out = dst;
  for (const auto& [name, value] : src.values())
    if (name.rfind("encoder.", 0) == 0) out.at(name) = value;
  return out;
}

}  // namespace model
}  // namespace astkit

#endif  // ASTKIT_MODEL_HPP_

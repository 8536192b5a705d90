// astkit/audio.hpp

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

#ifndef ASTKIT_AUDIO_HPP_
#define ASTKIT_AUDIO_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "astkit/common.hpp"
#include "astkit/fft.hpp"

namespace astkit {
namespace audio {

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;
  std::string utt_id;
  std::string speaker_id;

  double duration() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
};

// Acoustic features for one utterance. Frames are stored one per column
// (dim rows x n_frames cols), so a frame is a contiguous slice.
struct FeatureSequence {
  MatF frames;
  double frame_shift = 0.01;
  std::string utt_id;
  std::string speaker_id;

  Eigen::Index dim() const { return frames.rows(); }
  Eigen::Index n_frames() const { return frames.cols(); }
  double duration() const { return static_cast<double>(n_frames()) * frame_shift; }

  void validate() const {
    check_arg(n_frames() >= 1, "FeatureSequence " + utt_id + ": no frames");
    check_arg(frames.allFinite(), "FeatureSequence " + utt_id + ": non-finite entries");
  }
};

struct SpeakerStats {
  std::string speaker_id;
  VecD mean;
  VecD variance;  // population variance, per coefficient
  std::int64_t frame_count = 0;
};

struct MfccOptions {
  double window = 0.025;   // seconds
  double shift = 0.010;    // seconds
  int n_coeffs = 13;       // includes the 0th cepstral coefficient
  int n_mels = 23;
  double preemphasis = 0.97;
};

namespace detail {

inline double hz_to_mel(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::exp(mel / 1127.0) - 1.0); }

// Triangular mel filterbank over FFT bins [0, n_fft/2].
inline std::vector<std::vector<double>> mel_filterbank(int n_mels, std::size_t n_fft, int sample_rate) {
  const double f_min = 20.0;
  const double f_max = sample_rate / 2.0;
  const double mel_min = hz_to_mel(f_min);
  const double mel_max = hz_to_mel(f_max);
  const std::size_t n_bins = n_fft / 2 + 1;
  std::vector<double> centers(n_mels + 2);
  for (int m = 0; m < n_mels + 2; ++m)
    centers[m] = mel_to_hz(mel_min + (mel_max - mel_min) * m / (n_mels + 1));
  std::vector<std::vector<double>> bank(n_mels, std::vector<double>(n_bins, 0.0));
  const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(n_fft);
  for (int m = 0; m < n_mels; ++m) {
    const double lo = centers[m], mid = centers[m + 1], hi = centers[m + 2];
    for (std::size_t b = 0; b < n_bins; ++b) {
      const double f = b * bin_hz;
      if (f > lo && f < mid)
        bank[m][b] = (f - lo) / (mid - lo);
      else if (f >= mid && f < hi)
        bank[m][b] = (hi - f) / (hi - mid);
    }
  }
  return bank;
}

}  // namespace detail

// MFCC extraction: preemphasis, Hamming window, power spectrum, log mel
// filterbank, DCT-II. All arithmetic in double, stored as float32.
inline FeatureSequence compute_mfcc(const Waveform& wave, const MfccOptions& opts = {}) {
  check_arg(!wave.samples.empty(), "compute_mfcc: empty waveform " + wave.utt_id);
  check_arg(wave.sample_rate > 0, "compute_mfcc: non-positive sample rate");
  check_arg(opts.window > opts.shift && opts.shift > 0,
            "compute_mfcc: need window > shift > 0");
  check_arg(opts.n_coeffs >= 1, "compute_mfcc: n_coeffs must be >= 1");
  check_arg(opts.n_coeffs <= opts.n_mels, "compute_mfcc: n_coeffs must be <= n_mels");

  const auto win_len = static_cast<std::size_t>(std::lround(opts.window * wave.sample_rate));
  const auto shift_len = static_cast<std::size_t>(std::lround(opts.shift * wave.sample_rate));
  if (wave.samples.size() < win_len) {
    std::ostringstream msg;
    msg << "compute_mfcc: utterance " << wave.utt_id << " is shorter than one window ("
        << wave.samples.size() << " samples < " << win_len << ")";
    throw std::invalid_argument(msg.str());
  }
  const std::size_t n_frames = 1 + (wave.samples.size() - win_len) / shift_len;
  const std::size_t n_fft = next_power_of_two(win_len);
  const auto bank = detail::mel_filterbank(opts.n_mels, n_fft, wave.sample_rate);

  std::vector<double> hamming(win_len);
  for (std::size_t i = 0; i < win_len; ++i)
    hamming[i] = 0.54 - 0.46 * std::cos(2.0 * M_PI * i / (win_len - 1));

  FeatureSequence feats;
  feats.frames.resize(opts.n_coeffs, static_cast<Eigen::Index>(n_frames));
  feats.frame_shift = opts.shift;
  feats.utt_id = wave.utt_id;
  feats.speaker_id = wave.speaker_id;

  constexpr double kLogFloor = 1e-10;
  std::vector<double> frame(win_len);
  std::vector<double> mel(opts.n_mels);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const std::size_t off = t * shift_len;
    for (std::size_t i = 0; i < win_len; ++i) {
      const double prev = (off + i == 0) ? wave.samples[0] : wave.samples[off + i - 1];
      frame[i] = (wave.samples[off + i] - opts.preemphasis * prev) * hamming[i];
    }
    const auto pow = power_spectrum(frame, n_fft);
    for (int m = 0; m < opts.n_mels; ++m) {
      double acc = 0.0;
      for (std::size_t b = 0; b < pow.size(); ++b) acc += bank[m][b] * pow[b];
      mel[m] = std::log(std::max(acc, kLogFloor));
    }
    const auto ceps = dct2(mel, static_cast<std::size_t>(opts.n_coeffs));
    for (int k = 0; k < opts.n_coeffs; ++k)
      feats.frames(k, static_cast<Eigen::Index>(t)) = static_cast<float>(ceps[k]);
  }
  return feats;
}

// Pools per-speaker mean/variance over the given sequences.
inline std::map<std::string, SpeakerStats> compute_speaker_stats(
    const std::vector<FeatureSequence>& feats) {
  check_arg(!feats.empty(), "compute_speaker_stats: no feature sequences");
  struct Acc {
    VecD sum, sumsq;
    std::int64_t n = 0;
  };
  std::map<std::string, Acc> accs;
  const Eigen::Index dim = feats.front().dim();
  for (const auto& f : feats) {
    check_arg(f.dim() == dim, "compute_speaker_stats: inconsistent feature dims");
    auto& acc = accs[f.speaker_id];
    if (acc.n == 0) {
      acc.sum = VecD::Zero(dim);
      acc.sumsq = VecD::Zero(dim);
    }
    for (Eigen::Index t = 0; t < f.n_frames(); ++t) {
      const VecD x = f.frames.col(t).cast<double>();
      acc.sum += x;
      acc.sumsq += x.cwiseProduct(x);
      ++acc.n;
    }
  }
  std::map<std::string, SpeakerStats> stats;
  for (auto& [spk, acc] : accs) {
    SpeakerStats s;
    s.speaker_id = spk;
    s.frame_count = acc.n;
    s.mean = acc.sum / static_cast<double>(acc.n);
    s.variance = (acc.sumsq / static_cast<double>(acc.n)) - s.mean.cwiseProduct(s.mean);
    s.variance = s.variance.cwiseMax(0.0);
    stats[spk] = std::move(s);
  }
  return stats;
}

// Combines two partial stats for the same speaker (sufficient-statistics merge).
inline SpeakerStats merge_speaker_stats(const SpeakerStats& a, const SpeakerStats& b) {
  check_arg(a.speaker_id == b.speaker_id, "merge_speaker_stats: speaker mismatch");
  SpeakerStats out;
  out.speaker_id = a.speaker_id;
  out.frame_count = a.frame_count + b.frame_count;
  const double na = static_cast<double>(a.frame_count), nb = static_cast<double>(b.frame_count);
  const VecD sum = a.mean * na + b.mean * nb;
  const VecD sumsq = (a.variance + a.mean.cwiseProduct(a.mean)) * na +
                     (b.variance + b.mean.cwiseProduct(b.mean)) * nb;
  out.mean = sum / (na + nb);
  out.variance = (sumsq / (na + nb) - out.mean.cwiseProduct(out.mean)).cwiseMax(0.0);
  return out;
}

constexpr double kCmvnVarianceFloor = 1e-10;

// Per-speaker cepstral mean and variance normalization. Zero-variance
// coefficients are floored at kCmvnVarianceFloor and reported via *warnings.
inline std::vector<FeatureSequence> apply_cmvn(const std::vector<FeatureSequence>& feats,
                                               const std::map<std::string, SpeakerStats>& stats,
                                               std::vector<std::string>* warnings = nullptr) {
  std::vector<FeatureSequence> out;
  out.reserve(feats.size());
  for (const auto& f : feats) {
    auto it = stats.find(f.speaker_id);
    if (it == stats.end())
      throw std::invalid_argument("apply_cmvn: no stats for speaker " + f.speaker_id);
    const SpeakerStats& s = it->second;
    check_arg(s.mean.size() == f.dim(), "apply_cmvn: stats dim mismatch for " + f.speaker_id);
    VecD scale(f.dim());
    for (Eigen::Index d = 0; d < f.dim(); ++d) {
      double var = s.variance(d);
      if (var < kCmvnVarianceFloor) {
        if (warnings)
          warnings->push_back("apply_cmvn: speaker " + f.speaker_id + " coefficient " +
                              std::to_string(d) + " has near-zero variance; floored");
        var = kCmvnVarianceFloor;
      }
      scale(d) = 1.0 / std::sqrt(var);
    }
    FeatureSequence g = f;
    for (Eigen::Index t = 0; t < f.n_frames(); ++t) {
      const VecD x = f.frames.col(t).cast<double>();
      g.frames.col(t) = ((x - s.mean).cwiseProduct(scale)).cast<float>();
    }
    out.push_back(std::move(g));
  }
  return out;
}

inline std::string speed_suffix(double factor) {
  std::ostringstream os;
  os << "_sp" << factor;
  return os.str();
}

// Resamples the waveform so the output plays 'factor' times faster, changing
// tempo and pitch together. factor 1.0 is sample-identical.
inline Waveform speed_perturb(const Waveform& wave, double factor) {
  check_arg(factor > 0, "speed_perturb: factor must be positive");
  Waveform out;
  out.sample_rate = wave.sample_rate;
  out.utt_id = wave.utt_id + speed_suffix(factor);
  out.speaker_id = wave.speaker_id;
  const std::size_t n_in = wave.samples.size();
  const auto n_out = static_cast<std::size_t>(std::llround(static_cast<double>(n_in) / factor));
  out.samples.resize(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double pos = std::min(static_cast<double>(i) * factor, static_cast<double>(n_in - 1));
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, n_in - 1);
    const double frac = pos - static_cast<double>(lo);
    out.samples[i] = (1.0 - frac) * wave.samples[lo] + frac * wave.samples[hi];
  }
  return out;
}

// Drops frames past max_seconds from the end.
inline FeatureSequence trim_utterance(const FeatureSequence& feats, double max_seconds) {
  check_arg(max_seconds > 0, "trim_utterance: max_seconds must be positive");
  const auto max_frames =
      static_cast<Eigen::Index>(std::floor(max_seconds / feats.frame_shift + 1e-9));
  if (feats.n_frames() <= max_frames) return feats;
  FeatureSequence out = feats;
  out.frames = feats.frames.leftCols(max_frames).eval();
  return out;
}

}  // namespace audio
}  // namespace astkit

#endif  // ASTKIT_AUDIO_HPP_

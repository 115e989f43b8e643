// src/dsp.cc

// Copyright 2026  The dakws Authors
//
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

#include "dakws/dsp.h"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

namespace dakws {

namespace {

// FFTW planning is not thread-safe; plans are created once per size under a
// lock and executed with the new-array interface afterwards.
class FftPlans {
 public:
  struct Plan {
    int n;
    fftw_plan forward;   // r2c
    fftw_plan backward;  // c2r
  };

  static const Plan &Get(int n) {
    static FftPlans instance;
    std::lock_guard<std::mutex> lock(instance.mu_);
    auto it = instance.plans_.find(n);
    if (it != instance.plans_.end()) return it->second;
    double *in = fftw_alloc_real(n);
    fftw_complex *out = fftw_alloc_complex(n / 2 + 1);
    Plan p{n, fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE | FFTW_UNALIGNED),
           fftw_plan_dft_c2r_1d(n, out, in, FFTW_ESTIMATE | FFTW_UNALIGNED)};
    fftw_free(in);
    fftw_free(out);
    return instance.plans_.emplace(n, p).first->second;
  }

 private:
  ~FftPlans() {
    for (auto &[n, p] : plans_) {
      fftw_destroy_plan(p.forward);
      fftw_destroy_plan(p.backward);
    }
  }
  std::mutex mu_;
  std::map<int, Plan> plans_;
};

void RealFft(std::span<double> in, std::span<std::complex<double>> out) {
  const auto &plan = FftPlans::Get(static_cast<int>(in.size()));
  fftw_execute_dft_r2c(plan.forward, in.data(), reinterpret_cast<fftw_complex *>(out.data()));
}

// Unnormalized inverse; `in` is clobbered by FFTW.
void InverseRealFft(std::span<std::complex<double>> in, std::span<double> out) {
  const auto &plan = FftPlans::Get(static_cast<int>(out.size()));
  fftw_execute_dft_c2r(plan.backward, reinterpret_cast<fftw_complex *>(in.data()), out.data());
}

}  // namespace

void StftConfig::Validate() const {
  if (window <= 0 || hop <= 0 || fft <= 0) throw std::invalid_argument("StftConfig: sizes must be positive");
  if (hop > window) throw std::invalid_argument("StftConfig: hop exceeds window");
  if (window > fft) throw std::invalid_argument("StftConfig: window exceeds fft size");
}

int StftConfig::NumFrames(size_t num_samples) const {
  if (num_samples < static_cast<size_t>(window)) return 0;
  return 1 + static_cast<int>((num_samples - window) / hop);
}

std::vector<double> StftConfig::Window() const {
  std::vector<double> w(window, 1.0);
  if (window_type == WindowType::kHann)
    for (int n = 0; n < window; ++n) w[n] = 0.5 - 0.5 * std::cos(2 * kPi * n / window);
  return w;
}

void StftFrame(std::span<const double> frame, const StftConfig &cfg, std::span<std::complex<double>> out) {
  if (static_cast<int>(frame.size()) != cfg.window || static_cast<int>(out.size()) != cfg.NumBins())
    throw std::invalid_argument("StftFrame: buffer size mismatch");
  thread_local std::vector<double> buf;
  thread_local std::vector<double> window;
  thread_local StftConfig window_cfg{0, 0, 0};
  if (window_cfg.window != cfg.window || window_cfg.window_type != cfg.window_type) {
    window = cfg.Window();
    window_cfg = cfg;
  }
  buf.assign(cfg.fft, 0.0);
  for (int n = 0; n < cfg.window; ++n) buf[n] = frame[n] * window[n];
  RealFft(buf, out);
}

ComplexSpectrogram Stft(const MultiChannel &channels, const StftConfig &cfg) {
  cfg.Validate();
  if (channels.empty()) throw std::invalid_argument("Stft: no channels");
  const size_t n = channels[0].size();
  const int frames = cfg.NumFrames(n);
  if (frames == 0)
    throw std::invalid_argument("Stft: clip of " + std::to_string(n) + " samples is shorter than one window (" +
                                std::to_string(cfg.window) + ")");
  ComplexSpectrogram spec;
  spec.channels = static_cast<int>(channels.size());
  spec.frames = frames;
  spec.bins = cfg.NumBins();
  spec.data.resize(size_t(spec.channels) * frames * spec.bins);
  for (int m = 0; m < spec.channels; ++m) {
    if (channels[m].size() != n) throw std::invalid_argument("Stft: channels differ in length");
    for (int t = 0; t < frames; ++t) {
      std::span<const double> frame(channels[m].data() + size_t(t) * cfg.hop, cfg.window);
      StftFrame(frame, cfg, std::span(&spec.at(m, t, 0), spec.bins));
    }
  }
  return spec;
}

ComplexSpectrogram Stft(const AudioClip &clip, const StftConfig &cfg) {
  clip.Validate();
  MultiChannel channels;
  for (const auto &ch : clip.channels) channels.emplace_back(ch.begin(), ch.end());
  return Stft(channels, cfg);
}

namespace {

double HzToMel(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }

}  // namespace

Filterbank::Filterbank(const FbankConfig &cfg) : cfg_(cfg) {
  cfg_.stft.Validate();
  const double nyquist = cfg.sample_rate / 2.0;
  const double high = cfg.high_hz > 0 ? cfg.high_hz : nyquist;
  if (cfg.num_mel <= 0 || cfg.low_hz < 0 || high <= cfg.low_hz || high > nyquist)
    throw std::invalid_argument("FbankConfig: bad mel range");
  const int bins = cfg.stft.NumBins();
  const double mel_lo = HzToMel(cfg.low_hz), mel_hi = HzToMel(high);
  const double step = (mel_hi - mel_lo) / (cfg.num_mel + 1);
  weights_.assign(cfg.num_mel, std::vector<double>(bins, 0.0));
  for (int b = 0; b < cfg.num_mel; ++b) {
    const double left = mel_lo + b * step, center = left + step, right = center + step;
    for (int k = 0; k < bins; ++k) {
      double mel = HzToMel(double(k) * cfg.sample_rate / cfg.stft.fft);
      if (mel > left && mel < right)
        weights_[b][k] = mel <= center ? (mel - left) / (center - left) : (right - mel) / (right - center);
    }
  }
}

Filterbank::Filterbank(const FbankConfig &cfg, std::vector<std::vector<double>> weights)
    : cfg_(cfg), weights_(std::move(weights)) {
  cfg_.stft.Validate();
  for (const auto &row : weights_)
    if (static_cast<int>(row.size()) != cfg_.stft.NumBins())
      throw std::invalid_argument("Filterbank: weight row length != fft/2+1");
}

void Filterbank::ComputeFrame(std::span<const double> frame, std::span<double> out) const {
  thread_local std::vector<std::complex<double>> spec;
  thread_local std::vector<double> power;
  spec.resize(cfg_.stft.NumBins());
  StftFrame(frame, cfg_.stft, spec);
  power.resize(spec.size());
  for (size_t k = 0; k < spec.size(); ++k) power[k] = std::norm(spec[k]);
  for (size_t b = 0; b < weights_.size(); ++b) {
    double e = 0;
    for (size_t k = 0; k < power.size(); ++k) e += weights_[b][k] * power[k];
    out[b] = std::log(e + cfg_.floor);
  }
}

FbankFeatures Filterbank::Compute(std::span<const double> samples) const {
  const int frames = cfg_.stft.NumFrames(samples.size());
  if (frames == 0) throw std::invalid_argument("Fbank: clip shorter than one window");
  FbankFeatures feats;
  feats.frames = frames;
  feats.bins = NumBins();
  feats.data.resize(size_t(frames) * feats.bins);
  for (int t = 0; t < frames; ++t)
    ComputeFrame(samples.subspan(size_t(t) * cfg_.stft.hop, cfg_.stft.window),
                 std::span(feats.data.data() + size_t(t) * feats.bins, feats.bins));
  return feats;
}

FbankFeatures Fbank(std::span<const float> samples, const FbankConfig &cfg) {
  std::vector<double> x(samples.begin(), samples.end());
  return Filterbank(cfg).Compute(x);
}

std::vector<double> ConvolveDirect(std::span<const double> x, std::span<const double> h) {
  if (x.empty() || h.empty()) throw std::invalid_argument("Convolve: empty input");
  std::vector<double> y(x.size() + h.size() - 1, 0.0);
  for (size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    double *yi = y.data() + i;
    for (size_t k = 0; k < h.size(); ++k) yi[k] += xi * h[k];
  }
  return y;
}

std::vector<double> ConvolveFft(std::span<const double> x, std::span<const double> h) {
  if (x.empty() || h.empty()) throw std::invalid_argument("Convolve: empty input");
  const size_t out_len = x.size() + h.size() - 1;
  size_t n = 1;
  while (n < out_len) n <<= 1;
  std::vector<double> a(n, 0.0), b(n, 0.0);
  std::copy(x.begin(), x.end(), a.begin());
  std::copy(h.begin(), h.end(), b.begin());
  std::vector<std::complex<double>> fa(n / 2 + 1), fb(n / 2 + 1);
  RealFft(a, fa);
  RealFft(b, fb);
  for (size_t k = 0; k < fa.size(); ++k) fa[k] *= fb[k];
  InverseRealFft(fa, a);
  std::vector<double> y(a.begin(), a.begin() + out_len);
  const double scale = 1.0 / n;
  for (double &v : y) v *= scale;
  return y;
}

std::vector<double> Convolve(std::span<const double> x, std::span<const double> h) {
  if (std::min(x.size(), h.size()) <= 64) return ConvolveDirect(x, h);
  return ConvolveFft(x, h);
}

double MeanPower(std::span<const double> x) {
  if (x.empty()) return 0;
  double s = 0;
  for (double v : x) s += v * v;
  return s / x.size();
}

double SnrDb(std::span<const double> signal, std::span<const double> noise) {
  return 10.0 * std::log10(MeanPower(signal) / MeanPower(noise));
}

MixResult MixAtSnr(const MultiChannel &target, const MultiChannel &noise, double snr_db, int ref_channel) {
  if (target.empty() || target.size() != noise.size())
    throw std::invalid_argument("MixAtSnr: target and noise channel counts differ");
  if (ref_channel < 0 || ref_channel >= static_cast<int>(target.size()))
    throw std::invalid_argument("MixAtSnr: bad reference channel");
  const size_t n = target[0].size();
  MixResult result;
  result.mixture = target;
  if (std::isinf(snr_db) && snr_db > 0) return result;
  if (!std::isfinite(snr_db)) throw std::invalid_argument("MixAtSnr: SNR must be finite or +inf");

  MultiChannel fitted(noise.size(), std::vector<double>(n));
  for (size_t m = 0; m < noise.size(); ++m) {
    if (noise[m].empty()) throw std::invalid_argument("MixAtSnr: empty noise");
    for (size_t i = 0; i < n; ++i) fitted[m][i] = noise[m][i % noise[m].size()];
  }
  const double p_target = MeanPower(target[ref_channel]);
  const double p_noise = MeanPower(fitted[ref_channel]);
  if (!(p_target > 0)) throw std::invalid_argument("MixAtSnr: silent target");
  if (!(p_noise > 0)) throw std::invalid_argument("MixAtSnr: silent noise");
  result.gain = std::sqrt(p_target / (p_noise * std::pow(10.0, snr_db / 10.0)));
  for (size_t m = 0; m < target.size(); ++m)
    for (size_t i = 0; i < n; ++i) result.mixture[m][i] += result.gain * fitted[m][i];
  return result;
}

}  // namespace dakws

// include/dakws/dsp.h

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

#ifndef DAKWS_DSP_H_
#define DAKWS_DSP_H_

#include <complex>
#include <limits>
#include <span>
#include <vector>

#include "dakws/audio_io.h"

namespace dakws {

using MultiChannel = std::vector<std::vector<double>>;

enum class WindowType { kHann, kRect };

struct StftConfig {
  int window = 256;
  int hop = 160;
  int fft = 256;
  WindowType window_type = WindowType::kHann;

  void Validate() const;
  int NumBins() const { return fft / 2 + 1; }
  // Frames without center padding; 0 when fewer than `window` samples.
  int NumFrames(size_t num_samples) const;
  std::vector<double> Window() const;
};

// X_m(f, t): complex spectra indexed [channel][frame][bin].
struct ComplexSpectrogram {
  int channels = 0, frames = 0, bins = 0;
  std::vector<std::complex<double>> data;

  std::complex<double> &at(int m, int t, int f) { return data[(size_t(m) * frames + t) * bins + f]; }
  const std::complex<double> &at(int m, int t, int f) const {
    return data[(size_t(m) * frames + t) * bins + f];
  }
};

// One-sided spectrum of a single frame of `cfg.window` samples.
void StftFrame(std::span<const double> frame, const StftConfig &cfg,
               std::span<std::complex<double>> out);

ComplexSpectrogram Stft(const AudioClip &clip, const StftConfig &cfg);
ComplexSpectrogram Stft(const MultiChannel &channels, const StftConfig &cfg);

struct FbankConfig {
  StftConfig stft{400, 160, 512, WindowType::kHann};
  int num_mel = 80;
  double low_hz = 20.0;
  double high_hz = 0.0;  // <= 0 means Nyquist
  int sample_rate = 16000;
  double floor = 1e-10;
};

// Log filterbank energies, [frame][bin] row-major.
struct FbankFeatures {
  int frames = 0, bins = 0;
  std::vector<double> data;
  double at(int t, int b) const { return data[size_t(t) * bins + b]; }
};

// Triangular mel filters as a dense [num_mel][fft/2+1] weight matrix.
class Filterbank {
 public:
  explicit Filterbank(const FbankConfig &cfg);
  Filterbank(const FbankConfig &cfg, std::vector<std::vector<double>> weights);

  const FbankConfig &config() const { return cfg_; }
  int NumBins() const { return static_cast<int>(weights_.size()); }
  // log(W * |X|^2 + floor) for one frame of time samples.
  void ComputeFrame(std::span<const double> frame, std::span<double> out) const;
  FbankFeatures Compute(std::span<const double> samples) const;

 private:
  FbankConfig cfg_;
  std::vector<std::vector<double>> weights_;
};

FbankFeatures Fbank(std::span<const float> samples, const FbankConfig &cfg);

std::vector<double> ConvolveDirect(std::span<const double> x, std::span<const double> h);
std::vector<double> ConvolveFft(std::span<const double> x, std::span<const double> h);
// Full linear convolution; picks the cheaper path.
std::vector<double> Convolve(std::span<const double> x, std::span<const double> h);

inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();

struct MixResult {
  MultiChannel mixture;
  double gain = 0;  // applied to the noise
};

// Mixes `noise` (tiled or cropped to the target length) into `target` so
// that the reference-channel SNR over the whole clip equals `snr_db`.
// snr_db == kNoNoise returns the target unchanged.
MixResult MixAtSnr(const MultiChannel &target, const MultiChannel &noise, double snr_db,
                   int ref_channel = 0);

double MeanPower(std::span<const double> x);
double SnrDb(std::span<const double> signal, std::span<const double> noise);

}  // namespace dakws

#endif  // DAKWS_DSP_H_

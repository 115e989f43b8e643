// src/stream.cc

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

#include "dakws/stream.h"

#include <algorithm>
#include <climits>
#include <stdexcept>

namespace dakws {

void TriggerConfig::Validate(int num_keywords) const {
  if (window < 1) throw std::invalid_argument("trigger: smoothing window must be >= 1");
  if (!thresholds.empty() && int(thresholds.size()) != num_keywords)
    throw std::invalid_argument("trigger: " + std::to_string(thresholds.size()) + " thresholds for " +
                                std::to_string(num_keywords) + " keywords");
  for (int k = 0; k < num_keywords; ++k)
    if (!(Threshold(k) > 0 && Threshold(k) < 1)) throw std::invalid_argument("trigger: thresholds must lie in (0, 1)");
  if (!(refractory_s >= 0)) throw std::invalid_argument("trigger: refractory must be >= 0");
  if (!(release >= 0 && release <= 1)) throw std::invalid_argument("trigger: release must lie in [0, 1]");
}

PosteriorSmoother::PosteriorSmoother(int window) : window_(window) {
  if (window < 1) throw std::invalid_argument("smoother: window must be >= 1");
  history_.resize(window);
}

std::vector<double> PosteriorSmoother::Push(const std::vector<double> &frame) {
  history_[count_ % window_] = frame;
  ++count_;
  const size_t n = std::min<size_t>(count_, window_);
  std::vector<double> out(frame.size(), 0.0);
  // Oldest first, so the sum does not depend on the ring position.
  for (size_t i = 0; i < n; ++i) {
    const auto &h = history_[(count_ - n + i) % window_];
    for (size_t k = 0; k < out.size(); ++k) out[k] += h[k];
  }
  for (auto &v : out) v /= double(n);
  return out;
}

std::vector<std::vector<double>> SmoothPosteriors(const std::vector<std::vector<double>> &raw, int window) {
  PosteriorSmoother s(window);
  std::vector<std::vector<double>> out;
  out.reserve(raw.size());
  for (const auto &f : raw) out.push_back(s.Push(f));
  return out;
}

TriggerDetector::TriggerDetector(int num_keywords, const TriggerConfig &config, double frame_period_s)
    : config_(config), frame_period_s_(frame_period_s), armed_(num_keywords, 1), last_(num_keywords, INT_MIN) {
  config_.Validate(num_keywords);
}

std::vector<TriggerEvent> TriggerDetector::Push(int frame, const std::vector<double> &smoothed) {
  if (smoothed.size() != armed_.size())
    throw std::invalid_argument("trigger: " + std::to_string(smoothed.size()) + " posteriors for " +
                                std::to_string(armed_.size()) + " keywords");
  std::vector<TriggerEvent> events;
  for (size_t k = 0; k < armed_.size(); ++k) {
    const double v = smoothed[k];
    if (v < config_.release) armed_[k] = 1;
    const bool rested =
        last_[k] == INT_MIN || double(frame - last_[k]) * frame_period_s_ >= config_.refractory_s - 1e-9;
    if (armed_[k] && rested && v >= config_.Threshold(int(k))) {
      events.push_back({int(k), frame, v, frame * frame_period_s_});
      armed_[k] = 0;
      last_[k] = frame;
    }
  }
  return events;
}

std::vector<TriggerEvent> DetectTriggers(const std::vector<std::vector<double>> &smoothed,
                                         const TriggerConfig &config, double frame_period_s) {
  if (smoothed.empty()) return {};
  TriggerDetector d(int(smoothed[0].size()), config, frame_period_s);
  std::vector<TriggerEvent> out;
  for (size_t t = 0; t < smoothed.size(); ++t) {
    auto e = d.Push(int(t), smoothed[t]);
    out.insert(out.end(), e.begin(), e.end());
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
std::vector<std::vector<T>> Rows(const Tensor<T> &x) {
  const int64_t t = x.dim(1), c = x.dim(2);
  std::vector<std::vector<T>> out(t);
  for (int64_t i = 0; i < t; ++i) out[i].assign(x.data().begin() + i * c, x.data().begin() + (i + 1) * c);
  return out;
}

int ConvOut(int n, int k, int s, int pad) { return (n + 2 * pad - k) / s + 1; }

}  // namespace

template <typename T>
void StreamEngine<T>::Window::Push(const T *frame) {
  std::copy(data.begin() + width, data.end(), data.begin());
  std::copy(frame, frame + width, data.end() - width);
}

template <typename T>
StreamEngine<T>::StreamEngine(std::shared_ptr<const KwsModel<T>> model, int zone, const TriggerConfig &trigger)
    : model_(std::move(model)),
      config_(model_->config()),
      zone_(zone),
      trigger_(trigger),
      smoother_(trigger.window),
      detector_(config_.num_keywords, trigger, FramePeriod()) {
  NoGradGuard guard;
  if (config_.spatial()) {
    embedding_ = model_->EmbedDirection({zone});
    const auto &enc = config_.encoder;
    const int f1 = ConvOut(config_.FreqBins(), enc.kernel, enc.stride_f, (enc.kernel - 1) / 2);
    conv1_in_ = {enc.kernel - 1, config_.FeatureWidth(), {}};
    conv2_in_ = {enc.kernel - 1, f1 * 2 * enc.complex_channels, {}};
    conv1_in_.data.assign(size_t(conv1_in_.past + 1) * conv1_in_.width, T(0));
    conv2_in_.data.assign(size_t(conv2_in_.past + 1) * conv2_in_.width, T(0));
  } else {
    if (zone != 0) throw std::invalid_argument("stream: single-channel models take no zone prior (got " +
                                               std::to_string(zone) + ")");
    fbank_ = std::make_unique<Filterbank>(config_.fbank);
  }
  const auto &md = config_.mdtc;
  for (int s = 0; s < md.stacks; ++s)
    for (int b = 0; b < md.blocks; ++b) {
      Window w{(md.kernel - 1) * md.dilations[b], md.channels, {}};
      w.data.assign(size_t(w.past + 1) * w.width, T(0));
      blocks_.push_back(std::move(w));
    }
}

template <typename T>
double StreamEngine<T>::FramePeriod() const {
  return double(config_.Stride()) * config_.FrameConfig().hop / 16000.0;
}

template <typename T>
int64_t StreamEngine<T>::CompletionSample(int t) const {
  const auto &fc = config_.FrameConfig();
  return int64_t(t) * config_.Stride() * fc.hop + fc.window - 1;
}

template <typename T>
std::vector<CacheInfo> StreamEngine<T>::Caches() const {
  std::vector<CacheInfo> out;
  if (config_.spatial()) {
    out.push_back({"encoder.conv1", conv1_in_.past});
    out.push_back({"encoder.conv2", conv2_in_.past});
  }
  const auto &md = config_.mdtc;
  for (int s = 0; s < md.stacks; ++s)
    for (int b = 0; b < md.blocks; ++b) out.push_back({BlockPrefix(s, b) + "dw", blocks_[s * md.blocks + b].past});
  return out;
}

template <typename T>
std::vector<StreamFrame<T>> StreamEngine<T>::Push(const AudioClip &chunk) {
  MultiChannel x;
  for (const auto &ch : chunk.channels) x.emplace_back(ch.begin(), ch.end());
  return Push(x);
}

template <typename T>
std::vector<StreamFrame<T>> StreamEngine<T>::Push(const MultiChannel &chunk) {
  const size_t want = config_.spatial() ? size_t(config_.Channels()) : 1;
  if (chunk.empty() || (config_.spatial() && chunk.size() != want))
    throw std::invalid_argument("stream: " + ModeName(config_.mode) + " expects " +
                                (config_.spatial() ? std::to_string(want) : std::string("at least 1")) +
                                " channels, got " + std::to_string(chunk.size()));
  for (size_t c = 1; c < chunk.size(); ++c)
    if (chunk[c].size() != chunk[0].size()) throw std::invalid_argument("stream: ragged chunk");
  NoGradGuard guard;
  pending_.resize(want);
  for (size_t c = 0; c < want; ++c) pending_[c].insert(pending_[c].end(), chunk[c].begin(), chunk[c].end());
  samples_ += int64_t(chunk[0].size());

  const StftConfig &fc = config_.FrameConfig();
  out_.clear();
  std::vector<T> features(config_.FeatureWidth());
  while (int(pending_[0].size()) >= fc.window) {
    if (config_.spatial()) {
      const int m = int(want), bins = config_.FreqBins();
      std::vector<std::complex<double>> spec(bins);
      for (int c = 0; c < m; ++c) {
        StftFrame(std::span(pending_[c].data(), fc.window), fc, spec);
        for (int f = 0; f < bins; ++f) {
          features[size_t(f) * 2 * m + c] = T(float(spec[f].real()));
          features[size_t(f) * 2 * m + m + c] = T(float(spec[f].imag()));
        }
      }
    } else {
      std::vector<double> fb(config_.fbank.num_mel);
      fbank_->ComputeFrame(std::span(pending_[0].data(), fc.window), fb);
      for (size_t i = 0; i < fb.size(); ++i) features[i] = T(float(fb[i]));
    }
    for (auto &p : pending_) p.erase(p.begin(), p.begin() + fc.hop);
    OnFeatureFrame(features);
  }
  return std::move(out_);
}

template <typename T>
void StreamEngine<T>::OnFeatureFrame(const std::vector<T> &features) {
  const int index = in_frames_++;
  if (!config_.spatial()) {
    OnEncoded(model_->Encode(Tensor<T>::FromData({1, 1, int64_t(features.size())}, features)));
    return;
  }
  const auto &enc = config_.encoder;
  const Tensor<T> norm =
      model_->Normalize(Tensor<T>::FromData({1, 1, config_.FreqBins(), 2 * enc.in_channels}, features));
  conv1_in_.Push(norm.data().data());
  if (index % enc.stride_t) return;

  const Conv2dOptions opt{enc.stride_t, enc.stride_f, 0, (enc.kernel - 1) / 2};
  const Tensor<T> x1 = Tensor<T>::FromData({1, enc.kernel, config_.FreqBins(), 2 * enc.in_channels}, conv1_in_.data);
  const Tensor<T> y1 =
      Relu(ComplexConv2dPacked(x1, {model_->Param("encoder.conv1.weight_re"), model_->Param("encoder.conv1.weight_im")},
                               {model_->Param("encoder.conv1.bias_re"), model_->Param("encoder.conv1.bias_im")}, opt));
  const int index1 = conv1_frames_++;
  conv2_in_.Push(y1.data().data());
  if (index1 % enc.stride_t) return;

  const Tensor<T> x2 = Tensor<T>::FromData({1, enc.kernel, y1.dim(2), y1.dim(3)}, conv2_in_.data);
  Tensor<T> y2 = Relu(Conv2d(x2, model_->Param("encoder.conv2.weight"), model_->Param("encoder.conv2.bias"), opt));
  y2 = Reshape(y2, {1, 1, y2.dim(2) * y2.dim(3)});
  OnEncoded(Linear(y2, model_->Param("encoder.proj.weight"), model_->Param("encoder.proj.bias")));
}

template <typename T>
void StreamEngine<T>::OnEncoded(const Tensor<T> &encoded) {
  const auto &md = config_.mdtc;
  Tensor<T> h = config_.spatial() ? model_->Fuse(encoded, embedding_) : encoded, total;
  for (int s = 0; s < md.stacks; ++s) {
    for (int b = 0; b < md.blocks; ++b) {
      Window &w = blocks_[s * md.blocks + b];
      w.Push(h.data().data());
      h = model_->Block(Tensor<T>::FromData({1, w.past + 1, w.width}, w.data), s, b, 0);
    }
    total = total.defined() ? Add(total, h) : h;
  }
  const ModelOutput<T> logits = model_->Heads(total);
  StreamFrame<T> f;
  f.frame = emitted_++;
  f.time_s = double(CompletionSample(f.frame) + 1) / 16000.0;
  f.class_posterior = Softmax(logits.class_logits).data();
  f.keyword_posterior = Sigmoid(logits.keyword_logits).data();
  f.smoothed = smoother_.Push(std::vector<double>(f.keyword_posterior.begin(), f.keyword_posterior.end()));
  f.events = detector_.Push(f.frame, f.smoothed);
  for (auto &e : f.events) e.time_s = f.time_s;
  out_.push_back(std::move(f));
}

template <typename T>
Posteriors<T> OfflinePosteriors(const KwsModel<T> &model, const MultiChannel &audio, int zone) {
  NoGradGuard guard;
  const Features feats = ExtractFeatures(audio, model.config());
  const ModelOutput<T> out = model.Forward(BatchFeatures<T>({&feats}, model.config()), {zone});
  return {Rows(Softmax(out.class_logits)), Rows(Sigmoid(out.keyword_logits))};
}

template class StreamEngine<float>;
template class StreamEngine<double>;
template Posteriors<float> OfflinePosteriors(const KwsModel<float> &, const MultiChannel &, int);
template Posteriors<double> OfflinePosteriors(const KwsModel<double> &, const MultiChannel &, int);

}  // namespace dakws

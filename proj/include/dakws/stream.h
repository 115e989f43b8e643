// include/dakws/stream.h

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

#ifndef DAKWS_STREAM_H_
#define DAKWS_STREAM_H_

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dakws/dsp.h"
#include "dakws/net.h"

namespace dakws {

struct TriggerConfig {
  int window = 10;             // smoothing window, model output frames
  double threshold = 0.5;      // used for every keyword unless `thresholds` is set
  std::vector<double> thresholds;
  double refractory_s = 1.0;
  // A keyword re-arms after its smoothed posterior falls below this level.
  double release = 0.25;

  void Validate(int num_keywords) const;
  double Threshold(int keyword) const { return thresholds.empty() ? threshold : thresholds[keyword]; }
};

struct TriggerEvent {
  int keyword = 0;
  int frame = 0;
  double posterior = 0;
  double time_s = 0;
  bool operator==(const TriggerEvent &) const = default;
};

// Trailing moving average over min(W, frames so far) frames.
class PosteriorSmoother {
 public:
  explicit PosteriorSmoother(int window);
  std::vector<double> Push(const std::vector<double> &frame);

 private:
  int window_;
  std::vector<std::vector<double>> history_;  // ring
  size_t count_ = 0;
};

std::vector<std::vector<double>> SmoothPosteriors(const std::vector<std::vector<double>> &raw, int window);

// Armed keywords fire when their smoothed posterior reaches the threshold
// outside the refractory period; firing disarms until the posterior drops
// below the release level.
class TriggerDetector {
 public:
  TriggerDetector(int num_keywords, const TriggerConfig &config, double frame_period_s);
  std::vector<TriggerEvent> Push(int frame, const std::vector<double> &smoothed);

 private:
  TriggerConfig config_;
  double frame_period_s_;
  std::vector<char> armed_;
  std::vector<int> last_;  // frame of last event, or INT_MIN
};

std::vector<TriggerEvent> DetectTriggers(const std::vector<std::vector<double>> &smoothed,
                                         const TriggerConfig &config, double frame_period_s);

template <typename T>
struct StreamFrame {
  int frame = 0;
  double time_s = 0;  // end of the last sample the frame depends on
  std::vector<T> class_posterior;
  std::vector<T> keyword_posterior;
  std::vector<double> smoothed;  // keyword posteriors after smoothing
  std::vector<TriggerEvent> events;
};

struct CacheInfo {
  std::string layer;
  int frames = 0;
};

template <typename T>
class StreamEngine {
 public:
  StreamEngine(std::shared_ptr<const KwsModel<T>> model, int zone, const TriggerConfig &trigger = {});

  // chunk is [channel][sample]. Spatial models need all their channels;
  // single-channel models read channel 0.
  std::vector<StreamFrame<T>> Push(const MultiChannel &chunk);
  std::vector<StreamFrame<T>> Push(const AudioClip &chunk);

  int64_t samples() const { return samples_; }
  int frames() const { return emitted_; }
  double FramePeriod() const;
  // Sample index whose arrival completes output frame t.
  int64_t CompletionSample(int t) const;
  std::vector<CacheInfo> Caches() const;

 private:
  struct Window {
    int past = 0, width = 0;
    std::vector<T> data;  // (past + 1) * width, oldest first
    void Push(const T *frame);
  };

  void OnFeatureFrame(const std::vector<T> &features);
  void OnEncoded(const Tensor<T> &h);

  std::shared_ptr<const KwsModel<T>> model_;
  const ModelConfig &config_;
  int zone_;
  TriggerConfig trigger_;
  std::unique_ptr<Filterbank> fbank_;
  Tensor<T> embedding_;  // [1, d]
  std::vector<std::vector<double>> pending_;
  int64_t samples_ = 0;
  int in_frames_ = 0, conv1_frames_ = 0;
  Window conv1_in_, conv2_in_;
  std::vector<Window> blocks_;
  int emitted_ = 0;
  PosteriorSmoother smoother_;
  TriggerDetector detector_;
  std::vector<StreamFrame<T>> out_;
};

template <typename T>
struct Posteriors {
  std::vector<std::vector<T>> classes;   // [T'][C]
  std::vector<std::vector<T>> keywords;  // [T'][K]
};

// Whole-utterance reference computed with the batch forward pass.
template <typename T>
Posteriors<T> OfflinePosteriors(const KwsModel<T> &model, const MultiChannel &audio, int zone);

}  // namespace dakws

#endif  // DAKWS_STREAM_H_

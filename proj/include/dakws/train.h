// include/dakws/train.h

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

#ifndef DAKWS_TRAIN_H_
#define DAKWS_TRAIN_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dakws/audio_io.h"
#include "dakws/gsc.h"
#include "dakws/net.h"
#include "dakws/tensor.h"

namespace dakws {

// Softmax cross-entropy per frame, summed over valid frames and divided by
// their count. logits [B, T, C]; labels and mask are [B * T].
template <typename T>
Tensor<T> FrameCrossEntropy(const Tensor<T> &logits, const std::vector<int> &labels,
                            const std::vector<uint8_t> &mask);

// Mean binary cross-entropy over valid frames and keywords. Target j of a
// frame is 1 when its label equals keyword j (keywords are classes 0..K-1).
template <typename T>
Tensor<T> KeywordBce(const Tensor<T> &keyword_logits, const std::vector<int> &labels,
                     const std::vector<uint8_t> &mask);

template <typename T>
double FrameAccuracy(const Tensor<T> &logits, const std::vector<int> &labels, const std::vector<uint8_t> &mask);

struct Example {
  std::string id;
  Features features;
  int zone = 0;
  int label = 0;
  int valid_frames = 0;  // model output frames covered by the utterance
};

struct ExampleOptions {
  bool gsc = false;  // beamform to mono first (cascade front end)
  GscConfig gsc_config;
};

// Beamforms a rendered record toward its zone center; mono float output.
AudioClip GscFrontEnd(const AudioClip &clip, int zone, const GscConfig &base = {});

Example MakeExample(const AudioClip &clip, const RenderRecord &record, const ModelConfig &config,
                    const ExampleOptions &options = {});
std::vector<Example> LoadExamples(const std::vector<RenderRecord> &records, const ModelConfig &config,
                                  const ExampleOptions &options = {});

template <typename T>
struct Batch {
  Tensor<T> features;
  std::vector<int> zones;
  std::vector<int> labels;      // [B * T']
  std::vector<uint8_t> mask;    // [B * T'], prefix-true per row
  int frames = 0;               // T'
};

// oracle_prior = false feeds the no-prior token 0 for every utterance.
template <typename T>
Batch<T> MakeBatch(const std::vector<const Example *> &examples, const ModelConfig &config, bool oracle_prior);

struct TrainConfig {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int batch_size = 32;
  int epochs = 20;
  uint64_t seed = 1;
  double lambda = 0.5;  // weight of the keyword BCE term
  bool oracle_prior = true;
  double max_seconds = 0;  // 0 = no wall-clock budget
  std::string log_path;    // JSON-lines per step when set
  std::string checkpoint_dir;
  int checkpoint_every = 0;  // epochs; 0 = only the final best model

  void Validate() const;
  std::string ToJson() const;
  static TrainConfig FromJson(const std::string &text);
};

template <typename T>
class Adam {
 public:
  Adam(const typename KwsModel<T>::NamedTensors &params, const TrainConfig &config);
  void Step();
  int64_t steps() const { return steps_; }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<T>> m_, v_;
  double lr_, b1_, b2_, eps_;
  int64_t steps_ = 0;
};

struct StepMetrics {
  double loss = 0, ce = 0, bce = 0, frame_acc = 0, grad_norm = 0;
};

// One forward/backward/update. Throws on a non-finite loss.
template <typename T>
StepMetrics TrainStep(KwsModel<T> &model, const Batch<T> &batch, Adam<T> &adam, const TrainConfig &config,
                      std::mt19937_64 &rng, int64_t batch_id = 0);

// Loss and frame accuracy in eval mode, no update.
template <typename T>
StepMetrics EvaluateBatch(const KwsModel<T> &model, const Batch<T> &batch, const TrainConfig &config);

// Global input normalization from training examples.
void SetNormalization(KwsModel<float> &model, const std::vector<Example> &train);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0, train_frame_acc = 0;
  double valid_ce = 0, valid_frame_acc = 0, valid_utt_acc = 0;
  double seconds = 0;
};

struct FitResult {
  KwsModel<float> model;
  std::vector<EpochStats> history;
  int best_epoch = 0;  // 0 = initialization
  int64_t steps = 0;
};

FitResult Fit(const std::vector<Example> &train, const std::vector<Example> &valid, const ModelConfig &model_config,
              const TrainConfig &config);

// Argmax over classes of the mean valid-frame class posterior.
std::vector<int> PredictUtterances(const KwsModel<float> &model, const std::vector<Example> &examples,
                                   bool oracle_prior, int batch_size = 32);

}  // namespace dakws

#endif  // DAKWS_TRAIN_H_

// include/dakws/net.h

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

#ifndef DAKWS_NET_H_
#define DAKWS_NET_H_

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dakws/audio_io.h"
#include "dakws/dsp.h"
#include "dakws/tensor.h"

namespace dakws {

enum class ModelMode { kSpatial2, kSpatial3, kSingle };
std::string ModeName(ModelMode mode);
ModelMode ParseMode(const std::string &name);

struct SpatialEncoderConfig {
  int in_channels = 2;       // microphones M
  int complex_channels = 32;  // stage 1, per real/imag part
  int conv_channels = 64;     // stage 2
  int kernel = 3;
  int stride_t = 2, stride_f = 2;
  int proj_dim = 64;  // d
};

struct MdtcConfig {
  int stacks = 4;
  int blocks = 4;  // per stack
  int channels = 64;
  int kernel = 5;
  std::vector<int> dilations = {1, 2, 4, 8};  // one per block

  int ReceptiveField() const;
};

struct ModelConfig {
  ModelMode mode = ModelMode::kSpatial2;
  SpatialEncoderConfig encoder;
  MdtcConfig mdtc;
  StftConfig stft{256, 160, 256};
  FbankConfig fbank;
  int zones = 6;  // K; embedding table has K + 1 rows
  int mlp_hidden = 64;
  double dropout = 0.1;
  int num_classes = 11;
  int num_keywords = 10;

  static ModelConfig Spatial2(int num_keywords = 10);
  static ModelConfig Spatial3(int num_keywords = 10);
  static ModelConfig Single(int num_keywords = 10);

  bool spatial() const { return mode != ModelMode::kSingle; }
  int Channels() const { return spatial() ? encoder.in_channels : 1; }
  int Dim() const { return spatial() ? encoder.proj_dim : mdtc.channels; }
  int FreqBins() const { return stft.NumBins(); }
  // Frequency bins after each strided stage.
  int EncodedBins() const;
  // Width of one feature frame: F * 2M (spatial) or mel bins.
  int FeatureWidth() const;
  int NumFrames(size_t num_samples) const;
  // Output frames for `frames` input frames.
  int OutputFrames(int frames) const;
  // Input frames needed before output frame t can be computed: the last one is t * Stride().
  int Stride() const;
  const StftConfig &FrameConfig() const { return spatial() ? stft : fbank.stft; }

  void Validate() const;
  std::string ToJson() const;
  static ModelConfig FromJson(const std::string &text);
  bool operator==(const ModelConfig &other) const { return ToJson() == other.ToJson(); }
};

// Per-utterance model input, [frames][width] row-major.
struct Features {
  int frames = 0, width = 0;
  std::vector<float> data;
};

Features ExtractFeatures(const AudioClip &clip, const ModelConfig &config);
Features ExtractFeatures(const MultiChannel &audio, const ModelConfig &config);

// Zero-padded batch, [B, T, F, 2M] or [B, T, mel].
template <typename T>
Tensor<T> BatchFeatures(const std::vector<const Features *> &batch, const ModelConfig &config);

template <typename T>
struct ModelOutput {
  Tensor<T> class_logits;    // [B, T', C]
  Tensor<T> keyword_logits;  // [B, T', keywords]; sigmoid gives posteriors
};

template <typename T>
class KwsModel {
 public:
  using NamedTensors = std::vector<std::pair<std::string, Tensor<T>>>;

  explicit KwsModel(const ModelConfig &config, uint64_t seed = 1);

  const ModelConfig &config() const { return config_; }
  NamedTensors &params() { return params_; }
  const NamedTensors &params() const { return params_; }
  // Fixed input normalization, set from training data.
  NamedTensors &buffers() { return buffers_; }
  const NamedTensors &buffers() const { return buffers_; }
  Tensor<T> Param(const std::string &name) const;
  Tensor<T> Buffer(const std::string &name) const;
  int64_t NumParams() const;
  void ZeroGrad();

  ModelOutput<T> Forward(const Tensor<T> &features, const std::vector<int> &zones, bool train = false,
                         std::mt19937_64 *rng = nullptr) const;

  // Stages, exposed for tests and streaming.
  Tensor<T> Normalize(const Tensor<T> &features) const;
  Tensor<T> Encode(const Tensor<T> &features) const;  // H, [B, T', d]
  Tensor<T> EmbedDirection(const std::vector<int> &zones, bool train = false, std::mt19937_64 *rng = nullptr) const;
  Tensor<T> Fuse(const Tensor<T> &h, const Tensor<T> &e) const;
  Tensor<T> Block(const Tensor<T> &x, int stack, int block, int pad_left) const;
  Tensor<T> Backbone(const Tensor<T> &x) const;
  ModelOutput<T> Heads(const Tensor<T> &features) const;

  template <typename U>
  KwsModel<U> Cast() const;

 private:
  KwsModel() = default;
  template <typename U>
  friend class KwsModel;

  Tensor<T> &Add(const std::string &name, const Shape &shape, int64_t fan_in, std::mt19937_64 &rng);
  void AddBuffer(const std::string &name, const Shape &shape, T fill);

  ModelConfig config_;
  NamedTensors params_;
  NamedTensors buffers_;
};

std::string BlockPrefix(int stack, int block);

struct CheckpointMeta {
  int64_t step = 0;
  std::string rng_state;
  std::string extra;  // free-form JSON
};

inline constexpr uint32_t kCheckpointVersion = 1;

void SaveCheckpoint(const KwsModel<float> &model, const std::filesystem::path &path, const CheckpointMeta &meta = {});
// Builds the model from the embedded config.
KwsModel<float> LoadCheckpoint(const std::filesystem::path &path, CheckpointMeta *meta = nullptr);
// Loads into an existing model; every tensor must match its shape.
void LoadCheckpointInto(const std::filesystem::path &path, KwsModel<float> &model, CheckpointMeta *meta = nullptr);

}  // namespace dakws

#endif  // DAKWS_NET_H_

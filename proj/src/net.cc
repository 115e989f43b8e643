// src/net.cc

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

#include "dakws/net.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace dakws {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'D', 'A', 'K', 'W', 'S', 'C', 'K', 'P'};

int StridedLength(int n, int kernel, int stride, int pad) { return (n + pad - kernel) / stride + 1; }

}  // namespace

std::string ModeName(ModelMode mode) {
  switch (mode) {
    case ModelMode::kSpatial2: return "spatial-2ch";
    case ModelMode::kSpatial3: return "spatial-3ch";
    case ModelMode::kSingle: return "single-channel";
  }
  return "?";
}

ModelMode ParseMode(const std::string &name) {
  if (name == "spatial-2ch") return ModelMode::kSpatial2;
  if (name == "spatial-3ch") return ModelMode::kSpatial3;
  if (name == "single-channel") return ModelMode::kSingle;
  throw std::invalid_argument("unknown model mode '" + name + "'");
}

int MdtcConfig::ReceptiveField() const {
  int rf = 1;
  for (int d : dilations) rf += stacks * (kernel - 1) * d;
  return rf;
}

ModelConfig ModelConfig::Spatial2(int num_keywords) {
  ModelConfig c;
  c.mode = ModelMode::kSpatial2;
  c.encoder.in_channels = 2;
  c.zones = 6;
  c.num_keywords = num_keywords;
  c.num_classes = num_keywords + 1;
  return c;
}

ModelConfig ModelConfig::Spatial3(int num_keywords) {
  ModelConfig c = Spatial2(num_keywords);
  c.mode = ModelMode::kSpatial3;
  c.encoder.in_channels = 3;
  c.zones = 12;
  return c;
}

ModelConfig ModelConfig::Single(int num_keywords) {
  ModelConfig c = Spatial2(num_keywords);
  c.mode = ModelMode::kSingle;
  c.encoder.in_channels = 1;
  c.zones = 0;
  return c;
}

int ModelConfig::EncodedBins() const {
  const int pad = (encoder.kernel - 1) / 2;
  const int f1 = StridedLength(FreqBins(), encoder.kernel, encoder.stride_f, 2 * pad);
  return StridedLength(f1, encoder.kernel, encoder.stride_f, 2 * pad);
}

int ModelConfig::FeatureWidth() const {
  return spatial() ? FreqBins() * 2 * encoder.in_channels : fbank.num_mel;
}

int ModelConfig::NumFrames(size_t num_samples) const { return FrameConfig().NumFrames(num_samples); }

int ModelConfig::OutputFrames(int frames) const {
  if (!spatial() || frames < 1) return std::max(frames, 0);
  const int pad = encoder.kernel - 1;
  const int t1 = StridedLength(frames, encoder.kernel, encoder.stride_t, pad);
  return StridedLength(t1, encoder.kernel, encoder.stride_t, pad);
}

int ModelConfig::Stride() const { return spatial() ? encoder.stride_t * encoder.stride_t : 1; }

void ModelConfig::Validate() const {
  if (spatial()) {
    const int m = mode == ModelMode::kSpatial2 ? 2 : 3;
    if (encoder.in_channels != m) throw std::invalid_argument("model config: " + ModeName(mode) + " needs " +
                                                              std::to_string(m) + " input channels");
    if (zones < 1) throw std::invalid_argument("model config: spatial models need K >= 1 zones");
    if (encoder.proj_dim != mdtc.channels)
      throw std::invalid_argument("model config: embedding dim must equal encoder output dim d");
    stft.Validate();
  } else {
    fbank.stft.Validate();
  }
  if (mdtc.stacks < 1 || mdtc.blocks < 1 || mdtc.kernel < 1 || int(mdtc.dilations.size()) != mdtc.blocks)
    throw std::invalid_argument("model config: MDTC needs one dilation per block");
  for (int d : mdtc.dilations)
    if (d < 1) throw std::invalid_argument("model config: dilations must be positive");
  if (num_classes < 2 || num_keywords < 1 || num_keywords >= num_classes)
    throw std::invalid_argument("model config: need 1 <= keywords < classes");
  if (!(dropout >= 0 && dropout < 1)) throw std::invalid_argument("model config: dropout must lie in [0, 1)");
}

std::string ModelConfig::ToJson() const {
  json j;
  j["mode"] = ModeName(mode);
  j["encoder"] = {{"in_channels", encoder.in_channels}, {"complex_channels", encoder.complex_channels},
                  {"conv_channels", encoder.conv_channels}, {"kernel", encoder.kernel},
                  {"stride_t", encoder.stride_t},           {"stride_f", encoder.stride_f},
                  {"proj_dim", encoder.proj_dim}};
  j["mdtc"] = {{"stacks", mdtc.stacks},
               {"blocks", mdtc.blocks},
               {"channels", mdtc.channels},
               {"kernel", mdtc.kernel},
               {"dilations", mdtc.dilations}};
  j["stft"] = {{"window", stft.window}, {"hop", stft.hop}, {"fft", stft.fft}};
  j["fbank"] = {{"window", fbank.stft.window}, {"hop", fbank.stft.hop}, {"fft", fbank.stft.fft},
                {"num_mel", fbank.num_mel},    {"low_hz", fbank.low_hz}, {"high_hz", fbank.high_hz}};
  j["zones"] = zones;
  j["mlp_hidden"] = mlp_hidden;
  j["dropout"] = dropout;
  j["num_classes"] = num_classes;
  j["num_keywords"] = num_keywords;
  return j.dump();
}

ModelConfig ModelConfig::FromJson(const std::string &text) {
  const json j = json::parse(text);
  ModelConfig c;
  c.mode = ParseMode(j.at("mode").get<std::string>());
  const auto &e = j.at("encoder");
  c.encoder = {e.at("in_channels"), e.at("complex_channels"), e.at("conv_channels"), e.at("kernel"),
               e.at("stride_t"),    e.at("stride_f"),         e.at("proj_dim")};
  const auto &m = j.at("mdtc");
  c.mdtc = {m.at("stacks"), m.at("blocks"), m.at("channels"), m.at("kernel"),
            m.at("dilations").get<std::vector<int>>()};
  const auto &s = j.at("stft");
  c.stft.window = s.at("window");
  c.stft.hop = s.at("hop");
  c.stft.fft = s.at("fft");
  const auto &f = j.at("fbank");
  c.fbank.stft.window = f.at("window");
  c.fbank.stft.hop = f.at("hop");
  c.fbank.stft.fft = f.at("fft");
  c.fbank.num_mel = f.at("num_mel");
  c.fbank.low_hz = f.at("low_hz");
  c.fbank.high_hz = f.at("high_hz");
  c.zones = j.at("zones");
  c.mlp_hidden = j.at("mlp_hidden");
  c.dropout = j.at("dropout");
  c.num_classes = j.at("num_classes");
  c.num_keywords = j.at("num_keywords");
  c.Validate();
  return c;
}

// ---------------------------------------------------------------------------

Features ExtractFeatures(const MultiChannel &audio, const ModelConfig &config) {
  Features out;
  if (config.spatial()) {
    const int m = config.encoder.in_channels;
    if (int(audio.size()) != m)
      throw std::invalid_argument("features: " + ModeName(config.mode) + " expects " + std::to_string(m) +
                                  " channels, got " + std::to_string(audio.size()));
    const ComplexSpectrogram spec = Stft(audio, config.stft);
    out.frames = spec.frames;
    out.width = config.FeatureWidth();
    out.data.resize(size_t(out.frames) * out.width);
    for (int t = 0; t < spec.frames; ++t)
      for (int f = 0; f < spec.bins; ++f)
        for (int c = 0; c < m; ++c) {
          const auto v = spec.at(c, t, f);
          float *p = out.data.data() + (size_t(t) * spec.bins + f) * 2 * m;
          p[c] = static_cast<float>(v.real());
          p[m + c] = static_cast<float>(v.imag());
        }
  } else {
    if (audio.empty()) throw std::invalid_argument("features: no channels");
    // Single-channel systems consume the first microphone only.
    const FbankFeatures fb = Filterbank(config.fbank).Compute(audio[0]);
    out.frames = fb.frames;
    out.width = fb.bins;
    out.data.assign(fb.data.begin(), fb.data.end());
  }
  return out;
}

Features ExtractFeatures(const AudioClip &clip, const ModelConfig &config) {
  if (clip.sample_rate != 16000)
    throw std::invalid_argument("features: sample rate " + std::to_string(clip.sample_rate) + " != 16000");
  MultiChannel audio;
  const size_t use = config.spatial() ? clip.channels.size() : std::min<size_t>(1, clip.channels.size());
  for (size_t c = 0; c < use; ++c) audio.emplace_back(clip.channels[c].begin(), clip.channels[c].end());
  return ExtractFeatures(audio, config);
}

template <typename T>
Tensor<T> BatchFeatures(const std::vector<const Features *> &batch, const ModelConfig &config) {
  if (batch.empty()) throw std::invalid_argument("BatchFeatures: empty batch");
  int tmax = 0;
  const int width = config.FeatureWidth();
  for (const auto *f : batch) {
    if (f->width != width)
      throw std::invalid_argument("BatchFeatures: feature width " + std::to_string(f->width) + " != " +
                                  std::to_string(width));
    tmax = std::max(tmax, f->frames);
  }
  const int64_t b = int64_t(batch.size());
  std::vector<T> data(size_t(b) * tmax * width, T(0));
  for (int64_t i = 0; i < b; ++i)
    std::copy(batch[i]->data.begin(), batch[i]->data.end(), data.begin() + i * tmax * width);
  Shape shape = config.spatial() ? Shape{b, tmax, config.FreqBins(), 2 * config.encoder.in_channels}
                                 : Shape{b, tmax, width};
  return Tensor<T>::FromData(shape, std::move(data));
}

// ---------------------------------------------------------------------------

std::string BlockPrefix(int stack, int block) {
  return "mdtc.s" + std::to_string(stack) + ".b" + std::to_string(block) + ".";
}

template <typename T>
Tensor<T> &KwsModel<T>::Add(const std::string &name, const Shape &shape, int64_t fan_in, std::mt19937_64 &rng) {
  const double bound = 1.0 / std::sqrt(double(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<T> v(NumElements(shape));
  for (auto &x : v) x = T(u(rng));
  params_.emplace_back(name, Tensor<T>::Param(shape, std::move(v)));
  return params_.back().second;
}

template <typename T>
void KwsModel<T>::AddBuffer(const std::string &name, const Shape &shape, T fill) {
  buffers_.emplace_back(name, Tensor<T>::Full(shape, fill));
}

template <typename T>
KwsModel<T>::KwsModel(const ModelConfig &config, uint64_t seed) : config_(config) {
  config_.Validate();
  std::mt19937_64 rng(seed);
  const auto &enc = config_.encoder;
  const int d = config_.Dim();
  if (config_.spatial()) {
    const int m = enc.in_channels, k = enc.kernel, c1 = enc.complex_channels, c2 = enc.conv_channels;
    const int64_t fan1 = int64_t(2) * m * k * k;
    Add("encoder.conv1.weight_re", {c1, k, k, m}, fan1, rng);
    Add("encoder.conv1.weight_im", {c1, k, k, m}, fan1, rng);
    Add("encoder.conv1.bias_re", {c1}, fan1, rng);
    Add("encoder.conv1.bias_im", {c1}, fan1, rng);
    Add("encoder.conv2.weight", {c2, k, k, 2 * c1}, int64_t(2) * c1 * k * k, rng);
    Add("encoder.conv2.bias", {c2}, int64_t(2) * c1 * k * k, rng);
    const int flat = config_.EncodedBins() * c2;
    Add("encoder.proj.weight", {d, flat}, flat, rng);
    Add("encoder.proj.bias", {d}, flat, rng);

    std::normal_distribution<double> g(0, 1);
    std::vector<T> table(size_t(config_.zones + 1) * d);
    for (auto &x : table) x = T(g(rng));
    params_.emplace_back("embed.table", Tensor<T>::Param({config_.zones + 1, d}, std::move(table)));
    Add("embed.fc1.weight", {config_.mlp_hidden, d}, d, rng);
    Add("embed.fc1.bias", {config_.mlp_hidden}, d, rng);
    Add("embed.fc2.weight", {d, config_.mlp_hidden}, config_.mlp_hidden, rng);
    Add("embed.fc2.bias", {d}, config_.mlp_hidden, rng);
    params_.emplace_back("embed.ln.gain", Tensor<T>::Param({d}, std::vector<T>(d, T(1))));
    params_.emplace_back("embed.ln.bias", Tensor<T>::Param({d}, std::vector<T>(d, T(0))));
    AddBuffer("input.scale", {1}, T(1));
  } else {
    const int mel = config_.fbank.num_mel;
    Add("frontend.proj.weight", {d, mel}, mel, rng);
    Add("frontend.proj.bias", {d}, mel, rng);
    AddBuffer("cmvn.mean", {mel}, T(0));
    AddBuffer("cmvn.istd", {mel}, T(1));
  }
  const auto &md = config_.mdtc;
  for (int s = 0; s < md.stacks; ++s)
    for (int b = 0; b < md.blocks; ++b) {
      const std::string p = BlockPrefix(s, b);
      Add(p + "dw.weight", {md.channels, md.kernel}, md.kernel, rng);
      Add(p + "dw.bias", {md.channels}, md.kernel, rng);
      Add(p + "pw1.weight", {md.channels, md.channels}, md.channels, rng);
      Add(p + "pw1.bias", {md.channels}, md.channels, rng);
      Add(p + "pw2.weight", {md.channels, md.channels}, md.channels, rng);
      Add(p + "pw2.bias", {md.channels}, md.channels, rng);
    }
  Add("head.class.weight", {config_.num_classes, d}, d, rng);
  Add("head.class.bias", {config_.num_classes}, d, rng);
  Add("head.keyword.weight", {config_.num_keywords, d}, d, rng);
  Add("head.keyword.bias", {config_.num_keywords}, d, rng);
}

template <typename T>
Tensor<T> KwsModel<T>::Param(const std::string &name) const {
  for (const auto &[n, t] : params_)
    if (n == name) return t;
  throw std::out_of_range("model has no parameter '" + name + "'");
}

template <typename T>
Tensor<T> KwsModel<T>::Buffer(const std::string &name) const {
  for (const auto &[n, t] : buffers_)
    if (n == name) return t;
  throw std::out_of_range("model has no buffer '" + name + "'");
}

template <typename T>
int64_t KwsModel<T>::NumParams() const {
  int64_t n = 0;
  for (const auto &[name, t] : params_) n += t.numel();
  return n;
}

template <typename T>
void KwsModel<T>::ZeroGrad() {
  for (auto &[name, t] : params_) t.ZeroGrad();
}

template <typename T>
Tensor<T> KwsModel<T>::Normalize(const Tensor<T> &features) const {
  std::vector<T> v(features.data());
  if (config_.spatial()) {
    const T s = Buffer("input.scale").data()[0];
    for (auto &x : v) x *= s;
  } else {
    const auto &mean = Buffer("cmvn.mean").data(), &istd = Buffer("cmvn.istd").data();
    const size_t w = mean.size();
    for (size_t i = 0; i < v.size(); ++i) v[i] = (v[i] - mean[i % w]) * istd[i % w];
  }
  return Tensor<T>::FromData(features.shape(), std::move(v));
}

template <typename T>
Tensor<T> KwsModel<T>::Encode(const Tensor<T> &features) const {
  const auto &enc = config_.encoder;
  if (!config_.spatial()) {
    if (features.ndim() != 3 || features.dim(2) != config_.fbank.num_mel)
      throw std::invalid_argument("Encode: expected [B, T, " + std::to_string(config_.fbank.num_mel) +
                                  "] fbank input, got " + ShapeString(features.shape()));
    return Linear(Normalize(features), Param("frontend.proj.weight"), Param("frontend.proj.bias"));
  }
  if (features.ndim() != 4 || features.dim(3) != 2 * enc.in_channels || features.dim(2) != config_.FreqBins())
    throw std::invalid_argument("Encode: expected [B, T, " + std::to_string(config_.FreqBins()) + ", " +
                                std::to_string(2 * enc.in_channels) + "] spectrogram, got " +
                                ShapeString(features.shape()));
  if (features.dim(1) < 1) throw std::invalid_argument("Encode: no input frames");
  const Conv2dOptions opt{enc.stride_t, enc.stride_f, enc.kernel - 1, (enc.kernel - 1) / 2};
  Tensor<T> x = Normalize(features);
  x = Relu(ComplexConv2dPacked(x, {Param("encoder.conv1.weight_re"), Param("encoder.conv1.weight_im")},
                               {Param("encoder.conv1.bias_re"), Param("encoder.conv1.bias_im")}, opt));
  x = Relu(Conv2d(x, Param("encoder.conv2.weight"), Param("encoder.conv2.bias"), opt));
  x = Reshape(x, {x.dim(0), x.dim(1), x.dim(2) * x.dim(3)});
  return Linear(x, Param("encoder.proj.weight"), Param("encoder.proj.bias"));
}

template <typename T>
Tensor<T> KwsModel<T>::EmbedDirection(const std::vector<int> &zones, bool train, std::mt19937_64 *rng) const {
  if (!config_.spatial()) throw std::logic_error("EmbedDirection: single-channel models have no zone prior");
  for (int z : zones)
    if (z < 0 || z > config_.zones)
      throw std::out_of_range("zone label " + std::to_string(z) + " outside [0, " + std::to_string(config_.zones) +
                              "]");
  if (train && config_.dropout > 0 && !rng) throw std::invalid_argument("EmbedDirection: train mode needs an rng");
  std::mt19937_64 unused;
  Tensor<T> e = Embedding(Param("embed.table"), zones);
  e = Relu(Linear(e, Param("embed.fc1.weight"), Param("embed.fc1.bias")));
  e = Linear(e, Param("embed.fc2.weight"), Param("embed.fc2.bias"));
  e = Dropout(e, T(config_.dropout), train, rng ? *rng : unused);
  return LayerNorm(e, Param("embed.ln.gain"), Param("embed.ln.bias"));
}

template <typename T>
Tensor<T> KwsModel<T>::Fuse(const Tensor<T> &h, const Tensor<T> &e) const {
  return AddOverTime(h, e);
}

template <typename T>
Tensor<T> KwsModel<T>::Block(const Tensor<T> &x, int stack, int block, int pad_left) const {
  const std::string p = BlockPrefix(stack, block);
  Tensor<T> y = DepthwiseConv1d(x, Param(p + "dw.weight"), Param(p + "dw.bias"), config_.mdtc.dilations[block],
                                pad_left);
  y = Relu(Linear(y, Param(p + "pw1.weight"), Param(p + "pw1.bias")));
  y = Linear(y, Param(p + "pw2.weight"), Param(p + "pw2.bias"));
  const int64_t tin = x.dim(1), tout = y.dim(1);
  return ::dakws::Add(tout == tin ? x : Slice(x, 1, tin - tout, tin), y);
}

template <typename T>
Tensor<T> KwsModel<T>::Backbone(const Tensor<T> &x) const {
  const auto &md = config_.mdtc;
  if (x.ndim() != 3 || x.dim(2) != md.channels)
    throw std::invalid_argument("Backbone: expected [B, T, " + std::to_string(md.channels) + "], got " +
                                ShapeString(x.shape()));
  Tensor<T> h = x, total;
  for (int s = 0; s < md.stacks; ++s) {
    for (int b = 0; b < md.blocks; ++b) h = Block(h, s, b, (md.kernel - 1) * md.dilations[b]);
    total = total.defined() ? ::dakws::Add(total, h) : h;
  }
  return total;
}

template <typename T>
ModelOutput<T> KwsModel<T>::Heads(const Tensor<T> &features) const {
  return {Linear(features, Param("head.class.weight"), Param("head.class.bias")),
          Linear(features, Param("head.keyword.weight"), Param("head.keyword.bias"))};
}

template <typename T>
ModelOutput<T> KwsModel<T>::Forward(const Tensor<T> &features, const std::vector<int> &zones, bool train,
                                    std::mt19937_64 *rng) const {
  Tensor<T> h = Encode(features);
  if (config_.spatial()) {
    if (int64_t(zones.size()) != h.dim(0))
      throw std::invalid_argument("Forward: " + std::to_string(zones.size()) + " zone labels for batch of " +
                                  std::to_string(h.dim(0)));
    h = Fuse(h, EmbedDirection(zones, train, rng));
  }
  return Heads(Backbone(h));
}

template <typename T>
template <typename U>
KwsModel<U> KwsModel<T>::Cast() const {
  KwsModel<U> out;
  out.config_ = config_;
  for (const auto &[n, t] : params_) out.params_.emplace_back(n, t.template Cast<U>());
  for (const auto &[n, t] : buffers_) out.buffers_.emplace_back(n, t.template Cast<U>());
  return out;
}

template class KwsModel<float>;
template class KwsModel<double>;
template KwsModel<double> KwsModel<float>::Cast<double>() const;
template KwsModel<float> KwsModel<double>::Cast<float>() const;
template KwsModel<float> KwsModel<float>::Cast<float>() const;
template Tensor<float> BatchFeatures<float>(const std::vector<const Features *> &, const ModelConfig &);
template Tensor<double> BatchFeatures<double>(const std::vector<const Features *> &, const ModelConfig &);

// ---------------------------------------------------------------------------
// Checkpoints: magic, version, JSON header, tensor index, float32 blobs.

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename V>
void Put(std::string &buf, V v) {
  buf.append(reinterpret_cast<const char *>(&v), sizeof(V));
}

class Reader {
 public:
  Reader(const std::string &data, const std::string &path) : data_(data), path_(path) {}
  template <typename V>
  V Get() {
    V v;
    Need(sizeof(V));
    std::memcpy(&v, data_.data() + pos_, sizeof(V));
    pos_ += sizeof(V);
    return v;
  }
  std::string Bytes(size_t n) {
    Need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  size_t pos() const { return pos_; }
  void Need(size_t n) const {
    if (pos_ + n > data_.size()) throw std::runtime_error("checkpoint " + path_ + ": truncated file");
  }

 private:
  const std::string &data_;
  std::string path_;
  size_t pos_ = 0;
};

struct Loaded {
  ModelConfig config;
  CheckpointMeta meta;
  std::map<std::string, std::pair<Shape, std::vector<float>>> tensors;
};

Loaded ReadCheckpoint(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  const std::string data((std::istreambuf_iterator<char>(in)), {});
  Reader r(data, path.string());
  if (r.Bytes(8) != std::string(kMagic, 8)) throw std::runtime_error("checkpoint " + path.string() + ": bad magic");
  const uint32_t version = r.Get<uint32_t>();
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint " + path.string() + ": unsupported version " + std::to_string(version));
  const json header = json::parse(r.Bytes(r.Get<uint32_t>()));
  Loaded out;
  out.config = ModelConfig::FromJson(header.at("config").dump());
  out.meta.step = header.value("step", int64_t(0));
  out.meta.rng_state = header.value("rng_state", std::string());
  out.meta.extra = header.contains("extra") ? header["extra"].dump() : std::string();
  const uint32_t count = r.Get<uint32_t>();
  std::vector<std::pair<std::string, Shape>> index;
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = r.Bytes(r.Get<uint32_t>());
    Shape shape(r.Get<uint32_t>());
    for (auto &d : shape) d = r.Get<int64_t>();
    index.emplace_back(std::move(name), std::move(shape));
  }
  for (auto &[name, shape] : index) {
    std::vector<float> v(NumElements(shape));
    const std::string blob = r.Bytes(v.size() * sizeof(float));
    std::memcpy(v.data(), blob.data(), blob.size());
    out.tensors[name] = {shape, std::move(v)};
  }
  if (r.pos() != data.size()) throw std::runtime_error("checkpoint " + path.string() + ": trailing bytes");
  return out;
}

void Install(Loaded &loaded, KwsModel<float> &model, const std::string &path) {
  // Validate everything first so a failed load leaves the model untouched.
  size_t expected = 0;
  auto check = [&](const std::string &name, const Tensor<float> &t) {
    auto it = loaded.tensors.find(name);
    if (it == loaded.tensors.end()) throw std::runtime_error("checkpoint " + path + ": missing tensor '" + name + "'");
    if (it->second.first != t.shape())
      throw std::runtime_error("checkpoint " + path + ": shape mismatch for '" + name + "': file " +
                               ShapeString(it->second.first) + ", model " + ShapeString(t.shape()));
    ++expected;
  };
  for (const auto &[n, t] : model.params()) check(n, t);
  for (const auto &[n, t] : model.buffers()) check(n, t);
  if (expected != loaded.tensors.size())
    throw std::runtime_error("checkpoint " + path + ": file has tensors the model does not know");
  for (auto &[n, t] : model.params()) t.data() = loaded.tensors[n].second;
  for (auto &[n, t] : model.buffers()) t.data() = loaded.tensors[n].second;
}

}  // namespace

void SaveCheckpoint(const KwsModel<float> &model, const std::filesystem::path &path, const CheckpointMeta &meta) {
  std::string buf(kMagic, 8);
  Put<uint32_t>(buf, kCheckpointVersion);
  json header;
  header["config"] = json::parse(model.config().ToJson());
  header["step"] = meta.step;
  header["rng_state"] = meta.rng_state;
  if (!meta.extra.empty()) header["extra"] = json::parse(meta.extra);
  const std::string h = header.dump();
  Put<uint32_t>(buf, uint32_t(h.size()));
  buf += h;
  std::vector<std::pair<std::string, Tensor<float>>> all(model.params());
  all.insert(all.end(), model.buffers().begin(), model.buffers().end());
  Put<uint32_t>(buf, uint32_t(all.size()));
  for (const auto &[name, t] : all) {
    Put<uint32_t>(buf, uint32_t(name.size()));
    buf += name;
    Put<uint32_t>(buf, uint32_t(t.ndim()));
    for (int64_t d : t.shape()) Put<int64_t>(buf, d);
  }
  for (const auto &[name, t] : all)
    buf.append(reinterpret_cast<const char *>(t.data().data()), t.data().size() * sizeof(float));

  // Write-then-rename keeps a crash from leaving a half-written checkpoint.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + tmp.string());
    out.write(buf.data(), std::streamsize(buf.size()));
    if (!out) throw std::runtime_error("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

KwsModel<float> LoadCheckpoint(const std::filesystem::path &path, CheckpointMeta *meta) {
  Loaded loaded = ReadCheckpoint(path);
  KwsModel<float> model(loaded.config);
  Install(loaded, model, path.string());
  if (meta) *meta = loaded.meta;
  return model;
}

void LoadCheckpointInto(const std::filesystem::path &path, KwsModel<float> &model, CheckpointMeta *meta) {
  Loaded loaded = ReadCheckpoint(path);
  Install(loaded, model, path.string());
  if (meta) *meta = loaded.meta;
}

}  // namespace dakws

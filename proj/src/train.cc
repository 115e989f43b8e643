// src/train.cc

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

#include "dakws/train.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace dakws {

namespace {

void CheckLossInputs(const char *op, const Shape &shape, const std::vector<int> &labels,
                     const std::vector<uint8_t> &mask, int64_t *rows, int64_t *valid) {
  if (shape.size() != 3) throw std::invalid_argument(std::string(op) + ": expected [B, T, C], got " + ShapeString(shape));
  *rows = shape[0] * shape[1];
  if (int64_t(labels.size()) != *rows || int64_t(mask.size()) != *rows)
    throw std::invalid_argument(std::string(op) + ": labels/mask size " + std::to_string(labels.size()) + "/" +
                                std::to_string(mask.size()) + " for " + ShapeString(shape));
  *valid = std::count_if(mask.begin(), mask.end(), [](uint8_t m) { return m != 0; });
  if (*valid == 0) throw std::invalid_argument(std::string(op) + ": every frame is masked");
}

}  // namespace

template <typename T>
Tensor<T> FrameCrossEntropy(const Tensor<T> &logits, const std::vector<int> &labels,
                            const std::vector<uint8_t> &mask) {
  int64_t rows, n;
  CheckLossInputs("FrameCrossEntropy", logits.shape(), labels, mask, &rows, &n);
  const int64_t c = logits.dim(2);
  auto probs = std::make_shared<std::vector<T>>(logits.numel(), T(0));
  double total = 0;
  for (int64_t r = 0; r < rows; ++r) {
    if (!mask[r]) continue;
    if (labels[r] < 0 || labels[r] >= c)
      throw std::invalid_argument("FrameCrossEntropy: label " + std::to_string(labels[r]) + " outside [0, " +
                                  std::to_string(c) + ")");
    const T *l = logits.data().data() + r * c;
    T *p = probs->data() + r * c;
    const T mx = *std::max_element(l, l + c);
    T s = 0;
    for (int64_t j = 0; j < c; ++j) s += (p[j] = std::exp(l[j] - mx));
    for (int64_t j = 0; j < c; ++j) p[j] /= s;
    total += double(mx + std::log(s) - l[labels[r]]);
  }
  auto nl = logits.node();
  return MakeResult<T>("frame_ce", {}, {T(total / double(n))}, {logits}, [=](Node<T> &o) {
    const T g = o.grad[0] / T(n);
    auto &dst = nl->Grad();
    for (int64_t r = 0; r < rows; ++r) {
      if (!mask[r]) continue;
      for (int64_t j = 0; j < c; ++j) dst[r * c + j] += g * ((*probs)[r * c + j] - (j == labels[r] ? T(1) : T(0)));
    }
  });
}

template <typename T>
Tensor<T> KeywordBce(const Tensor<T> &keyword_logits, const std::vector<int> &labels,
                     const std::vector<uint8_t> &mask) {
  int64_t rows, n;
  CheckLossInputs("KeywordBce", keyword_logits.shape(), labels, mask, &rows, &n);
  const int64_t k = keyword_logits.dim(2);
  double total = 0;
  for (int64_t r = 0; r < rows; ++r) {
    if (!mask[r]) continue;
    for (int64_t j = 0; j < k; ++j) {
      const T x = keyword_logits.data()[r * k + j];
      const T y = labels[r] == j ? T(1) : T(0);
      total += double(std::max(x, T(0)) - x * y + std::log1p(std::exp(-std::abs(x))));
    }
  }
  const double denom = double(n) * double(k);
  auto nl = keyword_logits.node();
  return MakeResult<T>("keyword_bce", {}, {T(total / denom)}, {keyword_logits}, [=](Node<T> &o) {
    const T g = o.grad[0] / T(denom);
    auto &dst = nl->Grad();
    for (int64_t r = 0; r < rows; ++r) {
      if (!mask[r]) continue;
      for (int64_t j = 0; j < k; ++j) {
        const T x = nl->value[r * k + j];
        const T s = x >= 0 ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
        dst[r * k + j] += g * (s - (labels[r] == j ? T(1) : T(0)));
      }
    }
  });
}

template <typename T>
double FrameAccuracy(const Tensor<T> &logits, const std::vector<int> &labels, const std::vector<uint8_t> &mask) {
  if (logits.ndim() != 3) throw std::invalid_argument("FrameAccuracy: expected [B, T, C]");
  const int64_t c = logits.dim(2), rows = logits.dim(0) * logits.dim(1);
  int64_t hit = 0, n = 0;
  for (int64_t r = 0; r < rows; ++r) {
    if (!mask[r]) continue;
    const T *l = logits.data().data() + r * c;
    hit += (std::max_element(l, l + c) - l) == labels[r];
    ++n;
  }
  return n ? double(hit) / double(n) : 0.0;
}

// ---------------------------------------------------------------------------

AudioClip GscFrontEnd(const AudioClip &clip, int zone, const GscConfig &base) {
  const ArrayGeometry geometry = ArrayGeometry::ForChannels(clip.NumChannels());
  GscConfig cfg = base;
  if (zone > 0) cfg.steer_azimuth_deg = ZoneSteeringAzimuth(geometry, zone);
  MultiChannel x;
  for (const auto &ch : clip.channels) x.emplace_back(ch.begin(), ch.end());
  const GscResult r = GscProcess(x, geometry, cfg);
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.channels.emplace_back(r.enhanced.begin(), r.enhanced.end());
  return out;
}

Example MakeExample(const AudioClip &clip, const RenderRecord &record, const ModelConfig &config,
                    const ExampleOptions &options) {
  Example ex;
  ex.id = record.path;
  ex.zone = record.zone;
  ex.label = record.class_index;
  if (ex.label < 0 || ex.label >= config.num_classes)
    throw std::invalid_argument("example " + record.path + ": class " + std::to_string(ex.label) +
                                " outside the model's " + std::to_string(config.num_classes) + " classes");
  if (options.gsc) {
    if (config.spatial()) throw std::invalid_argument("GSC front end feeds single-channel models only");
    ex.features = ExtractFeatures(GscFrontEnd(clip, record.zone, options.gsc_config), config);
  } else {
    ex.features = ExtractFeatures(clip, config);
  }
  ex.valid_frames = config.OutputFrames(ex.features.frames);
  if (ex.valid_frames < 1) throw std::invalid_argument("example " + record.path + ": shorter than one frame");
  return ex;
}

std::vector<Example> LoadExamples(const std::vector<RenderRecord> &records, const ModelConfig &config,
                                  const ExampleOptions &options) {
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto &r : records) out.push_back(MakeExample(ReadWav(r.path), r, config, options));
  return out;
}

template <typename T>
Batch<T> MakeBatch(const std::vector<const Example *> &examples, const ModelConfig &config, bool oracle_prior) {
  Batch<T> b;
  std::vector<const Features *> feats;
  for (const auto *e : examples) feats.push_back(&e->features);
  b.features = BatchFeatures<T>(feats, config);
  b.frames = config.OutputFrames(int(b.features.dim(1)));
  for (const auto *e : examples) {
    b.zones.push_back(oracle_prior ? e->zone : 0);
    for (int t = 0; t < b.frames; ++t) {
      b.labels.push_back(e->label);
      b.mask.push_back(t < e->valid_frames ? 1 : 0);
    }
  }
  return b;
}

// ---------------------------------------------------------------------------

void TrainConfig::Validate() const {
  if (!(lr >= 0)) throw std::invalid_argument("train config: lr must be >= 0");
  if (!(lambda >= 0)) throw std::invalid_argument("train config: lambda must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("train config: batch size must be positive");
  if (epochs < 0) throw std::invalid_argument("train config: epochs must be >= 0");
}

std::string TrainConfig::ToJson() const {
  nlohmann::json j = {{"lr", lr},           {"beta1", beta1},
                      {"beta2", beta2},     {"eps", eps},
                      {"batch_size", batch_size}, {"epochs", epochs},
                      {"seed", seed},       {"lambda", lambda},
                      {"prior", oracle_prior ? "oracle" : "none"},
                      {"max_seconds", max_seconds}, {"log_path", log_path},
                      {"checkpoint_dir", checkpoint_dir}, {"checkpoint_every", checkpoint_every}};
  return j.dump();
}

TrainConfig TrainConfig::FromJson(const std::string &text) {
  const auto j = nlohmann::json::parse(text);
  TrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.lambda = j.value("lambda", c.lambda);
  const std::string prior = j.value("prior", std::string("oracle"));
  if (prior != "oracle" && prior != "none") throw std::invalid_argument("train config: prior must be oracle or none");
  c.oracle_prior = prior == "oracle";
  c.max_seconds = j.value("max_seconds", c.max_seconds);
  c.log_path = j.value("log_path", c.log_path);
  c.checkpoint_dir = j.value("checkpoint_dir", c.checkpoint_dir);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.Validate();
  return c;
}

template <typename T>
Adam<T>::Adam(const typename KwsModel<T>::NamedTensors &params, const TrainConfig &config)
    : lr_(config.lr), b1_(config.beta1), b2_(config.beta2), eps_(config.eps) {
  for (const auto &[name, t] : params) {
    params_.push_back(t);
    m_.emplace_back(t.numel(), T(0));
    v_.emplace_back(t.numel(), T(0));
  }
}

template <typename T>
void Adam<T>::Step() {
  ++steps_;
  const double c1 = 1 - std::pow(b1_, double(steps_)), c2 = 1 - std::pow(b2_, double(steps_));
  for (size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) continue;
    auto &p = params_[i].data();
    const auto &g = params_[i].grad();
    auto &m = m_[i], &v = v_[i];
    for (size_t j = 0; j < p.size(); ++j) {
      m[j] = T(b1_) * m[j] + T(1 - b1_) * g[j];
      v[j] = T(b2_) * v[j] + T(1 - b2_) * g[j] * g[j];
      const double mh = m[j] / c1, vh = v[j] / c2;
      p[j] -= T(lr_ * mh / (std::sqrt(vh) + eps_));
    }
  }
}

template <typename T>
StepMetrics TrainStep(KwsModel<T> &model, const Batch<T> &batch, Adam<T> &adam, const TrainConfig &config,
                      std::mt19937_64 &rng, int64_t batch_id) {
  model.ZeroGrad();
  const ModelOutput<T> out = model.Forward(batch.features, batch.zones, true, &rng);
  const Tensor<T> ce = FrameCrossEntropy(out.class_logits, batch.labels, batch.mask);
  const Tensor<T> bce = KeywordBce(out.keyword_logits, batch.labels, batch.mask);
  const Tensor<T> loss = config.lambda > 0 ? Add(ce, Scale(bce, T(config.lambda))) : ce;
  StepMetrics m;
  m.loss = loss.item();
  m.ce = ce.item();
  m.bce = bce.item();
  if (!std::isfinite(m.loss)) throw std::runtime_error("non-finite loss at batch " + std::to_string(batch_id));
  m.frame_acc = FrameAccuracy(out.class_logits, batch.labels, batch.mask);
  loss.Backward();
  double g2 = 0;
  for (const auto &[name, p] : model.params())
    if (p.has_grad())
      for (T g : p.grad()) g2 += double(g) * double(g);
  m.grad_norm = std::sqrt(g2);
  adam.Step();
  return m;
}

template <typename T>
StepMetrics EvaluateBatch(const KwsModel<T> &model, const Batch<T> &batch, const TrainConfig &config) {
  NoGradGuard guard;
  const ModelOutput<T> out = model.Forward(batch.features, batch.zones, false);
  StepMetrics m;
  m.ce = FrameCrossEntropy(out.class_logits, batch.labels, batch.mask).item();
  m.bce = KeywordBce(out.keyword_logits, batch.labels, batch.mask).item();
  m.loss = m.ce + config.lambda * m.bce;
  m.frame_acc = FrameAccuracy(out.class_logits, batch.labels, batch.mask);
  return m;
}

void SetNormalization(KwsModel<float> &model, const std::vector<Example> &train) {
  if (train.empty()) throw std::invalid_argument("SetNormalization: empty training set");
  if (model.config().spatial()) {
    double s2 = 0;
    size_t n = 0;
    for (const auto &e : train) {
      for (float v : e.features.data) s2 += double(v) * v;
      n += e.features.data.size();
    }
    const double rms = std::sqrt(s2 / std::max<size_t>(n, 1));
    model.Buffer("input.scale").data()[0] = rms > 0 ? float(1.0 / rms) : 1.f;
  } else {
    const int w = model.config().fbank.num_mel;
    std::vector<double> sum(w, 0), sq(w, 0);
    size_t frames = 0;
    for (const auto &e : train) {
      for (int t = 0; t < e.features.frames; ++t)
        for (int j = 0; j < w; ++j) {
          const double v = e.features.data[size_t(t) * w + j];
          sum[j] += v;
          sq[j] += v * v;
        }
      frames += e.features.frames;
    }
    auto &mean = model.Buffer("cmvn.mean").data(), &istd = model.Buffer("cmvn.istd").data();
    for (int j = 0; j < w; ++j) {
      const double m = sum[j] / std::max<size_t>(frames, 1);
      const double var = std::max(0.0, sq[j] / std::max<size_t>(frames, 1) - m * m);
      mean[j] = float(m);
      istd[j] = float(1.0 / std::max(std::sqrt(var), 1e-3));
    }
  }
}

std::vector<int> PredictUtterances(const KwsModel<float> &model, const std::vector<Example> &examples,
                                   bool oracle_prior, int batch_size) {
  NoGradGuard guard;
  std::vector<int> out;
  const int c = model.config().num_classes;
  for (size_t start = 0; start < examples.size(); start += batch_size) {
    std::vector<const Example *> chunk;
    for (size_t i = start; i < std::min(examples.size(), start + batch_size); ++i) chunk.push_back(&examples[i]);
    const Batch<float> b = MakeBatch<float>(chunk, model.config(), oracle_prior);
    const Tensor<float> p = Softmax(model.Forward(b.features, b.zones, false).class_logits);
    for (size_t i = 0; i < chunk.size(); ++i) {
      std::vector<double> mean(c, 0.0);
      for (int t = 0; t < chunk[i]->valid_frames; ++t)
        for (int j = 0; j < c; ++j) mean[j] += p.data()[(i * b.frames + t) * c + j];
      out.push_back(int(std::max_element(mean.begin(), mean.end()) - mean.begin()));
    }
  }
  return out;
}

FitResult Fit(const std::vector<Example> &train, const std::vector<Example> &valid, const ModelConfig &model_config,
              const TrainConfig &config) {
  config.Validate();
  if (train.empty()) throw std::invalid_argument("Fit: empty training set");
  FitResult result{KwsModel<float>(model_config, config.seed), {}, 0, 0};
  KwsModel<float> &model = result.model;
  SetNormalization(model, train);

  std::mt19937_64 order_rng(config.seed), dropout_rng(config.seed * 0x9E3779B97F4A7C15ULL + 1);
  Adam<float> adam(model.params(), config);
  std::ofstream log;
  if (!config.log_path.empty()) {
    log.open(config.log_path, std::ios::trunc);
    if (!log) throw std::runtime_error("Fit: cannot open log " + config.log_path);
  }
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

  std::vector<std::vector<float>> best;
  double best_acc = -1, best_ce = 0;
  std::vector<size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  bool out_of_time = false;
  for (int epoch = 1; epoch <= config.epochs && !out_of_time; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    EpochStats stats;
    stats.epoch = epoch;
    double loss_sum = 0, acc_sum = 0;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      std::vector<const Example *> chunk;
      for (size_t i = start; i < std::min(order.size(), start + config.batch_size); ++i)
        chunk.push_back(&train[order[i]]);
      const Batch<float> batch = MakeBatch<float>(chunk, model_config, config.oracle_prior);
      const StepMetrics m = TrainStep(model, batch, adam, config, dropout_rng, result.steps);
      ++result.steps;
      loss_sum += m.loss;
      acc_sum += m.frame_acc;
      ++batches;
      if (log)
        log << nlohmann::json{{"step", result.steps}, {"epoch", epoch},       {"ce", m.ce},
                              {"bce", m.bce},         {"frame_acc", m.frame_acc}, {"grad_norm", m.grad_norm}}
                   .dump()
            << "\n";
      if (config.max_seconds > 0 && elapsed() > config.max_seconds) {
        out_of_time = true;
        break;
      }
    }
    stats.train_loss = loss_sum / std::max(batches, 1);
    stats.train_frame_acc = acc_sum / std::max(batches, 1);

    if (!valid.empty()) {
      double ce = 0, acc = 0, frames = 0;
      for (size_t start = 0; start < valid.size(); start += config.batch_size) {
        std::vector<const Example *> chunk;
        for (size_t i = start; i < std::min(valid.size(), start + config.batch_size); ++i) chunk.push_back(&valid[i]);
        const Batch<float> batch = MakeBatch<float>(chunk, model_config, config.oracle_prior);
        const double n = double(std::count(batch.mask.begin(), batch.mask.end(), 1));
        const StepMetrics m = EvaluateBatch(model, batch, config);
        ce += m.ce * n;
        acc += m.frame_acc * n;
        frames += n;
      }
      stats.valid_ce = ce / frames;
      stats.valid_frame_acc = acc / frames;
      const auto pred = PredictUtterances(model, valid, config.oracle_prior, config.batch_size);
      int hit = 0;
      for (size_t i = 0; i < valid.size(); ++i) hit += pred[i] == valid[i].label;
      stats.valid_utt_acc = double(hit) / valid.size();
    }
    stats.seconds = elapsed();
    result.history.push_back(stats);
    spdlog::info("epoch {} train loss {:.4f} acc {:.3f} | valid ce {:.4f} frame acc {:.3f} utt acc {:.3f} | {:.0f}s",
                 epoch, stats.train_loss, stats.train_frame_acc, stats.valid_ce, stats.valid_frame_acc,
                 stats.valid_utt_acc, stats.seconds);

    const bool better = valid.empty() || stats.valid_utt_acc > best_acc ||
                        (stats.valid_utt_acc == best_acc && stats.valid_ce < best_ce);
    if (better) {
      best_acc = stats.valid_utt_acc;
      best_ce = stats.valid_ce;
      result.best_epoch = epoch;
      best.clear();
      for (const auto &[name, p] : model.params()) best.push_back(p.data());
    }
    if (config.checkpoint_every > 0 && !config.checkpoint_dir.empty() && epoch % config.checkpoint_every == 0) {
      std::filesystem::create_directories(config.checkpoint_dir);
      SaveCheckpoint(model, std::filesystem::path(config.checkpoint_dir) / ("epoch_" + std::to_string(epoch) + ".ckpt"),
                     {result.steps, "", ""});
    }
  }
  if (!best.empty())
    for (size_t i = 0; i < best.size(); ++i) model.params()[i].second.data() = best[i];
  model.ZeroGrad();
  return result;
}

#define DAKWS_INSTANTIATE(T)                                                                                    \
  template Tensor<T> FrameCrossEntropy(const Tensor<T> &, const std::vector<int> &, const std::vector<uint8_t> &); \
  template Tensor<T> KeywordBce(const Tensor<T> &, const std::vector<int> &, const std::vector<uint8_t> &);     \
  template double FrameAccuracy(const Tensor<T> &, const std::vector<int> &, const std::vector<uint8_t> &);     \
  template Batch<T> MakeBatch<T>(const std::vector<const Example *> &, const ModelConfig &, bool);              \
  template class Adam<T>;                                                                                       \
  template StepMetrics TrainStep(KwsModel<T> &, const Batch<T> &, Adam<T> &, const TrainConfig &,              \
                                 std::mt19937_64 &, int64_t);                                                   \
  template StepMetrics EvaluateBatch(const KwsModel<T> &, const Batch<T> &, const TrainConfig &);

DAKWS_INSTANTIATE(float)
DAKWS_INSTANTIATE(double)
#undef DAKWS_INSTANTIATE

}  // namespace dakws

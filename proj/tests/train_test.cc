// tests/train_test.cc

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "dakws/train.h"
#include "test_util.h"

using namespace dakws;
using TD = Tensor<double>;

namespace {

TD RandLogits(int b, int t, int c, unsigned seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0, scale);
  std::vector<double> v(size_t(b) * t * c);
  for (auto &x : v) x = g(rng);
  return TD::Param({b, t, c}, v);
}

Example RandExample(const ModelConfig &c, int frames, int label, int zone, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0, 1);
  Example e;
  e.id = "ex" + std::to_string(seed);
  e.label = label;
  e.zone = zone;
  e.features.frames = frames;
  e.features.width = c.FeatureWidth();
  e.features.data.resize(size_t(frames) * e.features.width);
  for (auto &x : e.features.data) x = g(rng);
  e.valid_frames = c.OutputFrames(frames);
  return e;
}

double BceOracle(const TD &x, const std::vector<int> &labels, const std::vector<uint8_t> &mask) {
  const int k = int(x.dim(2));
  double s = 0;
  int n = 0;
  for (size_t r = 0; r < mask.size(); ++r) {
    if (!mask[r]) continue;
    ++n;
    for (int j = 0; j < k; ++j) {
      const double p = 1 / (1 + std::exp(-x.data()[r * k + j]));
      s += labels[r] == j ? -std::log(p) : -std::log(1 - p);
    }
  }
  return s / (double(n) * k);
}

}  // namespace

TEST_CASE("cross entropy values") {
  std::vector<int> labels(12, 3);
  std::vector<uint8_t> mask(12, 1);
  auto uniform = TD::Zeros({2, 6, 11});
  CHECK(FrameCrossEntropy(uniform, labels, mask).item() == doctest::Approx(std::log(11.0)).epsilon(1e-14));

  std::vector<double> v(2 * 6 * 11, 0.0);
  for (int r = 0; r < 12; ++r) v[r * 11 + 3] = 60;
  CHECK(FrameCrossEntropy(TD::FromData({2, 6, 11}, v), labels, mask).item() < 1e-20);

  // loop oracle with random logits
  auto x = RandLogits(3, 5, 11, 7, 3.0);
  std::vector<int> lab(15);
  std::vector<uint8_t> m(15, 1);
  for (int r = 0; r < 15; ++r) lab[r] = (r * 7) % 11, m[r] = r % 4 != 0;
  double s = 0;
  int n = 0;
  for (int r = 0; r < 15; ++r) {
    if (!m[r]) continue;
    double z = 0;
    for (int j = 0; j < 11; ++j) z += std::exp(x.data()[r * 11 + j]);
    s += std::log(z) - x.data()[r * 11 + lab[r]];
    ++n;
  }
  CHECK(std::abs(FrameCrossEntropy(x, lab, m).item() - s / n) < 1e-12);
}

TEST_CASE("keyword bce values") {
  std::vector<int> labels = {0, 1, 2, 3, 4, 10};
  std::vector<uint8_t> mask(6, 1);
  CHECK(KeywordBce(TD::Zeros({1, 6, 10}), labels, mask).item() == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  std::vector<double> v(60);
  for (int r = 0; r < 6; ++r)
    for (int j = 0; j < 10; ++j) v[r * 10 + j] = labels[r] == j ? 40 : -40;
  CHECK(KeywordBce(TD::FromData({1, 6, 10}, v), labels, mask).item() < 1e-15);

  auto x = RandLogits(2, 7, 10, 3, 2.0);
  std::vector<int> lab(14);
  std::vector<uint8_t> m(14);
  for (int r = 0; r < 14; ++r) lab[r] = r % 11, m[r] = r % 7 < 5;
  CHECK(std::abs(KeywordBce(x, lab, m).item() - BceOracle(x, lab, m)) < 1e-10);
}

TEST_CASE("loss gradients") {
  auto x = RandLogits(2, 4, 5, 11);
  std::vector<int> lab = {0, 1, 2, 3, 4, 0, 1, 2};
  std::vector<uint8_t> m = {1, 1, 1, 0, 1, 1, 0, 0};
  CHECK(GradCheck([&] { return FrameCrossEntropy(x, lab, m); }, {x}) < 1e-6);
  CHECK(GradCheck([&] { return KeywordBce(x, lab, m); }, {x}) < 1e-6);
}

TEST_CASE("masking is bit exact") {
  auto x = RandLogits(2, 6, 11, 5);
  std::vector<int> lab(12, 2);
  std::vector<uint8_t> m = {1, 1, 1, 1, 0, 0, 1, 1, 0, 0, 0, 0};
  auto y = RandLogits(2, 6, 11, 5);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0, 100);
  for (int r = 0; r < 12; ++r)
    if (!m[r])
      for (int j = 0; j < 11; ++j) y.data()[r * 11 + j] = g(rng);
  auto lx = FrameCrossEntropy(x, lab, m), ly = FrameCrossEntropy(y, lab, m);
  CHECK(lx.item() == ly.item());
  lx.Backward();
  ly.Backward();
  for (int r = 0; r < 12; ++r)
    for (int j = 0; j < 11; ++j) CHECK(x.grad()[r * 11 + j] == y.grad()[r * 11 + j]);
  std::vector<double> kx(x.data().begin(), x.data().begin() + 120);
  auto bx = TD::FromData({2, 6, 10}, kx), by = TD::FromData({2, 6, 10}, kx);
  for (int r = 0; r < 12; ++r)
    if (!m[r])
      for (int j = 0; j < 10; ++j) by.data()[r * 10 + j] = g(rng);
  CHECK(KeywordBce(bx, lab, m).item() == KeywordBce(by, lab, m).item());
  CHECK(FrameAccuracy(x, lab, m) == FrameAccuracy(y, lab, m));
  std::vector<uint8_t> none(12, 0);
  CHECK_THROWS_AS(FrameCrossEntropy(x, lab, none), std::invalid_argument);
  lab[0] = 11;
  CHECK_THROWS_AS(FrameCrossEntropy(x, lab, m), std::invalid_argument);
}

TEST_CASE("frame accuracy") {
  std::vector<int> lab = {0, 1, 1, 0, 1, 0};
  std::vector<uint8_t> m(6, 1);
  std::vector<double> onehot(12), comp(12);
  for (int r = 0; r < 6; ++r) onehot[r * 2 + lab[r]] = 1, comp[r * 2 + 1 - lab[r]] = 1;
  CHECK(FrameAccuracy(TD::FromData({1, 6, 2}, onehot), lab, m) == 1.0);
  CHECK(FrameAccuracy(TD::FromData({1, 6, 2}, comp), lab, m) == 0.0);

  auto x = RandLogits(3, 8, 4, 9);
  std::vector<int> l(24);
  std::vector<uint8_t> mm(24);
  for (int r = 0; r < 24; ++r) l[r] = (r * 5) % 4, mm[r] = r % 8 < 6;
  int hit = 0, n = 0;
  for (int r = 0; r < 24; ++r) {
    if (!mm[r]) continue;
    int best = 0;
    for (int j = 1; j < 4; ++j)
      if (x.data()[r * 4 + j] > x.data()[r * 4 + best]) best = j;
    hit += best == l[r];
    ++n;
  }
  CHECK(FrameAccuracy(x, l, mm) == double(hit) / n);
}

TEST_CASE("batching pads and masks") {
  const auto cfg = ModelConfig::Spatial2(10);
  auto a = RandExample(cfg, 40, 3, 2, 1), b = RandExample(cfg, 24, 10, 5, 2);
  auto batch = MakeBatch<float>({&a, &b}, cfg, true);
  CHECK(batch.frames == cfg.OutputFrames(40));
  CHECK(batch.zones == std::vector<int>{2, 5});
  for (int t = 0; t < batch.frames; ++t) {
    CHECK(batch.labels[t] == 3);
    CHECK(batch.labels[batch.frames + t] == 10);
    CHECK(batch.mask[t] == 1);
    CHECK(batch.mask[batch.frames + t] == (t < cfg.OutputFrames(24)));
  }
  CHECK(MakeBatch<float>({&a, &b}, cfg, false).zones == std::vector<int>{0, 0});
}

TEST_CASE("train step contracts") {
  const auto cfg = ModelConfig::Spatial2(10);
  auto a = RandExample(cfg, 40, 3, 2, 1), b = RandExample(cfg, 32, 10, 5, 2);
  auto batch = MakeBatch<float>({&a, &b}, cfg, true);

  SUBCASE("lambda zero is CE") {
    TrainConfig tc;
    tc.lambda = 0;
    KwsModel<float> m(cfg, 3);
    Adam<float> adam(m.params(), tc);
    std::mt19937_64 rng(1);
    auto s = TrainStep(m, batch, adam, tc, rng);
    CHECK(s.loss == s.ce);
    CHECK(s.grad_norm > 0);
  }
  SUBCASE("ten steps are deterministic") {
    TrainConfig tc;
    auto run = [&] {
      KwsModel<float> m(cfg, 4);
      Adam<float> adam(m.params(), tc);
      std::mt19937_64 rng(9);
      for (int i = 0; i < 10; ++i) TrainStep(m, batch, adam, tc, rng, i);
      return m;
    };
    auto m1 = run(), m2 = run();
    for (size_t i = 0; i < m1.params().size(); ++i) CHECK(m1.params()[i].second.data() == m2.params()[i].second.data());
  }
  SUBCASE("every parameter group receives gradient") {
    TrainConfig tc;
    KwsModel<float> m(cfg, 5);
    Adam<float> adam(m.params(), tc);
    std::mt19937_64 rng(2);
    TrainStep(m, batch, adam, tc, rng);
    for (const auto &[name, p] : m.params()) {
      double g2 = 0;
      for (float g : p.grad()) g2 += double(g) * g;
      CHECK_MESSAGE(g2 > 0, name);
    }
  }
  SUBCASE("zero learning rate leaves parameters") {
    TrainConfig tc;
    tc.lr = 0;
    KwsModel<float> m(cfg, 6);
    auto before = m.params();
    std::vector<std::vector<float>> copy;
    for (const auto &[n, p] : before) copy.push_back(p.data());
    Adam<float> adam(m.params(), tc);
    std::mt19937_64 rng(2);
    for (int i = 0; i < 3; ++i) TrainStep(m, batch, adam, tc, rng);
    for (size_t i = 0; i < copy.size(); ++i) CHECK(m.params()[i].second.data() == copy[i]);
  }
  SUBCASE("non-finite loss names the batch") {
    TrainConfig tc;
    KwsModel<float> m(cfg, 7);
    m.Buffer("input.scale").data()[0] = std::numeric_limits<float>::infinity();
    Adam<float> adam(m.params(), tc);
    std::mt19937_64 rng(2);
    try {
      TrainStep(m, batch, adam, tc, rng, 17);
      FAIL("expected throw");
    } catch (const std::runtime_error &e) {
      CHECK(std::string(e.what()).find("batch 17") != std::string::npos);
    }
  }
}

TEST_CASE("single utterance overfit") {
  for (auto cfg : {ModelConfig::Spatial2(10), ModelConfig::Single(10)}) {
    auto a = RandExample(cfg, 98, 4, 3, 11);
    auto batch = MakeBatch<float>({&a}, cfg, true);
    TrainConfig tc;
    KwsModel<float> m(cfg, 1);
    Adam<float> adam(m.params(), tc);
    std::mt19937_64 rng(1);
    for (int i = 0; i < 200; ++i) TrainStep(m, batch, adam, tc, rng, i);
    const double ce = EvaluateBatch(m, batch, tc).ce;
    MESSAGE(ModeName(cfg.mode), " CE after 200 steps ", ce);
    CHECK(ce < 0.01);
  }
}

TEST_CASE("fixed-batch loss is non-increasing for most seeds") {
  const auto cfg = ModelConfig::Spatial2(10);
  const int seeds = 20;
  int ok = 0;
  for (int s = 0; s < seeds; ++s) {
    auto a = RandExample(cfg, 40, s % 11, 1 + s % 6, 100 + s);
    auto batch = MakeBatch<float>({&a}, cfg, true);
    TrainConfig tc;
    KwsModel<float> m(cfg, 200 + s);
    Adam<float> adam(m.params(), tc);
    std::mt19937_64 rng(s);
    double prev = EvaluateBatch(m, batch, tc).loss;
    bool mono = true;
    for (int i = 0; i < 50; ++i) {
      TrainStep(m, batch, adam, tc, rng, i);
      const double cur = EvaluateBatch(m, batch, tc).loss;
      mono = mono && cur <= prev;
      prev = cur;
    }
    ok += mono;
  }
  MESSAGE("monotone seeds ", ok, "/", seeds);
  CHECK(ok >= 19);
}

TEST_CASE("full model gradient check") {
  for (auto cfg : {ModelConfig::Spatial2(10), ModelConfig::Single(10)}) {
    KwsModel<double> m(cfg, 3);
    auto a = RandExample(cfg, 12, 5, 2, 4), b = RandExample(cfg, 9, 10, 4, 5);
    auto batch = MakeBatch<double>({&a, &b}, cfg, true);
    std::vector<TD> params;
    for (const auto &[n, p] : m.params()) params.push_back(p);
    auto f = [&] {
      auto out = m.Forward(batch.features, batch.zones, false);
      return Add(FrameCrossEntropy(out.class_logits, batch.labels, batch.mask),
                 Scale(KeywordBce(out.keyword_logits, batch.labels, batch.mask), 0.5));
    };
    const double err = GradCheck(f, params, 1e-5, 300, 1);
    MESSAGE(ModeName(cfg.mode), " max rel err ", err);
    CHECK(err <= 1e-4);
  }
}

TEST_CASE("config json") {
  TrainConfig c;
  c.lr = 3e-4;
  c.oracle_prior = false;
  c.epochs = 7;
  auto back = TrainConfig::FromJson(c.ToJson());
  CHECK(back.lr == c.lr);
  CHECK(back.oracle_prior == false);
  CHECK(back.epochs == 7);
  CHECK_THROWS_AS(TrainConfig::FromJson(R"({"batch_size": 0})"), std::invalid_argument);
  CHECK_THROWS_AS(TrainConfig::FromJson(R"({"prior": "maybe"})"), std::invalid_argument);
}

TEST_CASE("fit") {
  const auto cfg = ModelConfig::Spatial2(2);
  std::vector<Example> train, valid;
  for (int i = 0; i < 12; ++i) train.push_back(RandExample(cfg, 30, i % 3, 1 + i % 6, i));
  for (int i = 0; i < 4; ++i) valid.push_back(RandExample(cfg, 30, i % 3, 1 + i % 6, 50 + i));
  TrainConfig tc;
  tc.batch_size = 4;
  tc.epochs = 2;
  testing::TempDir dir("fit");
  tc.log_path = (dir / "log.jsonl").string();

  SUBCASE("zero epochs returns the initialization") {
    tc.epochs = 0;
    auto r = Fit(train, valid, cfg, tc);
    KwsModel<float> init(cfg, tc.seed);
    CHECK(r.steps == 0);
    CHECK(r.best_epoch == 0);
    for (size_t i = 0; i < init.params().size(); ++i)
      CHECK(r.model.params()[i].second.data() == init.params()[i].second.data());
  }
  SUBCASE("same seed gives the same curves") {
    auto r1 = Fit(train, valid, cfg, tc), r2 = Fit(train, valid, cfg, tc);
    REQUIRE(r1.history.size() == 2);
    for (int e = 0; e < 2; ++e) {
      CHECK(r1.history[e].valid_ce == r2.history[e].valid_ce);
      CHECK(r1.history[e].valid_utt_acc == r2.history[e].valid_utt_acc);
    }
    CHECK(r1.steps == 6);
    std::ifstream log(tc.log_path);
    std::string line;
    int lines = 0;
    while (std::getline(log, line)) {
      ++lines;
      CHECK(line.find("\"grad_norm\"") != std::string::npos);
      CHECK(line.find("\"frame_acc\"") != std::string::npos);
    }
    CHECK(lines == 6);
  }
  SUBCASE("empty training set") {
    CHECK_THROWS_AS(Fit({}, valid, cfg, tc), std::invalid_argument);
  }
}

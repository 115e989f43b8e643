// tests/stream_test.cc

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
#include <random>

#include "dakws/stream.h"
#include "test_util.h"

using namespace dakws;

namespace {

MultiChannel RandAudio(int channels, int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0, 0.1);
  MultiChannel x(channels, std::vector<double>(n));
  for (auto &ch : x)
    for (auto &v : ch) v = g(rng);
  return x;
}

MultiChannel Slice(const MultiChannel &x, size_t begin, size_t end) {
  MultiChannel out;
  for (const auto &ch : x) out.emplace_back(ch.begin() + begin, ch.begin() + end);
  return out;
}

template <typename T>
std::shared_ptr<KwsModel<T>> Model(const ModelConfig &cfg, uint64_t seed) {
  auto m = std::make_shared<KwsModel<T>>(cfg, seed);
  if (cfg.spatial()) {
    m->Buffer("input.scale").data()[0] = T(0.2);
  } else {
    for (auto &v : m->Buffer("cmvn.mean").data()) v = T(-4);
    for (auto &v : m->Buffer("cmvn.istd").data()) v = T(0.5);
  }
  return m;
}

// Streams `x` with the given chunk schedule (cycled) and returns all frames.
template <typename T>
std::vector<StreamFrame<T>> RunStream(StreamEngine<T> &engine, const MultiChannel &x, const std::vector<int> &chunks) {
  std::vector<StreamFrame<T>> all;
  size_t pos = 0, i = 0;
  const size_t n = x[0].size();
  while (pos < n) {
    const size_t step = std::min<size_t>(chunks[i++ % chunks.size()], n - pos);
    auto out = engine.Push(Slice(x, pos, pos + step));
    all.insert(all.end(), out.begin(), out.end());
    pos += step;
  }
  return all;
}

template <typename T>
double MaxDiff(const std::vector<StreamFrame<T>> &s, const Posteriors<T> &off) {
  REQUIRE(s.size() == off.classes.size());
  double d = 0;
  for (size_t t = 0; t < s.size(); ++t) {
    CHECK(s[t].frame == int(t));
    for (size_t j = 0; j < s[t].class_posterior.size(); ++j)
      d = std::max(d, std::abs(double(s[t].class_posterior[j]) - double(off.classes[t][j])));
    for (size_t j = 0; j < s[t].keyword_posterior.size(); ++j)
      d = std::max(d, std::abs(double(s[t].keyword_posterior[j]) - double(off.keywords[t][j])));
  }
  return d;
}

}  // namespace

TEST_CASE("smoothing") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<std::vector<double>> raw(40, std::vector<double>(3));
  for (auto &f : raw)
    for (auto &v : f) v = u(rng);
  CHECK(SmoothPosteriors(raw, 1) == raw);
  std::vector<std::vector<double>> flat(25, std::vector<double>(2, 0.37));
  for (const auto &f : SmoothPosteriors(flat, 10))
    for (double v : f) CHECK(std::abs(v - 0.37) < 1e-15);
  const auto s = SmoothPosteriors(raw, 7);
  for (int t = 0; t < 40; ++t)
    for (int k = 0; k < 3; ++k) {
      const int lo = std::max(0, t - 6);
      double acc = 0;
      for (int i = lo; i <= t; ++i) acc += raw[i][k];
      CHECK(std::abs(s[t][k] - acc / (t - lo + 1)) < 1e-12);
    }
  CHECK_THROWS_AS(PosteriorSmoother(0), std::invalid_argument);
}

TEST_CASE("trigger detection") {
  TriggerConfig cfg;
  SUBCASE("single step") {
    std::vector<std::vector<double>> s(120, {0.0});
    for (int t = 50; t < 120; ++t) s[t][0] = 0.9;
    const auto e = DetectTriggers(s, cfg, 0.04);
    REQUIRE(e.size() == 1);
    CHECK(e[0].frame == 50);
    CHECK(e[0].posterior == 0.9);
  }
  SUBCASE("below threshold") {
    std::vector<std::vector<double>> s(300, {0.49});
    CHECK(DetectTriggers(s, cfg, 0.04).empty());
  }
  SUBCASE("oscillation respects the refractory period") {
    std::vector<std::vector<double>> s(500);
    for (int t = 0; t < 500; ++t) s[t] = {t % 2 ? 0.1 : 0.9};
    const auto e = DetectTriggers(s, cfg, 0.04);
    REQUIRE(e.size() >= 2);
    for (size_t i = 1; i < e.size(); ++i) CHECK((e[i].frame - e[i - 1].frame) * 0.04 >= 1.0 - 1e-9);
    for (const auto &ev : e) CHECK(ev.posterior >= 0.5);
  }
  SUBCASE("thresholds per keyword") {
    cfg.thresholds = {0.3, 0.95};
    std::vector<std::vector<double>> s(10, {0.0, 0.0});
    for (int t = 5; t < 10; ++t) s[t] = {0.6, 0.6};
    const auto e = DetectTriggers(s, cfg, 0.04);
    REQUIRE(e.size() == 1);
    CHECK(e[0].keyword == 0);
    cfg.thresholds = {0.3};
    CHECK_THROWS_AS(DetectTriggers(s, cfg, 0.04), std::invalid_argument);
    cfg.thresholds = {0.3, 1.0};
    CHECK_THROWS_AS(DetectTriggers(s, cfg, 0.04), std::invalid_argument);
  }
}

TEST_CASE("raising a threshold never adds events") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 300; ++trial) {
    // Random piecewise-constant traces hit the hard cases: plateaus near
    // the threshold and short dips.
    std::vector<std::vector<double>> s;
    while (s.size() < 400) {
      const double v = u(rng);
      const int len = 1 + int(u(rng) * 15);
      for (int i = 0; i < len; ++i) s.push_back({v});
    }
    TriggerConfig cfg;
    cfg.refractory_s = u(rng) * 2;
    std::vector<double> th = {0.05 + 0.9 * u(rng), 0.05 + 0.9 * u(rng)};
    std::sort(th.begin(), th.end());
    cfg.threshold = th[0];
    const size_t low = DetectTriggers(s, cfg, 0.04).size();
    cfg.threshold = th[1];
    const size_t high = DetectTriggers(s, cfg, 0.04).size();
    CHECK(high <= low);
  }
}

TEST_CASE("cache sizes follow the receptive field") {
  auto m = Model<float>(ModelConfig::Spatial2(10), 1);
  StreamEngine<float> e(m, 3);
  const auto caches = e.Caches();
  const auto &md = m->config().mdtc;
  REQUIRE(caches.size() == size_t(2 + md.stacks * md.blocks));
  CHECK(caches[0].frames == 2);
  CHECK(caches[1].frames == 2);
  int total = 0;
  for (int s = 0; s < md.stacks; ++s)
    for (int b = 0; b < md.blocks; ++b) {
      CHECK(caches[2 + s * md.blocks + b].layer == BlockPrefix(s, b) + "dw");
      CHECK(caches[2 + s * md.blocks + b].frames == (md.kernel - 1) * md.dilations[b]);
      total += caches[2 + s * md.blocks + b].frames;
    }
  CHECK(total + 1 == md.ReceptiveField());
}

TEST_CASE("streaming equals offline, float") {
  for (auto cfg : {ModelConfig::Spatial2(10), ModelConfig::Spatial3(10), ModelConfig::Single(10)}) {
    auto m = Model<float>(cfg, 5);
    const int zone = cfg.spatial() ? 4 : 0;
    const auto x = RandAudio(cfg.spatial() ? cfg.Channels() : 1, 16000, 9);
    const auto off = OfflinePosteriors(*m, x, zone);
    for (std::vector<int> chunks : {std::vector<int>{1}, {7}, {160}, {1000}, {16000}, {7, 160, 1000, 1, 333}}) {
      StreamEngine<float> e(m, zone);
      const double d = MaxDiff(RunStream(e, x, chunks), off);
      MESSAGE(ModeName(cfg.mode), " chunk ", chunks[0], " frames ", off.classes.size(), " diff ", d);
      CHECK(d <= 1e-5);
    }
  }
}

TEST_CASE("streaming equals offline, double") {
  for (auto cfg : {ModelConfig::Spatial2(10), ModelConfig::Single(10)}) {
    auto m = Model<double>(cfg, 6);
    const int zone = cfg.spatial() ? 2 : 0;
    const auto x = RandAudio(cfg.spatial() ? cfg.Channels() : 1, 12000, 4);
    const auto off = OfflinePosteriors(*m, x, zone);
    StreamEngine<double> e(m, zone);
    CHECK(MaxDiff(RunStream(e, x, {7, 160, 1000}), off) <= 1e-10);
  }
}

TEST_CASE("latency bound") {
  for (auto cfg : {ModelConfig::Spatial2(10), ModelConfig::Single(10)}) {
    auto m = Model<float>(cfg, 2);
    StreamEngine<float> e(m, 0);
    const auto x = RandAudio(cfg.spatial() ? 2 : 1, 4000, 1);
    const auto &fc = cfg.FrameConfig();
    for (int i = 0; i < 4000; ++i) {
      const auto out = e.Push(Slice(x, i, i + 1));
      for (const auto &f : out) {
        CHECK(i == int64_t(f.frame) * cfg.Stride() * fc.hop + fc.window - 1);
        CHECK(i == e.CompletionSample(f.frame));
        CHECK(f.time_s == doctest::Approx((i + 1) / 16000.0));
      }
      CHECK(out.size() <= 1);
    }
    CHECK(e.frames() == cfg.OutputFrames(fc.NumFrames(4000)));
  }
}

TEST_CASE("silence and independence") {
  auto m = Model<float>(ModelConfig::Spatial2(10), 7);
  StreamEngine<float> a(m, 1), b(m, 1);
  const MultiChannel zeros(2, std::vector<double>(255, 0.0));
  CHECK(a.Push(zeros).empty());
  const auto first = a.Push(MultiChannel(2, std::vector<double>(1, 0.0)));
  REQUIRE(first.size() == 1);
  for (float p : first[0].class_posterior) CHECK(std::isfinite(p));
  // b untouched by a
  CHECK(b.samples() == 0);
  CHECK(b.frames() == 0);
  const auto x = RandAudio(2, 3000, 3);
  RunStream(a, x, {100});
  StreamEngine<float> c(m, 1);
  RunStream(c, zeros, {255});
  auto fb = b.Push(MultiChannel(2, std::vector<double>(256, 0.0)));
  auto fc = c.Push(MultiChannel(2, std::vector<double>(1, 0.0)));
  REQUIRE(fb.size() == 1);
  REQUIRE(fc.size() == 1);
  CHECK(fb[0].class_posterior == fc[0].class_posterior);
}

TEST_CASE("stream errors") {
  auto m = Model<float>(ModelConfig::Spatial2(10), 1);
  CHECK_THROWS_AS(StreamEngine<float>(m, 7), std::out_of_range);
  CHECK_THROWS_AS(StreamEngine<float>(m, -1), std::out_of_range);
  StreamEngine<float> e(m, 0);
  CHECK_THROWS_AS(e.Push(RandAudio(3, 10, 1)), std::invalid_argument);
  CHECK_THROWS_AS(e.Push(RandAudio(1, 10, 1)), std::invalid_argument);
  auto s = Model<float>(ModelConfig::Single(10), 1);
  CHECK_THROWS_AS(StreamEngine<float>(s, 2), std::invalid_argument);
  StreamEngine<float> es(s, 0);
  CHECK_NOTHROW(es.Push(RandAudio(2, 10, 1)));
  TriggerConfig bad;
  bad.window = 0;
  CHECK_THROWS_AS(StreamEngine<float>(m, 0, bad), std::invalid_argument);
}

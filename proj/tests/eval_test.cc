// tests/eval_test.cc

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
#include <sstream>

#include "dakws/pipeline.h"
#include "test_util.h"

using namespace dakws;
namespace fs = std::filesystem;

namespace {

// Small rendered corpus shared by the cases below.
struct Fixture {
  testing::TempDir dir{"eval"};
  BenchmarkConfig config;
  DatasetManifest manifest;
  std::vector<RenderRecord> train, test;

  explicit Fixture(std::vector<std::string> keywords, int clips, int test_speakers) {
    config.corpus.keywords = std::move(keywords);
    config.corpus.clips_per_class = clips;
    config.corpus.speakers = 20;
    config.corpus.valid_speakers = 2;
    config.corpus.test_speakers = test_speakers;
    config.corpus.noise_clips = 1;
    config.corpus.noise_seconds = 2;
    const auto corpus = WriteSynthCorpus(config.corpus, dir / "corpus");
    manifest = ScanGscDataset(corpus.speech_root, config.corpus.keywords);
    const auto noise = NoisePool::Load(corpus.noise_root);
    train = RenderTrainSet(manifest, noise, config, 2, dir / "train");
    test = RenderTestSet(manifest, noise, config, 2, 10, dir / "test");
  }
};

Fixture &Small() {
  static Fixture f({"yes", "no"}, 60, 4);
  return f;
}

}  // namespace

TEST_CASE("comparison arithmetic") {
  CHECK(std::round(RelativeGainPct(77.67, 69.86) * 100) / 100 == doctest::Approx(11.18));
  CHECK(std::round(AbsoluteGainPts(77.67, 72.19) * 100) / 100 == doctest::Approx(5.48));
  CHECK(RelativeGainPct(50, 50) == 0);
  CHECK(AbsoluteGainPts(50, 50) == 0);
  EvalResult a, b;
  a.accuracy = 0.7767;
  b.accuracy = 0.6986;
  a.snr_db = b.snr_db = 0;
  const auto c = Compare(a, b);
  CHECK(c.relative_pct == doctest::Approx(11.1795).epsilon(1e-4));
  CHECK(c.absolute_pts == doctest::Approx(7.81));
  b.snr_db = 5;
  CHECK_THROWS_AS(Compare(a, b), std::invalid_argument);
}

TEST_CASE("scoring") {
  const std::vector<int> labels = {0, 0, 1, 1, 2, 2, 2}, pred = {0, 1, 1, 1, 0, 2, 2};
  const auto r = ScorePredictions(labels, pred, 3);
  CHECK(r.accuracy == doctest::Approx(5.0 / 7));
  CHECK(r.count == 7);
  int64_t total = 0;
  for (const auto &row : r.confusion)
    for (auto v : row) total += v;
  CHECK(total == 7);
  CHECK(r.confusion[2][0] == 1);
  CHECK(r.class_accuracy == std::vector<double>{0.5, 1.0, 2.0 / 3});
  const auto back = EvalResult::FromJson(r.ToJson());
  CHECK(back.confusion == r.confusion);
  CHECK_THROWS_AS(ScorePredictions({0}, {3}, 3), std::invalid_argument);
}

TEST_CASE("systems") {
  const auto all = SystemSpec::All();
  REQUIRE(all.size() == 6);
  CHECK(all[0].Name() == "Single-channel baseline");
  CHECK(all[1].Name() == "Enhanced cascaded baseline");
  CHECK(all[2].Name() == "2ch E2E without prior");
  CHECK(all[3].Name() == "3ch E2E without prior");
  CHECK(all[4].Name() == "2ch Proposed spatial E2E");
  CHECK(all[5].Name() == "3ch Proposed spatial E2E");
  CHECK(SystemSpec::Parse("e2e", 3, "oracle") == all[5]);
  CHECK(SystemSpec::Parse("single", 2, "oracle").oracle_prior == false);
  CHECK_THROWS_AS(SystemSpec::Parse("beam", 2, "none"), std::invalid_argument);
  CHECK_THROWS_AS(SystemSpec::Parse("e2e", 4, "none"), std::invalid_argument);
}

TEST_CASE("report layout") {
  std::vector<EvalResult> results;
  const auto all = SystemSpec::All();
  // reverse order on input; the table order is restored
  for (int i = 5; i >= 0; --i)
    for (double snr : {10.0, 0.0, 5.0}) {
      EvalResult r;
      r.system = all[i].Name();
      r.snr_db = snr;
      r.accuracy = 0.5 + 0.01 * i + snr / 100;
      r.params = i < 2 ? 164000 : 279000;
      results.push_back(r);
    }
  const std::string csv = ReportCsv(results);
  std::istringstream is(csv);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(is, line)) lines.push_back(line);
  REQUIRE(lines.size() == 7);
  CHECK(lines[0] == "system,params_0dB,accuracy_0dB,params_5dB,accuracy_5dB,params_10dB,accuracy_10dB");
  CHECK(lines[1] == "Single-channel baseline,164000,50.00,164000,55.00,164000,60.00");
  CHECK(lines[6].rfind("3ch Proposed spatial E2E,279000,55.00", 0) == 0);
  results.push_back(results.front());
  CHECK_THROWS_AS(ReportCsv(results), std::invalid_argument);
}

TEST_CASE("untrained model sits at chance") {
  static Fixture f({"yes", "no", "up", "down", "left", "right", "on", "off", "stop", "go"}, 40, 5);
  KwsModel<float> model(ModelConfig::Spatial2(10), 3);
  SetNormalization(model, LoadExamples(f.train, model.config()));
  const auto r = Evaluate(model, SystemSpec::Parse("e2e", 2, "none"), f.test);
  MESSAGE("untrained accuracy ", r.accuracy, " over ", r.count);
  CHECK(r.count == 110);
  CHECK(std::abs(r.accuracy - 1.0 / 11) <= 0.05);
}

TEST_CASE("cascade equals single-channel on beamformed audio") {
  auto &f = Small();
  KwsModel<float> model(ModelConfig::Single(2), 2);
  SetNormalization(model, LoadExamples({f.train.begin(), f.train.begin() + 20}, model.config()));
  const auto cascade = Evaluate(model, SystemSpec::Parse("cascade", 2, "none"), f.test);
  std::vector<RenderRecord> beamformed = f.test;
  fs::create_directories(f.dir / "beamformed");
  for (auto &r : beamformed) {
    const AudioClip y = GscFrontEnd(ReadWav(r.path), r.zone);
    r.path = (f.dir / "beamformed" / fs::path(r.path).filename()).string();
    WriteWav(r.path, y);
    r.num_channels = 1;
  }
  const auto single = Evaluate(model, SystemSpec::Parse("single", 2, "none"), beamformed);
  CHECK(cascade.confusion == single.confusion);
  CHECK(cascade.accuracy == single.accuracy);
  CHECK_THROWS_AS(Evaluate(model, SystemSpec::Parse("cascade", 2, "none"), beamformed), std::invalid_argument);
}

TEST_CASE("evaluation errors") {
  auto &f = Small();
  KwsModel<float> m2(ModelConfig::Spatial2(2), 1), m3(ModelConfig::Spatial3(2), 1);
  CHECK_THROWS_AS(Evaluate(m3, SystemSpec::Parse("e2e", 3, "none"), f.test), std::invalid_argument);
  CHECK_THROWS_AS(Evaluate(m2, SystemSpec::Parse("single", 2, "none"), f.test), std::invalid_argument);
  auto mixed = f.test;
  mixed[0].snr_db = 3.0;
  CHECK_THROWS_AS(Evaluate(m2, SystemSpec::Parse("e2e", 2, "none"), mixed), std::invalid_argument);
  CHECK_THROWS_AS(Evaluate(m2, SystemSpec::Parse("e2e", 2, "none"), {}), std::invalid_argument);
}

TEST_CASE("trained model on its own training set, and the prior is live") {
  auto &f = Small();
  TrainConfig tc;
  tc.epochs = 30;
  tc.batch_size = 16;
  const auto spec = SystemSpec::Parse("e2e", 2, "oracle");
  std::vector<RenderRecord> train_only;
  for (const auto &r : f.train)
    if (r.split == Split::kTrain) train_only.push_back(r);
  const FitResult fit = TrainSystem(spec, train_only, tc, 2);
  // training SNRs vary, so score directly instead of through Evaluate
  const auto own_examples = LoadExamples(train_only, fit.model.config());
  std::vector<int> labels;
  for (const auto &e : own_examples) labels.push_back(e.label);
  const auto own = ScorePredictions(labels, PredictUtterances(fit.model, own_examples, true), 3);
  MESSAGE("training-set accuracy ", own.accuracy, " over ", own.count);
  CHECK(own.accuracy >= 0.95);

  auto examples = LoadExamples(f.test, fit.model.config());
  const auto base = PredictUtterances(fit.model, examples, true);
  for (auto &e : examples) e.zone = e.zone % 6 + 1;
  const auto permuted = PredictUtterances(fit.model, examples, true);
  int changed = 0;
  for (size_t i = 0; i < base.size(); ++i) changed += base[i] != permuted[i];
  MESSAGE("predictions changed by permuting zones: ", changed, "/", base.size());
  CHECK(changed >= 1);
}

// src/pipeline.cc

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

#include "dakws/pipeline.h"

#include <spdlog/spdlog.h>

#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace dakws {

namespace fs = std::filesystem;

BenchmarkConfig::BenchmarkConfig() { train.epochs = 10; }

BenchmarkConfig BenchmarkConfig::FromJson(const std::string &text) {
  const auto j = nlohmann::json::parse(text);
  BenchmarkConfig c;
  c.speech_root = j.value("speech_root", c.speech_root);
  c.noise_root = j.value("noise_root", c.noise_root);
  if (j.contains("corpus")) c.corpus = SynthCorpusConfig::FromJson(j.at("corpus").dump());
  c.snrs = j.value("snrs", c.snrs);
  if (j.contains("systems")) {
    c.systems.clear();
    for (const auto &s : j.at("systems"))
      c.systems.push_back(SystemSpec::Parse(s.at("system").get<std::string>(), s.value("channels", 2),
                                            s.value("prior", std::string("none"))));
  }
  if (j.contains("train")) c.train = TrainConfig::FromJson(j.at("train").dump());
  c.train_snr_min = j.value("train_snr_min", c.train_snr_min);
  c.train_snr_max = j.value("train_snr_max", c.train_snr_max);
  c.seed = j.value("seed", c.seed);
  if (c.snrs.empty()) throw std::invalid_argument("benchmark: no test SNRs");
  if (c.systems.empty()) throw std::invalid_argument("benchmark: no systems");
  return c;
}

std::string BenchmarkConfig::ToJson() const {
  nlohmann::json systems = nlohmann::json::array();
  for (const auto &s : this->systems)
    systems.push_back({{"system", s.kind == SystemKind::kSingle    ? "single"
                                  : s.kind == SystemKind::kCascade ? "cascade"
                                                                   : "e2e"},
                       {"channels", s.channels},
                       {"prior", s.oracle_prior ? "oracle" : "none"}});
  return nlohmann::json{{"speech_root", speech_root},
                        {"noise_root", noise_root},
                        {"corpus", nlohmann::json::parse(corpus.ToJson())},
                        {"snrs", snrs},
                        {"systems", systems},
                        {"train", nlohmann::json::parse(train.ToJson())},
                        {"train_snr_min", train_snr_min},
                        {"train_snr_max", train_snr_max},
                        {"seed", seed}}
      .dump(2);
}

std::string SystemSlug(const SystemSpec &s) {
  switch (s.kind) {
    case SystemKind::kSingle: return "single";
    case SystemKind::kCascade: return "cascade";
    case SystemKind::kE2E: return "e2e_" + std::to_string(s.channels) + "ch_" + (s.oracle_prior ? "prior" : "noprior");
  }
  return "";
}

namespace {

std::vector<RenderRecord> RenderCached(const DatasetManifest &manifest, const NoisePool &noise,
                                       const RenderConfig &rc, const fs::path &dir) {
  const fs::path manifest_path = dir / "manifest.jsonl", config_path = dir / "render.json";
  if (fs::exists(manifest_path) && fs::exists(config_path)) {
    std::ifstream is(config_path);
    const std::string saved((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (saved == rc.ToJson()) return LoadRenderManifest(manifest_path);
  }
  std::vector<std::string> failures;
  auto records = BuildDataset(manifest, noise, rc, dir, &failures);
  if (!failures.empty()) throw std::runtime_error("render: " + failures.front());
  SaveRenderManifest(records, manifest_path);
  std::ofstream(config_path) << rc.ToJson();
  return records;
}

RenderConfig BaseRender(const BenchmarkConfig &config, int channels) {
  RenderConfig rc;
  rc.channels = channels;
  rc.snr_min_db = config.train_snr_min;
  rc.snr_max_db = config.train_snr_max;
  rc.train_noise = TrainNoiseCategories();
  rc.test_noise = TestNoiseCategories();
  return rc;
}

}  // namespace

std::vector<RenderRecord> RenderTrainSet(const DatasetManifest &manifest, const NoisePool &noise,
                                         const BenchmarkConfig &config, int channels, const fs::path &dir) {
  RenderConfig rc = BaseRender(config, channels);
  rc.mode = RenderMode::kTrain;
  rc.seed = config.seed * 1000 + channels;
  rc.splits = {Split::kTrain, Split::kValid};
  return RenderCached(manifest, noise, rc, dir);
}

std::vector<RenderRecord> RenderTestSet(const DatasetManifest &manifest, const NoisePool &noise,
                                        const BenchmarkConfig &config, int channels, double snr,
                                        const fs::path &dir) {
  RenderConfig rc = BaseRender(config, channels);
  rc.mode = RenderMode::kTest;
  rc.snr_db = snr;
  // One scene per utterance shared by every SNR; only the noise level moves.
  rc.seed = config.seed * 1000 + 500 + channels;
  rc.splits = {Split::kTest};
  return RenderCached(manifest, noise, rc, dir);
}

FitResult TrainSystem(const SystemSpec &system, const std::vector<RenderRecord> &train_and_valid,
                      const TrainConfig &train, int num_keywords) {
  const ModelConfig mc = system.DefaultModel(num_keywords);
  ExampleOptions opt;
  opt.gsc = system.kind == SystemKind::kCascade;
  std::vector<RenderRecord> tr, va;
  for (const auto &r : train_and_valid) (r.split == Split::kValid ? va : tr).push_back(r);
  TrainConfig tc = train;
  tc.oracle_prior = system.kind == SystemKind::kE2E && system.oracle_prior;
  spdlog::info("training {} on {} utterances ({} validation)", system.Name(), tr.size(), va.size());
  return Fit(LoadExamples(tr, mc, opt), LoadExamples(va, mc, opt), mc, tc);
}

BenchmarkResult RunBenchmark(const BenchmarkConfig &config, const fs::path &out_dir) {
  fs::create_directories(out_dir);
  fs::path speech = config.speech_root, noise_root = config.noise_root;
  if (speech.empty() != noise_root.empty())
    throw std::invalid_argument("benchmark: give both speech_root and noise_root, or neither");
  if (speech.empty()) {
    const auto corpus = WriteSynthCorpus(config.corpus, out_dir / "corpus");
    speech = corpus.speech_root;
    noise_root = corpus.noise_root;
  }
  const DatasetManifest manifest = ScanGscDataset(speech, config.Keywords());
  const NoisePool noise = NoisePool::Load(noise_root);
  const int keywords = int(config.Keywords().size());

  BenchmarkResult out;
  for (const auto &system : config.systems) {
    // Single-channel and cascade systems consume the 2-microphone renders.
    const int channels = system.kind == SystemKind::kE2E ? system.channels : 2;
    const fs::path render_dir = out_dir / "render" / (std::to_string(channels) + "ch");
    const auto train = RenderTrainSet(manifest, noise, config, channels, render_dir / "train");
    FitResult fit = TrainSystem(system, train, config.train, keywords);
    fs::create_directories(out_dir / "models");
    SaveCheckpoint(fit.model, out_dir / "models" / (SystemSlug(system) + ".ckpt"), {fit.steps, "", ""});
    for (double snr : config.snrs) {
      char tag[32];
      std::snprintf(tag, sizeof tag, "test_%gdB", snr);
      const auto test = RenderTestSet(manifest, noise, config, channels, snr, render_dir / tag);
      EvalResult r = Evaluate(fit.model, system, test);
      spdlog::info("{} @ {} dB: accuracy {:.2f}%", r.system, snr, 100 * r.accuracy);
      out.results.push_back(std::move(r));
    }
  }
  out.csv = ReportCsv(out.results);
  std::ofstream(out_dir / "report.csv") << out.csv;
  std::ofstream results(out_dir / "results.jsonl");
  for (const auto &r : out.results) results << r.ToJson() << "\n";
  return out;
}

}  // namespace dakws

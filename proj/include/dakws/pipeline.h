// include/dakws/pipeline.h

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

#ifndef DAKWS_PIPELINE_H_
#define DAKWS_PIPELINE_H_

// End-to-end desk benchmark: corpus, rendering, training of every system,
// evaluation per SNR and the comparison table.

#include <filesystem>
#include <string>
#include <vector>

#include "dakws/eval.h"
#include "dakws/synth.h"

namespace dakws {

struct BenchmarkConfig {
  // Empty roots mean "synthesize a corpus under the output directory".
  std::string speech_root, noise_root;
  SynthCorpusConfig corpus;
  std::vector<double> snrs = {0, 10};
  std::vector<SystemSpec> systems = SystemSpec::All();
  TrainConfig train;  // prior is taken from each system
  double train_snr_min = 0, train_snr_max = 10;
  uint64_t seed = 1;  // rendering; training uses train.seed

  BenchmarkConfig();
  std::vector<std::string> Keywords() const { return corpus.keywords; }
  static BenchmarkConfig FromJson(const std::string &text);
  std::string ToJson() const;
};

struct BenchmarkResult {
  std::vector<EvalResult> results;
  std::string csv;
};

// Rendered train/valid records for `channels` microphones (cached on disk).
std::vector<RenderRecord> RenderTrainSet(const DatasetManifest &manifest, const NoisePool &noise,
                                         const BenchmarkConfig &config, int channels,
                                         const std::filesystem::path &dir);
std::vector<RenderRecord> RenderTestSet(const DatasetManifest &manifest, const NoisePool &noise,
                                        const BenchmarkConfig &config, int channels, double snr,
                                        const std::filesystem::path &dir);

// Trains one system on rendered train/valid records.
FitResult TrainSystem(const SystemSpec &system, const std::vector<RenderRecord> &train_and_valid,
                      const TrainConfig &train, int num_keywords);

BenchmarkResult RunBenchmark(const BenchmarkConfig &config, const std::filesystem::path &out_dir);

std::string SystemSlug(const SystemSpec &system);

}  // namespace dakws

#endif  // DAKWS_PIPELINE_H_

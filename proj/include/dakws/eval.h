// include/dakws/eval.h

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

#ifndef DAKWS_EVAL_H_
#define DAKWS_EVAL_H_

#include <string>
#include <vector>

#include "dakws/train.h"

namespace dakws {

enum class SystemKind { kSingle, kCascade, kE2E };

struct SystemSpec {
  SystemKind kind = SystemKind::kE2E;
  int channels = 2;
  bool oracle_prior = true;

  // Table row names, e.g. "2ch E2E without prior".
  std::string Name() const;
  // system in {single, cascade, e2e}; prior in {oracle, none}.
  static SystemSpec Parse(const std::string &system, int channels, const std::string &prior);
  // The six rows of the comparison table, in table order.
  static std::vector<SystemSpec> All();
  ModelConfig DefaultModel(int num_keywords) const;
  bool operator==(const SystemSpec &) const = default;
};

struct EvalResult {
  std::string system;
  double snr_db = 0;
  double accuracy = 0;
  int64_t params = 0;
  std::vector<double> class_accuracy;             // recall per class; filler last
  std::vector<std::vector<int64_t>> confusion;    // [true][predicted]
  int64_t count = 0;

  std::string ToJson() const;
  static EvalResult FromJson(const std::string &text);
};

EvalResult ScorePredictions(const std::vector<int> &labels, const std::vector<int> &predictions, int num_classes);

// Renders features for `system` (beamforming first for the cascade) and
// scores the model. All records must share one SNR.
EvalResult Evaluate(const KwsModel<float> &model, const SystemSpec &system, const std::vector<RenderRecord> &test,
                    const GscConfig &gsc = {});

struct Comparison {
  std::string a, b;
  double snr_db = 0;
  double relative_pct = 0;   // (a - b) / b * 100
  double absolute_pts = 0;   // a - b, accuracies in percent
};

double RelativeGainPct(double a, double b);
double AbsoluteGainPts(double a, double b);
Comparison Compare(const EvalResult &a, const EvalResult &b);

// One row per system (table order first, others after), one params column
// and one accuracy (%) column per SNR in ascending order.
std::string ReportCsv(const std::vector<EvalResult> &results);

}  // namespace dakws

#endif  // DAKWS_EVAL_H_

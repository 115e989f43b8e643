// src/eval.cc

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

#include "dakws/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace dakws {

std::string SystemSpec::Name() const {
  switch (kind) {
    case SystemKind::kSingle: return "Single-channel baseline";
    case SystemKind::kCascade: return "Enhanced cascaded baseline";
    case SystemKind::kE2E:
      return std::to_string(channels) + "ch " + (oracle_prior ? "Proposed spatial E2E" : "E2E without prior");
  }
  return "";
}

SystemSpec SystemSpec::Parse(const std::string &system, int channels, const std::string &prior) {
  SystemSpec s;
  if (system == "single") s.kind = SystemKind::kSingle;
  else if (system == "cascade") s.kind = SystemKind::kCascade;
  else if (system == "e2e") s.kind = SystemKind::kE2E;
  else throw std::invalid_argument("unknown system '" + system + "' (single, cascade, e2e)");
  if (channels != 2 && channels != 3) throw std::invalid_argument("channels must be 2 or 3");
  if (prior != "oracle" && prior != "none") throw std::invalid_argument("prior must be oracle or none");
  s.channels = channels;
  s.oracle_prior = s.kind == SystemKind::kE2E && prior == "oracle";
  return s;
}

std::vector<SystemSpec> SystemSpec::All() {
  return {{SystemKind::kSingle, 2, false}, {SystemKind::kCascade, 2, false}, {SystemKind::kE2E, 2, false},
          {SystemKind::kE2E, 3, false},    {SystemKind::kE2E, 2, true},      {SystemKind::kE2E, 3, true}};
}

ModelConfig SystemSpec::DefaultModel(int num_keywords) const {
  if (kind != SystemKind::kE2E) return ModelConfig::Single(num_keywords);
  return channels == 3 ? ModelConfig::Spatial3(num_keywords) : ModelConfig::Spatial2(num_keywords);
}

std::string EvalResult::ToJson() const {
  nlohmann::json j = {{"system", system},     {"snr_db", snr_db},       {"accuracy", accuracy},
                      {"params", params},     {"class_accuracy", class_accuracy},
                      {"confusion", confusion}, {"count", count}};
  if (!std::isfinite(snr_db)) j["snr_db"] = nullptr;
  return j.dump();
}

EvalResult EvalResult::FromJson(const std::string &text) {
  const auto j = nlohmann::json::parse(text);
  EvalResult r;
  r.system = j.at("system").get<std::string>();
  r.snr_db = j.at("snr_db").is_null() ? kNoNoise : j.at("snr_db").get<double>();
  r.accuracy = j.at("accuracy").get<double>();
  r.params = j.value("params", int64_t(0));
  r.class_accuracy = j.value("class_accuracy", std::vector<double>{});
  r.confusion = j.value("confusion", std::vector<std::vector<int64_t>>{});
  r.count = j.value("count", int64_t(0));
  return r;
}

EvalResult ScorePredictions(const std::vector<int> &labels, const std::vector<int> &predictions, int num_classes) {
  if (labels.size() != predictions.size()) throw std::invalid_argument("ScorePredictions: size mismatch");
  if (labels.empty()) throw std::invalid_argument("ScorePredictions: empty test set");
  EvalResult r;
  r.confusion.assign(num_classes, std::vector<int64_t>(num_classes, 0));
  int64_t hit = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes || predictions[i] < 0 || predictions[i] >= num_classes)
      throw std::invalid_argument("ScorePredictions: class index out of range");
    ++r.confusion[labels[i]][predictions[i]];
    hit += labels[i] == predictions[i];
  }
  r.count = int64_t(labels.size());
  r.accuracy = double(hit) / double(r.count);
  for (int c = 0; c < num_classes; ++c) {
    int64_t n = 0;
    for (auto v : r.confusion[c]) n += v;
    r.class_accuracy.push_back(n ? double(r.confusion[c][c]) / n : 0.0);
  }
  return r;
}

EvalResult Evaluate(const KwsModel<float> &model, const SystemSpec &system, const std::vector<RenderRecord> &test,
                    const GscConfig &gsc) {
  if (test.empty()) throw std::invalid_argument("evaluate: empty test manifest");
  const ModelConfig &mc = model.config();
  const bool e2e = system.kind == SystemKind::kE2E;
  if (e2e != mc.spatial())
    throw std::invalid_argument("evaluate: system '" + system.Name() + "' cannot run a " + ModeName(mc.mode) +
                                " model");
  const double snr = test[0].snr_db.value_or(kNoNoise);
  for (const auto &r : test) {
    if (r.snr_db.value_or(kNoNoise) != snr) throw std::invalid_argument("evaluate: test manifest mixes SNRs");
    if (e2e && r.num_channels != mc.Channels())
      throw std::invalid_argument("evaluate: " + std::to_string(r.num_channels) + "-channel record " + r.path +
                                  " for a " + std::to_string(mc.Channels()) + "-channel model");
    if (system.kind == SystemKind::kCascade && r.num_channels < 2)
      throw std::invalid_argument("evaluate: cascade needs multi-channel records, got mono " + r.path);
  }
  ExampleOptions opt;
  opt.gsc = system.kind == SystemKind::kCascade;
  opt.gsc_config = gsc;
  const auto examples = LoadExamples(test, mc, opt);
  const auto pred = PredictUtterances(model, examples, e2e && system.oracle_prior);
  std::vector<int> labels;
  for (const auto &e : examples) labels.push_back(e.label);
  EvalResult r = ScorePredictions(labels, pred, mc.num_classes);
  r.system = system.Name();
  r.snr_db = snr;
  r.params = model.NumParams();
  return r;
}

double RelativeGainPct(double a, double b) {
  if (b == 0) throw std::invalid_argument("relative gain over a zero baseline");
  return (a - b) / b * 100.0;
}

double AbsoluteGainPts(double a, double b) { return a - b; }

Comparison Compare(const EvalResult &a, const EvalResult &b) {
  if (a.snr_db != b.snr_db)
    throw std::invalid_argument("compare: SNR mismatch (" + std::to_string(a.snr_db) + " vs " +
                                std::to_string(b.snr_db) + " dB)");
  return {a.system, b.system, a.snr_db, RelativeGainPct(a.accuracy * 100, b.accuracy * 100),
          AbsoluteGainPts(a.accuracy * 100, b.accuracy * 100)};
}

namespace {

std::string SnrLabel(double snr) {
  if (!std::isfinite(snr)) return "clean";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%gdB", snr);
  return buf;
}

std::string CsvField(const std::string &s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

}  // namespace

std::string ReportCsv(const std::vector<EvalResult> &results) {
  std::vector<std::string> rows;
  for (const auto &s : SystemSpec::All())
    for (const auto &r : results)
      if (r.system == s.Name()) {
        rows.push_back(r.system);
        break;
      }
  for (const auto &r : results)
    if (std::find(rows.begin(), rows.end(), r.system) == rows.end()) rows.push_back(r.system);
  std::set<double> snrs;
  for (const auto &r : results) snrs.insert(r.snr_db);

  std::map<std::pair<std::string, double>, const EvalResult *> cell;
  for (const auto &r : results) {
    if (cell.count({r.system, r.snr_db}))
      throw std::invalid_argument("report: duplicate result for " + r.system + " at " + SnrLabel(r.snr_db));
    cell[{r.system, r.snr_db}] = &r;
  }
  std::ostringstream os;
  os << "system";
  for (double s : snrs) os << ",params_" << SnrLabel(s) << ",accuracy_" << SnrLabel(s);
  os << "\n";
  for (const auto &name : rows) {
    os << CsvField(name);
    for (double s : snrs) {
      auto it = cell.find({name, s});
      if (it == cell.end()) {
        os << ",,";
        continue;
      }
      char acc[32];
      std::snprintf(acc, sizeof acc, "%.2f", it->second->accuracy * 100);
      os << "," << it->second->params << "," << acc;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace dakws

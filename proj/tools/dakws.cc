// tools/dakws.cc

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

// Command-line front end. Every subcommand reads a JSON config; flags given
// on the command line override the corresponding config keys.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dakws/eval.h"
#include "dakws/pipeline.h"
#include "dakws/stream.h"
#include "dakws/synth.h"
#include "dakws/train.h"

using namespace dakws;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json ReadJson(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read config " + path);
  try {
    return json::parse(is);
  } catch (const json::exception &e) {
    throw std::runtime_error("config " + path + ": " + e.what());
  }
}

// Resolves a path from the config relative to the config file.
std::string Resolve(const std::string &config_path, const std::string &p) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(config_path).parent_path() / p).string();
}

template <typename T>
T Pick(const std::optional<T> &flag, const json &cfg, const char *key, T fallback) {
  if (flag) return *flag;
  return cfg.contains(key) ? cfg.at(key).get<T>() : fallback;
}

std::string Required(const json &cfg, const char *key) {
  if (!cfg.contains(key)) throw std::runtime_error(std::string("config is missing '") + key + "'");
  return cfg.at(key).get<std::string>();
}

int ZonesFor(int channels) { return channels == 3 ? 12 : 6; }

void CheckZones(const std::optional<int> &zones, int channels) {
  if (zones && *zones != ZonesFor(channels))
    throw std::runtime_error("--zones " + std::to_string(*zones) + " does not match the " + std::to_string(channels) +
                             "-channel array (" + std::to_string(ZonesFor(channels)) + " zones)");
}

struct Flags {
  std::string config, out;
  std::optional<uint64_t> seed;
  std::optional<double> snr;
  std::optional<int> channels, zones;
  std::optional<std::string> prior, system;
};

void AddCommon(CLI::App *cmd, Flags &f, bool config_required = true) {
  auto *c = cmd->add_option("--config", f.config, "JSON config file");
  if (config_required) c->required();
  cmd->add_option("--out", f.out, "output path");
  cmd->add_option("--seed", f.seed, "random seed");
}

// --- synth ---------------------------------------------------------------

int CmdSynth(const Flags &f) {
  SynthCorpusConfig cfg = f.config.empty() ? SynthCorpusConfig{} : SynthCorpusConfig::FromJson(ReadJson(f.config).dump());
  if (f.seed) cfg.seed = *f.seed;
  if (f.out.empty()) throw std::runtime_error("synth needs --out");
  const auto corpus = WriteSynthCorpus(cfg, f.out);
  std::cout << json{{"speech_root", corpus.speech_root.string()},
                    {"noise_root", corpus.noise_root.string()},
                    {"clips", corpus.num_clips},
                    {"noise_clips", corpus.num_noise_clips}}
                   .dump()
            << "\n";
  return 0;
}

// --- render --------------------------------------------------------------

int CmdRender(const Flags &f, const std::optional<std::string> &mode) {
  const json cfg = ReadJson(f.config);
  RenderConfig rc = RenderConfig::FromJson(cfg.value("render", json::object()).dump());
  if (mode) {
    if (*mode != "train" && *mode != "test") throw std::runtime_error("--mode must be train or test");
    rc.mode = *mode == "train" ? RenderMode::kTrain : RenderMode::kTest;
  }
  if (f.snr) rc.snr_db = *f.snr;
  if (f.channels) rc.channels = *f.channels;
  if (f.seed) rc.seed = *f.seed;
  CheckZones(f.zones, rc.channels);
  if (rc.train_noise.empty() && rc.test_noise.empty()) {
    rc.train_noise = TrainNoiseCategories();
    rc.test_noise = TestNoiseCategories();
  }
  if (!cfg.contains("render") || !cfg.at("render").contains("splits"))
    rc.splits = rc.mode == RenderMode::kTrain ? std::vector<Split>{Split::kTrain, Split::kValid}
                                              : std::vector<Split>{Split::kTest};
  const std::string out = f.out.empty() ? Resolve(f.config, cfg.value("out", std::string("render"))) : f.out;
  const auto keywords = cfg.at("keywords").get<std::vector<std::string>>();
  const auto manifest = ScanGscDataset(Resolve(f.config, Required(cfg, "speech_root")), keywords);
  const auto noise = NoisePool::Load(Resolve(f.config, Required(cfg, "noise_root")));
  std::vector<std::string> failures;
  const auto records = BuildDataset(manifest, noise, rc, out, &failures);
  SaveRenderManifest(records, fs::path(out) / "manifest.jsonl");
  std::ofstream(fs::path(out) / "render.json") << rc.ToJson();
  for (const auto &msg : failures) spdlog::warn("render failure: {}", msg);
  std::cout << json{{"manifest", (fs::path(out) / "manifest.jsonl").string()},
                    {"records", records.size()},
                    {"failures", failures.size()}}
                   .dump()
            << "\n";
  return failures.empty() ? 0 : 1;
}

// --- train ---------------------------------------------------------------

SystemSpec SystemFrom(const Flags &f, const json &cfg) {
  return SystemSpec::Parse(Pick(f.system, cfg, "system", std::string("e2e")), Pick(f.channels, cfg, "channels", 2),
                           Pick(f.prior, cfg, "prior", std::string("oracle")));
}

int CmdTrain(const Flags &f) {
  const json cfg = ReadJson(f.config);
  const SystemSpec system = SystemFrom(f, cfg);
  CheckZones(f.zones, system.channels);
  TrainConfig tc = TrainConfig::FromJson(cfg.value("train", json::object()).dump());
  if (f.seed) tc.seed = *f.seed;
  const std::string out = f.out.empty() ? Resolve(f.config, cfg.value("out", std::string("model"))) : f.out;
  fs::create_directories(out);
  tc.log_path = (fs::path(out) / "train_log.jsonl").string();
  const auto records = LoadRenderManifest(Resolve(f.config, Required(cfg, "train_manifest")));
  const int keywords = int(cfg.at("keywords").size());
  const FitResult fit = TrainSystem(system, records, tc, keywords);
  SaveCheckpoint(fit.model, fs::path(out) / "model.ckpt",
                 {fit.steps, "", json{{"system", SystemSlug(system)}, {"train", json::parse(tc.ToJson())}}.dump()});
  json history = json::array();
  for (const auto &e : fit.history)
    history.push_back({{"epoch", e.epoch},
                       {"train_loss", e.train_loss},
                       {"train_frame_acc", e.train_frame_acc},
                       {"valid_ce", e.valid_ce},
                       {"valid_frame_acc", e.valid_frame_acc},
                       {"valid_utt_acc", e.valid_utt_acc}});
  std::ofstream(fs::path(out) / "history.json") << history.dump(2);
  std::cout << json{{"checkpoint", (fs::path(out) / "model.ckpt").string()},
                    {"best_epoch", fit.best_epoch},
                    {"steps", fit.steps},
                    {"params", fit.model.NumParams()}}
                   .dump()
            << "\n";
  return 0;
}

// --- eval ----------------------------------------------------------------

int CmdEval(const Flags &f) {
  const json cfg = ReadJson(f.config);
  const SystemSpec system = SystemFrom(f, cfg);
  CheckZones(f.zones, system.channels);
  const KwsModel<float> model = LoadCheckpoint(Resolve(f.config, Required(cfg, "checkpoint")));
  const auto records = LoadRenderManifest(Resolve(f.config, Required(cfg, "test_manifest")));
  if (f.snr)
    for (const auto &r : records)
      if (r.snr_db.value_or(kNoNoise) != *f.snr)
        throw std::runtime_error("test manifest is not rendered at --snr " + std::to_string(*f.snr));
  const EvalResult result = Evaluate(model, system, records);
  const std::string text = result.ToJson();
  if (!f.out.empty()) {
    fs::create_directories(fs::path(f.out).parent_path().empty() ? "." : fs::path(f.out).parent_path());
    std::ofstream(f.out) << text << "\n";
  }
  std::cout << text << "\n";
  return 0;
}

// --- stream --------------------------------------------------------------

MultiChannel ReadRawPcm(std::istream &is, int channels) {
  MultiChannel x(channels);
  int16_t frame[8];
  while (is.read(reinterpret_cast<char *>(frame), sizeof(int16_t) * channels))
    for (int c = 0; c < channels; ++c) x[c].push_back(frame[c] / 32768.0);
  return x;
}

int CmdStream(const Flags &f, const std::string &input, std::optional<int> zone_flag,
              std::optional<double> threshold, int chunk) {
  const json cfg = ReadJson(f.config);
  auto model = std::make_shared<KwsModel<float>>(LoadCheckpoint(Resolve(f.config, Required(cfg, "checkpoint"))));
  TriggerConfig tc;
  if (cfg.contains("trigger")) {
    const auto &t = cfg.at("trigger");
    tc.window = t.value("window", tc.window);
    tc.threshold = t.value("threshold", tc.threshold);
    tc.thresholds = t.value("thresholds", tc.thresholds);
    tc.refractory_s = t.value("refractory_s", tc.refractory_s);
    tc.release = t.value("release", tc.release);
  }
  if (threshold) tc.threshold = *threshold;
  const int zone = Pick(zone_flag, cfg, "zone", 0);
  const int channels = model->config().spatial() ? model->config().Channels() : 1;
  if (chunk < 1) throw std::runtime_error("--chunk must be >= 1");

  MultiChannel audio;
  const std::string in = input.empty() ? cfg.value("input", std::string("-")) : input;
  if (in == "-") {
    audio = ReadRawPcm(std::cin, channels);
  } else {
    const AudioClip clip = ReadWav(Resolve(f.config, in));
    if (clip.sample_rate != 16000) throw std::runtime_error("stream: input must be 16 kHz");
    for (const auto &ch : clip.channels) audio.emplace_back(ch.begin(), ch.end());
  }
  StreamEngine<float> engine(model, zone, tc);
  std::ofstream file;
  if (!f.out.empty()) file.open(f.out);
  std::ostream &os = f.out.empty() ? std::cout : file;
  const size_t n = audio.empty() ? 0 : audio[0].size();
  for (size_t pos = 0; pos < n; pos += chunk) {
    MultiChannel piece;
    for (const auto &ch : audio) piece.emplace_back(ch.begin() + pos, ch.begin() + std::min(n, pos + chunk));
    for (const auto &frame : engine.Push(piece))
      for (const auto &e : frame.events)
        os << json{{"keyword", e.keyword}, {"frame", e.frame}, {"posterior", e.posterior}, {"time_s", e.time_s}}.dump()
           << "\n";
  }
  return 0;
}

// --- report --------------------------------------------------------------

std::vector<EvalResult> ReadResults(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read results " + path);
  std::vector<EvalResult> out;
  std::string line;
  while (std::getline(is, line))
    if (line.find_first_not_of(" \t\r") != std::string::npos) out.push_back(EvalResult::FromJson(line));
  return out;
}

int CmdReport(const Flags &f) {
  const json cfg = ReadJson(f.config);
  std::vector<EvalResult> results;
  for (const auto &p : cfg.at("results")) {
    auto r = ReadResults(Resolve(f.config, p.get<std::string>()));
    results.insert(results.end(), r.begin(), r.end());
  }
  if (results.size() < 2) throw std::runtime_error("report needs at least 2 results");
  const std::string csv = ReportCsv(results);
  // Every system against each baseline at the same SNR.
  std::ostringstream cmp;
  cmp << "system,baseline,snr_db,relative_pct,absolute_pts\n";
  for (const auto &b : results) {
    if (b.system != SystemSpec{SystemKind::kSingle}.Name() && b.system != SystemSpec{SystemKind::kCascade}.Name())
      continue;
    for (const auto &a : results) {
      if (&a == &b || a.snr_db != b.snr_db) continue;
      const Comparison c = Compare(a, b);
      char row[256];
      std::snprintf(row, sizeof row, "%s,%s,%g,%.2f,%.2f\n", c.a.c_str(), c.b.c_str(), c.snr_db, c.relative_pct,
                    c.absolute_pts);
      cmp << row;
    }
  }
  if (f.out.empty()) {
    std::cout << csv;
  } else {
    fs::create_directories(f.out);
    std::ofstream(fs::path(f.out) / "report.csv") << csv;
    std::ofstream(fs::path(f.out) / "comparisons.csv") << cmp.str();
    std::cout << json{{"report", (fs::path(f.out) / "report.csv").string()}, {"rows", results.size()}}.dump() << "\n";
  }
  return 0;
}

// --- bench ---------------------------------------------------------------

int CmdBench(const Flags &f) {
  BenchmarkConfig cfg = BenchmarkConfig::FromJson(ReadJson(f.config).dump());
  if (!cfg.speech_root.empty()) cfg.speech_root = Resolve(f.config, cfg.speech_root);
  if (!cfg.noise_root.empty()) cfg.noise_root = Resolve(f.config, cfg.noise_root);
  if (f.seed) {
    cfg.seed = *f.seed;
    cfg.train.seed = *f.seed;
    cfg.corpus.seed = *f.seed;
  }
  if (f.snr) cfg.snrs = {*f.snr};
  const BenchmarkResult r = RunBenchmark(cfg, f.out.empty() ? "bench" : f.out);
  std::cout << r.csv;
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Direction-aware multi-channel keyword spotting toolkit"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off");

  Flags f;
  std::optional<std::string> mode;
  std::string input;
  std::optional<int> zone;
  std::optional<double> threshold;
  int chunk = 160;

  auto *synth = app.add_subcommand("synth", "write a synthetic word and noise corpus");
  AddCommon(synth, f, false);

  auto *render = app.add_subcommand("render", "spatialize a corpus into a rendered manifest");
  AddCommon(render, f);
  render->add_option("--mode", mode, "train or test");
  render->add_option("--snr", f.snr, "test-mode SNR in dB");
  render->add_option("--channels", f.channels, "2 or 3")->check(CLI::IsMember({2, 3}));
  render->add_option("--zones", f.zones, "6 or 12")->check(CLI::IsMember({6, 12}));

  auto *train = app.add_subcommand("train", "train one system");
  AddCommon(train, f);
  for (auto *cmd : {train, app.add_subcommand("eval", "evaluate a checkpoint on a test manifest")}) {
    if (cmd != train) AddCommon(cmd, f);
    cmd->add_option("--system", f.system, "single, cascade or e2e")->check(CLI::IsMember({"single", "cascade", "e2e"}));
    cmd->add_option("--channels", f.channels, "2 or 3")->check(CLI::IsMember({2, 3}));
    cmd->add_option("--zones", f.zones, "6 or 12")->check(CLI::IsMember({6, 12}));
    cmd->add_option("--prior", f.prior, "oracle or none")->check(CLI::IsMember({"oracle", "none"}));
  }
  auto *eval = app.get_subcommand("eval");
  eval->add_option("--snr", f.snr, "expected test SNR in dB");

  auto *stream = app.add_subcommand("stream", "run streaming detection and print trigger events");
  AddCommon(stream, f);
  stream->add_option("--input", input, "WAV file, or - for raw s16le PCM on stdin");
  stream->add_option("--zone", zone, "zone prior (0 = none)");
  stream->add_option("--threshold", threshold, "trigger threshold");
  stream->add_option("--chunk", chunk, "samples per push");

  auto *report = app.add_subcommand("report", "build the comparison table from evaluation results");
  AddCommon(report, f);

  auto *bench = app.add_subcommand("bench", "render, train and evaluate every system");
  AddCommon(bench, f);
  bench->add_option("--snr", f.snr, "evaluate at one SNR only");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    std::cerr << "error: " << e.what() << "\n";
    CLI::App *sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << sub->help();
    return 2;
  }

  spdlog::set_default_logger(spdlog::stderr_color_mt("dakws"));
  spdlog::set_level(spdlog::level::from_str(log_level));
  try {
    if (*synth) return CmdSynth(f);
    if (*render) return CmdRender(f, mode);
    if (*train) return CmdTrain(f);
    if (*eval) return CmdEval(f);
    if (*stream) return CmdStream(f, input, zone, threshold, chunk);
    if (*report) return CmdReport(f);
    if (*bench) return CmdBench(f);
  } catch (const std::exception &e) {
    std::string msg = e.what();
    for (auto &c : msg)
      if (c == '\n') c = ' ';
    std::cerr << "error: " << msg << "\n";
    return 1;
  }
  return 0;
}

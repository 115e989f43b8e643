// tests/cli_test.cc

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

#include <sys/wait.h>

#include <fstream>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dakws/eval.h"
#include "test_util.h"

using namespace dakws;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

std::string Slurp(const fs::path &p) {
  std::ifstream is(p);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

Run Cli(const fs::path &cwd, const std::string &args) {
  const std::string cmd = "cd '" + cwd.string() + "' && '" DAKWS_CLI_PATH "' --log-level warn " + args +
                          " > cli.out 2> cli.err";
  Run r;
  const int status = std::system(cmd.c_str());
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = Slurp(cwd / "cli.out");
  r.err = Slurp(cwd / "cli.err");
  return r;
}

void Write(const fs::path &p, const std::string &text) { std::ofstream(p) << text; }

std::vector<std::string> Lines(const std::string &s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

// Shared tiny corpus.
struct Workspace {
  testing::TempDir dir{"cli"};
  Workspace() {
    Write(dir / "synth.json",
          R"({"keywords":["yes","no"],"fillers":["bed","cat"],"clips_per_class":18,"speakers":9,)"
          R"("valid_speakers":1,"test_speakers":2,"noise_clips":1,"noise_seconds":2})");
    REQUIRE(Cli(dir.path(), "synth --config synth.json --out corpus --seed 3").code == 0);
    Write(dir / "render.json",
          R"({"speech_root":"corpus/speech","noise_root":"corpus/noise","keywords":["yes","no"]})");
  }
};

Workspace &Ws() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_CASE("missing config exits 2 with usage") {
  testing::TempDir d("cli_usage");
  for (const char *cmd : {"render", "train", "eval", "stream", "report", "bench"}) {
    const Run r = Cli(d.path(), cmd);
    CHECK_MESSAGE(r.code == 2, cmd);
    CHECK(r.err.find("Usage") != std::string::npos);
    CHECK(r.err.find("--config") != std::string::npos);
  }
  CHECK(Cli(d.path(), "").code == 2);
  CHECK(Cli(d.path(), "--help").code == 0);
}

TEST_CASE("runtime errors are one line") {
  testing::TempDir d("cli_err");
  Write(d / "bad.json", "{not json");
  for (const std::string args : {"render --config missing.json", "train --config bad.json",
                                 "eval --config bad.json", "report --config missing.json"}) {
    const Run r = Cli(d.path(), args);
    CHECK_MESSAGE(r.code == 1, args);
    const auto lines = Lines(r.err);
    REQUIRE(lines.size() == 1);
    CHECK(lines[0].rfind("error: ", 0) == 0);
  }
  auto &ws = Ws();
  const Run z = Cli(ws.dir.path(), "render --config render.json --channels 2 --zones 12 --out z");
  CHECK(z.code == 1);
  CHECK(z.err.find("zones") != std::string::npos);
}

TEST_CASE("render is deterministic") {
  auto &ws = Ws();
  const std::string args = "render --config render.json --mode test --snr 0 --channels 2 --seed 7 --out ";
  REQUIRE(Cli(ws.dir.path(), args + "a").code == 0);
  REQUIRE(Cli(ws.dir.path(), args + "b").code == 0);
  const auto ma = LoadRenderManifest(ws.dir / "a" / "manifest.jsonl");
  const auto mb = LoadRenderManifest(ws.dir / "b" / "manifest.jsonl");
  REQUIRE(ma.size() == mb.size());
  REQUIRE(!ma.empty());
  for (size_t i = 0; i < ma.size(); ++i) {
    auto x = ma[i], y = mb[i];
    CHECK(fs::path(x.path).filename() == fs::path(y.path).filename());
    CHECK(ReadWav(ws.dir / x.path).channels == ReadWav(ws.dir / y.path).channels);
    x.path = y.path;
    CHECK(x == y);
    CHECK(x.snr_db == 0.0);
    CHECK(x.num_channels == 2);
  }
}

TEST_CASE("train, eval, stream and report") {
  auto &ws = Ws();
  const auto &d = ws.dir.path();
  REQUIRE(Cli(d, "render --config render.json --mode train --channels 2 --seed 1 --out tr").code == 0);
  REQUIRE(Cli(d, "render --config render.json --mode test --snr 5 --channels 2 --seed 2 --out te").code == 0);
  Write(d / "train.json", R"({"train_manifest":"tr/manifest.jsonl","keywords":["yes","no"],)"
                          R"("system":"e2e","channels":2,"prior":"oracle","train":{"epochs":1,"batch_size":8}})");
  const Run t = Cli(d, "train --config train.json --out m2");
  REQUIRE_MESSAGE(t.code == 0, t.err);
  CHECK(fs::exists(d / "m2" / "model.ckpt"));
  const auto log = Lines(Slurp(d / "m2" / "train_log.jsonl"));
  REQUIRE(!log.empty());
  for (const char *key : {"step", "ce", "bce", "frame_acc", "grad_norm"})
    CHECK(nlohmann::json::parse(log[0]).contains(key));
  REQUIRE(Cli(d, "train --config train.json --system single --out m1").code == 0);

  Write(d / "eval.json", R"({"checkpoint":"m2/model.ckpt","test_manifest":"te/manifest.jsonl",)"
                         R"("system":"e2e","channels":2,"prior":"oracle"})");
  const Run e = Cli(d, "eval --config eval.json --snr 5 --out res/e2e.json");
  REQUIRE_MESSAGE(e.code == 0, e.err);
  const auto r = EvalResult::FromJson(Slurp(d / "res" / "e2e.json"));
  CHECK(r.system == "2ch Proposed spatial E2E");
  CHECK(r.snr_db == 5);
  CHECK(r.count == LoadRenderManifest(d / "te" / "manifest.jsonl").size());
  CHECK(Cli(d, "eval --config eval.json --snr 0").code == 1);
  CHECK(Cli(d, "eval --config eval.json --system single").code == 1);
  Write(d / "eval1.json", R"({"checkpoint":"m1/model.ckpt","test_manifest":"te/manifest.jsonl"})");
  REQUIRE(Cli(d, "eval --config eval1.json --system single --out res/single.json").code == 0);
  REQUIRE(Cli(d, "eval --config eval1.json --system cascade --out res/cascade.json").code == 0);

  Write(d / "report.json", R"({"results":["res/e2e.json","res/single.json","res/cascade.json"]})");
  REQUIRE(Cli(d, "report --config report.json --out rep").code == 0);
  const auto rows = Lines(Slurp(d / "rep" / "report.csv"));
  REQUIRE(rows.size() == 4);
  CHECK(rows[1].rfind("Single-channel baseline,", 0) == 0);
  CHECK(rows[2].rfind("Enhanced cascaded baseline,", 0) == 0);
  CHECK(Lines(Slurp(d / "rep" / "comparisons.csv")).size() == 5);

  const auto te = LoadRenderManifest(d / "te" / "manifest.jsonl");
  Write(d / "stream.json", R"({"checkpoint":"m2/model.ckpt","zone":1,"trigger":{"threshold":0.05,"release":0.01}})");
  const Run s = Cli(d, "stream --config stream.json --chunk 333 --input " + te[0].path);
  REQUIRE_MESSAGE(s.code == 0, s.err);
  const std::regex event(R"(\{"frame":\d+,"keyword":\d+,"posterior":[0-9.e-]+,"time_s":[0-9.e-]+\})");
  for (const auto &line : Lines(s.out)) CHECK_MESSAGE(std::regex_match(line, event), line);
  // raw PCM on stdin gives the same events
  {
    const AudioClip clip = ReadWav(d / te[0].path);
    std::ofstream raw(d / "in.raw", std::ios::binary);
    for (size_t i = 0; i < clip.NumSamples(); ++i)
      for (const auto &ch : clip.channels) {
        const int16_t v = int16_t(std::lround(std::clamp(ch[i], -1.f, 32767.f / 32768) * 32768));
        raw.write(reinterpret_cast<const char *>(&v), 2);
      }
  }
  const Run sr = Cli(d, "stream --config stream.json --input - < in.raw");
  CHECK(sr.code == 0);
  CHECK(Lines(sr.out).size() == Lines(s.out).size());
}

TEST_CASE("report over six systems and three SNRs") {
  testing::TempDir d("cli_report");
  std::ofstream os(d / "all.jsonl");
  for (const auto &s : SystemSpec::All())
    for (double snr : {0.0, 5.0, 10.0}) {
      EvalResult r;
      r.system = s.Name();
      r.snr_db = snr;
      r.accuracy = 0.7 + snr / 100;
      r.params = 1000;
      os << r.ToJson() << "\n";
    }
  os.close();
  Write(d / "report.json", R"({"results":["all.jsonl"]})");
  const Run r = Cli(d.path(), "report --config report.json");
  REQUIRE(r.code == 0);
  const auto rows = Lines(r.out);
  REQUIRE(rows.size() == 7);
  CHECK(rows[0] == "system,params_0dB,accuracy_0dB,params_5dB,accuracy_5dB,params_10dB,accuracy_10dB");
  for (size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].rfind(SystemSpec::All()[i - 1].Name() + ",", 0) == 0);
}

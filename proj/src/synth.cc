// src/synth.cc

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

#include "dakws/synth.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "dakws/audio_io.h"

namespace dakws {

namespace fs = std::filesystem;

namespace {

constexpr double kTwoPi = 6.283185307179586;

uint64_t Fnv1a(const std::string &s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
  return h;
}

// Two-pole resonator with unity gain at DC.
class Resonator {
 public:
  double Step(double x, double freq, double bw, int fs) {
    const double r = std::exp(-M_PI * bw / fs);
    const double a1 = 2 * r * std::cos(kTwoPi * freq / fs), a2 = -r * r;
    const double y = (1 - a1 - a2) * x + a1 * y1_ + a2 * y2_;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double y1_ = 0, y2_ = 0;
};

// Peak-normalizing band-pass: resonator output divided by its centre gain.
class BandPass {
 public:
  double Step(double x, double freq, double bw, int fs) {
    const double r = std::exp(-M_PI * bw / fs);
    const double a1 = 2 * r * std::cos(kTwoPi * freq / fs), a2 = -r * r;
    const double y = (1 - r) * (x - x2_) + a1 * y1_ + a2 * y2_;
    x2_ = x1_;
    x1_ = x;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double x1_ = 0, x2_ = 0, y1_ = 0, y2_ = 0;
};

enum class SegKind { kVowel, kNasal, kFricative, kBurst };

struct Segment {
  SegKind kind;
  double f1, f2, f3;  // vowel/nasal formants, or fricative centre in f2
  double ms;
};

struct Vowel {
  double f1, f2, f3;
};
// Roughly the cardinal vowels of an adult male voice.
constexpr Vowel kVowels[] = {{270, 2290, 3010}, {390, 1990, 2550}, {530, 1840, 2480}, {660, 1720, 2410},
                             {730, 1090, 2440}, {570, 840, 2410},  {440, 1020, 2240}, {300, 870, 2240},
                             {490, 1350, 1690}, {640, 1190, 2390}};

std::vector<Segment> WordTemplate(const std::string &word) {
  Rng rng(Fnv1a(word));
  std::uniform_real_distribution<double> u(0, 1);
  const int n = 2 + int(u(rng) * 3);
  std::vector<Segment> segs;
  bool vowel_next = u(rng) < 0.5;
  for (int i = 0; i < n; ++i) {
    if (vowel_next || (i == n - 1 && segs.back().kind != SegKind::kVowel)) {
      const Vowel &v = kVowels[size_t(u(rng) * 10)];
      segs.push_back({SegKind::kVowel, v.f1, v.f2, v.f3, 120 + 130 * u(rng)});
      // occasional diphthong glide
      if (u(rng) < 0.35) {
        const Vowel &w = kVowels[size_t(u(rng) * 10)];
        segs.push_back({SegKind::kVowel, w.f1, w.f2, w.f3, 80 + 60 * u(rng)});
      }
    } else {
      const double r = u(rng);
      if (r < 0.4)
        segs.push_back({SegKind::kFricative, 0, 2500 + 4500 * u(rng), 0, 70 + 80 * u(rng)});
      else if (r < 0.7)
        segs.push_back({SegKind::kBurst, 0, 1200 + 3000 * u(rng), 0, 15 + 20 * u(rng)});
      else
        segs.push_back({SegKind::kNasal, 250 + 50 * u(rng), 1000 + 1200 * u(rng), 2500, 60 + 50 * u(rng)});
    }
    vowel_next = !vowel_next;
  }
  return segs;
}

// One-pole parameter smoother.
struct Glide {
  double value, alpha;
  double Step(double target) { return value += alpha * (target - value); }
};

// Scales to `rms_target`, or lower when the peak would pass `peak_max`.
void Normalize(std::vector<float> &x, double rms_target, double peak_max) {
  double s = 0, peak = 0;
  for (float v : x) s += double(v) * v, peak = std::max(peak, double(std::abs(v)));
  const double rms = std::sqrt(s / std::max<size_t>(1, x.size()));
  if (rms > 0) {
    const double k = std::min(rms_target / rms, peak_max / peak);
    for (auto &v : x) v = float(v * k);
  }
}

}  // namespace

SpeakerTraits SampleSpeaker(uint64_t seed, int speaker) {
  Rng rng = DeriveRng(seed ^ 0x73706b72ULL, uint64_t(speaker));
  std::uniform_real_distribution<double> u(0, 1);
  SpeakerTraits s;
  const bool low = u(rng) < 0.5;
  s.f0 = low ? 85 + 65 * u(rng) : 165 + 90 * u(rng);
  s.formant_scale = low ? 0.88 + 0.12 * u(rng) : 1.0 + 0.15 * u(rng);
  s.rate = 0.85 + 0.35 * u(rng);
  s.breathiness = 0.02 + 0.13 * u(rng);
  s.gain = 0.3 + 0.5 * u(rng);
  return s;
}

std::vector<float> SynthesizeWord(const std::string &word, const SpeakerTraits &spk, Rng &rng, int num_samples,
                                  int fs) {
  if (word.empty()) throw std::invalid_argument("SynthesizeWord: empty word");
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> g(0, 1);
  const auto tmpl = WordTemplate(word);

  // Per-utterance variation around the speaker's traits.
  const double f0 = spk.f0 * (0.92 + 0.16 * u(rng));
  const double slope = (Fnv1a(word) % 2 ? 0.15 : -0.2) + 0.1 * (u(rng) - 0.5);
  std::vector<Segment> segs = tmpl;
  int len = 0;
  for (auto &s : segs) {
    const double k = spk.formant_scale * (0.96 + 0.08 * u(rng));
    s.f1 *= k;
    s.f2 *= s.kind == SegKind::kVowel || s.kind == SegKind::kNasal ? k : (0.9 + 0.2 * u(rng));
    s.f3 *= k;
    s.ms *= (0.9 + 0.2 * u(rng)) / spk.rate;
    len += int(s.ms * fs / 1000);
  }
  len = std::min(len, num_samples - 1);
  const int margin = int(0.05 * fs);
  const int span = std::max(0, num_samples - len - 2 * margin);
  const int onset = std::min(num_samples - len, margin + int(u(rng) * span));

  std::vector<float> out(num_samples, 0.f);
  Resonator r1, r2, r3;
  BandPass noise_filter;
  const double a = 1 - std::exp(-1.0 / (0.008 * fs));  // ~8 ms glides
  Glide gf1{segs[0].f1 > 0 ? segs[0].f1 : 500, a}, gf2{segs[0].f2, a}, gf3{segs[0].f3 > 0 ? segs[0].f3 : 2500, a};
  Glide gvoice{0, a}, gnoise{0, a}, gcenter{segs[0].f2, a};
  double phase = 0, tilt = 0;
  int n = onset;
  std::vector<float> voiced(num_samples, 0.f), noisy(num_samples, 0.f);
  for (size_t i = 0; i < segs.size() && n < num_samples; ++i) {
    const Segment &s = segs[i];
    const int count = int(s.ms * fs / 1000);
    for (int j = 0; j < count && n < num_samples; ++j, ++n) {
      const double progress = double(n - onset) / std::max(1, len);
      const double pitch = f0 * (1 + slope * (progress - 0.5));
      const bool voiced_seg = s.kind == SegKind::kVowel || s.kind == SegKind::kNasal;
      const double f1 = gf1.Step(voiced_seg ? s.f1 : gf1.value), f2 = gf2.Step(voiced_seg ? s.f2 : gf2.value),
                   f3 = gf3.Step(voiced_seg ? s.f3 : gf3.value);
      const double av = gvoice.Step(s.kind == SegKind::kVowel ? 1.0 : s.kind == SegKind::kNasal ? 0.4 : 0.0);
      const double an = gnoise.Step(s.kind == SegKind::kFricative ? 0.5 : s.kind == SegKind::kBurst ? 1.0 : 0.0);
      const double fc = gcenter.Step(voiced_seg ? gcenter.value : s.f2);

      phase += pitch / fs;
      double src = 0;
      if (phase >= 1) {
        phase -= 1;
        src = 1;
      }
      tilt = 0.9 * tilt + src;
      const double excitation = av * (tilt + spk.breathiness * g(rng));
      double y = r1.Step(excitation, f1, 60 + 0.05 * f1, fs);
      y = r2.Step(y, f2, 80 + 0.04 * f2, fs);
      y = r3.Step(y, f3, 120, fs);
      voiced[n] = float(y);
      noisy[n] = float(an * noise_filter.Step(g(rng), fc, s.kind == SegKind::kBurst ? 2500 : 900, fs));
    }
  }
  // Balance the paths before mixing so fricatives stay audible.
  double ev = 0, en = 0;
  for (int i = 0; i < num_samples; ++i) ev += double(voiced[i]) * voiced[i], en += double(noisy[i]) * noisy[i];
  const double kn = en > 0 && ev > 0 ? 0.35 * std::sqrt(ev / en) : 1.0;
  double peak = 0;
  for (int i = 0; i < num_samples; ++i) {
    out[i] = float(voiced[i] + kn * noisy[i]);
    peak = std::max(peak, double(std::abs(out[i])));
  }
  // Fade the edges of the active region.
  const int fade = int(0.005 * fs);
  for (int i = 0; i < fade; ++i) {
    const double w = double(i) / fade;
    if (onset + i < num_samples) out[onset + i] *= float(w);
    if (n - 1 - i >= 0) out[n - 1 - i] *= float(w);
  }
  const double gain = spk.gain * (0.7 + 0.3 * u(rng));
  if (peak > 0)
    for (auto &v : out) v = float(v * gain / peak);
  return out;
}

// ---------------------------------------------------------------------------

const std::vector<std::string> &NoiseCategories() {
  static const std::vector<std::string> all = {"babble", "blue",  "brown",   "cafe",   "engine", "fan",
                                               "hum50",  "hum60", "keyboard", "office", "pink",   "rain",
                                               "sweep",  "traffic", "violet", "white",  "wind"};
  return all;
}

const std::vector<std::string> &TrainNoiseCategories() {
  static const std::vector<std::string> v = {"babble", "blue", "brown", "engine", "fan",   "hum50",
                                             "office", "pink", "rain",  "sweep",  "white", "wind"};
  return v;
}

const std::vector<std::string> &TestNoiseCategories() {
  static const std::vector<std::string> v = {"cafe", "hum60", "keyboard", "traffic", "violet"};
  return v;
}

namespace {

std::vector<double> White(int n, Rng &rng) {
  std::normal_distribution<double> g(0, 1);
  std::vector<double> x(n);
  for (auto &v : x) v = g(rng);
  return x;
}

// Paul Kellet's economy pink filter.
std::vector<double> Pink(int n, Rng &rng) {
  auto w = White(n, rng);
  double b0 = 0, b1 = 0, b2 = 0;
  for (auto &v : w) {
    b0 = 0.99765 * b0 + v * 0.0990460;
    b1 = 0.96300 * b1 + v * 0.2965164;
    b2 = 0.57000 * b2 + v * 1.0526913;
    v = b0 + b1 + b2 + v * 0.1848;
  }
  return w;
}

std::vector<double> Brown(int n, Rng &rng) {
  auto w = White(n, rng);
  double acc = 0;
  for (auto &v : w) v = acc = 0.995 * acc + v;
  return w;
}

std::vector<double> Diff(std::vector<double> x) {
  for (size_t i = x.size(); i-- > 1;) x[i] -= x[i - 1];
  return x;
}

std::vector<double> Hum(int n, double base, int fs, Rng &rng) {
  std::uniform_real_distribution<double> u(0, kTwoPi);
  std::vector<double> x(n, 0.0);
  for (int h = 1; h <= 12; ++h) {
    const double ph = u(rng), amp = 1.0 / h;
    for (int i = 0; i < n; ++i) x[i] += amp * std::sin(kTwoPi * base * h * i / fs + ph);
  }
  auto w = White(n, rng);
  for (int i = 0; i < n; ++i) x[i] += 0.02 * w[i];
  return x;
}

std::vector<double> Babble(int n, int talkers, int fs, Rng &rng) {
  std::uniform_int_distribution<int> letter('a', 'z'), wlen(3, 7);
  std::vector<double> x(n, 0.0);
  for (int t = 0; t < talkers; ++t) {
    const SpeakerTraits spk = SampleSpeaker(rng(), int(rng() % 1000));
    for (int pos = -int(rng() % fs); pos < n; pos += int(0.35 * fs)) {
      std::string w;
      for (int k = wlen(rng); k > 0; --k) w.push_back(char(letter(rng)));
      const auto clip = SynthesizeWord(w, spk, rng, int(0.5 * fs), fs);
      for (int i = 0; i < int(clip.size()); ++i)
        if (pos + i >= 0 && pos + i < n) x[pos + i] += clip[i];
    }
  }
  return x;
}

void AddClicks(std::vector<double> &x, double rate_hz, double lo, double hi, double decay_ms, double amp, int fs,
               Rng &rng) {
  std::uniform_real_distribution<double> u(0, 1);
  const int n = int(x.size());
  for (int i = 0; i < n; ++i) {
    if (u(rng) >= rate_hz / fs) continue;
    const double f = lo + (hi - lo) * u(rng), a = amp * (0.3 + 0.7 * u(rng));
    const int len = int(decay_ms * 5e-3 * fs);
    for (int j = 0; j < len && i + j < n; ++j)
      x[i + j] += a * std::exp(-j / (decay_ms * 1e-3 * fs)) * std::sin(kTwoPi * f * j / fs);
  }
}

std::vector<double> SlowEnvelope(int n, double max_hz, int fs, Rng &rng) {
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> env(n, 1.0);
  for (int k = 0; k < 3; ++k) {
    const double f = max_hz * (0.2 + 0.8 * u(rng)), ph = kTwoPi * u(rng);
    for (int i = 0; i < n; ++i) env[i] += 0.3 * std::sin(kTwoPi * f * i / fs + ph);
  }
  return env;
}

}  // namespace

std::vector<float> SynthesizeNoise(const std::string &category, int num_samples, Rng &rng, int fs) {
  const int n = num_samples;
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> x;
  if (category == "white") {
    x = White(n, rng);
  } else if (category == "pink") {
    x = Pink(n, rng);
  } else if (category == "brown") {
    x = Brown(n, rng);
  } else if (category == "blue") {
    x = Diff(Pink(n, rng));
  } else if (category == "violet") {
    x = Diff(White(n, rng));
  } else if (category == "hum50") {
    x = Hum(n, 50, fs, rng);
  } else if (category == "hum60") {
    x = Hum(n, 60, fs, rng);
  } else if (category == "babble") {
    x = Babble(n, 6, fs, rng);
  } else if (category == "cafe") {
    x = Babble(n, 4, fs, rng);
    double e = 0;
    for (double v : x) e += v * v;
    AddClicks(x, 3, 2000, 5000, 30, 3 * std::sqrt(e / n), fs, rng);
  } else if (category == "traffic") {
    x = Brown(n, rng);
    const auto env = SlowEnvelope(n, 0.5, fs, rng);
    BandPass lp;
    for (int i = 0; i < n; ++i) x[i] = env[i] * lp.Step(x[i], 120, 300, fs);
  } else if (category == "rain") {
    x = Diff(Pink(n, rng));
    for (auto &v : x) v *= 0.3;
    AddClicks(x, 400, 3000, 7000, 2, 1.0, fs, rng);
  } else if (category == "wind") {
    auto w = White(n, rng);
    const auto env = SlowEnvelope(n, 0.7, fs, rng);
    BandPass bp;
    x.resize(n);
    for (int i = 0; i < n; ++i) x[i] = env[i] * env[i] * bp.Step(w[i], 200 + 150 * env[i], 250, fs);
  } else if (category == "fan") {
    x = Hum(n, 90 + 60 * u(rng), fs, rng);
    const auto p = Pink(n, rng);
    for (int i = 0; i < n; ++i) x[i] = 0.3 * x[i] + p[i];
  } else if (category == "engine") {
    const double f = 30 + 30 * u(rng);
    x.assign(n, 0.0);
    double ph = 0;
    for (int i = 0; i < n; ++i) {
      ph += f * (1 + 0.05 * std::sin(kTwoPi * 0.3 * i / fs)) / fs;
      x[i] = 2 * (ph - std::floor(ph)) - 1;
    }
    BandPass lp;
    const auto b = Brown(n, rng);
    for (int i = 0; i < n; ++i) x[i] = lp.Step(x[i], 400, 600, fs) + 0.05 * b[i];
  } else if (category == "keyboard") {
    x = White(n, rng);
    for (auto &v : x) v *= 0.02;
    AddClicks(x, 8, 1500, 4000, 4, 1.0, fs, rng);
  } else if (category == "sweep") {
    x = White(n, rng);
    for (auto &v : x) v *= 0.05;
    double ph = 0;
    const double lo = 300 + 500 * u(rng), hi = 2000 + 2000 * u(rng), period = 0.5 + u(rng);
    for (int i = 0; i < n; ++i) {
      const double t = std::fmod(double(i) / fs, period) / period;
      ph += (lo + (hi - lo) * t) / fs;
      x[i] += std::sin(kTwoPi * ph);
    }
  } else if (category == "office") {
    x = Pink(n, rng);
    const auto b = Babble(n, 2, fs, rng);
    double ep = 0, eb = 0;
    for (int i = 0; i < n; ++i) ep += x[i] * x[i], eb += b[i] * b[i];
    const double k = eb > 0 ? 0.5 * std::sqrt(ep / eb) : 0;
    for (int i = 0; i < n; ++i) x[i] += k * b[i];
    AddClicks(x, 0.5, 900, 1400, 150, 2 * std::sqrt(ep / n), fs, rng);
  } else {
    throw std::invalid_argument("unknown noise category '" + category + "'");
  }
  std::vector<float> out(x.begin(), x.end());
  Normalize(out, 0.1, 0.95);
  return out;
}

// ---------------------------------------------------------------------------

void SynthCorpusConfig::Validate() const {
  if (keywords.empty()) throw std::invalid_argument("synth: need at least one keyword");
  if (fillers.empty()) throw std::invalid_argument("synth: need at least one filler word");
  for (const auto &w : fillers)
    if (std::find(keywords.begin(), keywords.end(), w) != keywords.end())
      throw std::invalid_argument("synth: '" + w + "' is both keyword and filler");
  if (clips_per_class < 1) throw std::invalid_argument("synth: clips per class must be positive");
  if (valid_speakers < 0 || test_speakers < 0 || speakers <= valid_speakers + test_speakers)
    throw std::invalid_argument("synth: speaker split leaves no training speakers");
  if (noise_clips < 1 || !(noise_seconds >= 1)) throw std::invalid_argument("synth: need >= 1 noise clip of >= 1 s");
}

std::string SynthCorpusConfig::ToJson() const {
  return nlohmann::json{{"keywords", keywords},
                        {"fillers", fillers},
                        {"clips_per_class", clips_per_class},
                        {"speakers", speakers},
                        {"valid_speakers", valid_speakers},
                        {"test_speakers", test_speakers},
                        {"noise_clips", noise_clips},
                        {"noise_seconds", noise_seconds},
                        {"seed", seed}}
      .dump();
}

SynthCorpusConfig SynthCorpusConfig::FromJson(const std::string &text) {
  const auto j = nlohmann::json::parse(text);
  SynthCorpusConfig c;
  c.keywords = j.value("keywords", c.keywords);
  c.fillers = j.value("fillers", c.fillers);
  c.clips_per_class = j.value("clips_per_class", c.clips_per_class);
  c.speakers = j.value("speakers", c.speakers);
  c.valid_speakers = j.value("valid_speakers", c.valid_speakers);
  c.test_speakers = j.value("test_speakers", c.test_speakers);
  c.noise_clips = j.value("noise_clips", c.noise_clips);
  c.noise_seconds = j.value("noise_seconds", c.noise_seconds);
  c.seed = j.value("seed", c.seed);
  c.Validate();
  return c;
}

SynthCorpus WriteSynthCorpus(const SynthCorpusConfig &config, const fs::path &root) {
  config.Validate();
  SynthCorpus corpus{root / "speech", root / "noise", 0, 0};
  fs::create_directories(corpus.speech_root);
  std::ofstream valid_list(corpus.speech_root / "validation_list.txt"),
      test_list(corpus.speech_root / "testing_list.txt");
  const int first_valid = config.speakers - config.valid_speakers - config.test_speakers;
  const int first_test = config.speakers - config.test_speakers;

  const int classes = int(config.keywords.size()) + 1;
  for (int c = 0; c < classes; ++c) {
    const bool filler = c == classes - 1;
    std::map<std::pair<std::string, int>, int> takes;
    for (int j = 0; j < config.clips_per_class; ++j) {
      const int speaker = j % config.speakers;
      const std::string &word =
          filler ? config.fillers[(j / config.speakers + j) % config.fillers.size()] : config.keywords[c];
      Rng rng = DeriveRng(config.seed, (uint64_t(c) << 32) | uint64_t(j));
      const auto samples = SynthesizeWord(word, SampleSpeaker(config.seed, speaker), rng);
      char name[64];
      std::snprintf(name, sizeof name, "%08x_nohash_%d.wav",
                    unsigned(Fnv1a(std::to_string(config.seed) + "/" + std::to_string(speaker))),
                    takes[{word, speaker}]++);
      fs::create_directories(corpus.speech_root / word);
      WriteWav(corpus.speech_root / word / name, AudioClip::Mono(samples));
      const std::string rel = word + "/" + name;
      if (speaker >= first_test)
        test_list << rel << "\n";
      else if (speaker >= first_valid)
        valid_list << rel << "\n";
      ++corpus.num_clips;
    }
  }

  for (size_t k = 0; k < NoiseCategories().size(); ++k) {
    const std::string &cat = NoiseCategories()[k];
    fs::create_directories(corpus.noise_root / cat);
    for (int i = 0; i < config.noise_clips; ++i) {
      Rng rng = DeriveRng(config.seed ^ 0x6e6f697365ULL, (uint64_t(k) << 32) | uint64_t(i));
      const auto x = SynthesizeNoise(cat, int(config.noise_seconds * 16000), rng);
      WriteWav(corpus.noise_root / cat / (std::to_string(i) + ".wav"), AudioClip::Mono(x));
      ++corpus.num_noise_clips;
    }
  }
  spdlog::info("synthesized {} utterances and {} noise clips under {}", corpus.num_clips, corpus.num_noise_clips,
               root.string());
  return corpus;
}

}  // namespace dakws

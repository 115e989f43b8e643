// include/dakws/synth.h

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

#ifndef DAKWS_SYNTH_H_
#define DAKWS_SYNTH_H_

// Self-contained stand-in corpora: formant-synthesized words laid out like
// the Speech Commands tree, and generated noise categories.

#include <filesystem>
#include <string>
#include <vector>

#include "dakws/roomsim.h"

namespace dakws {

struct SpeakerTraits {
  double f0 = 120;            // Hz
  double formant_scale = 1;   // vocal-tract length proxy
  double rate = 1;            // >1 speaks faster
  double breathiness = 0.05;  // aspiration noise mixed into voicing
  double gain = 0.5;          // peak amplitude
};

SpeakerTraits SampleSpeaker(uint64_t seed, int speaker);

// One second of audio; the word starts at a random onset drawn from `rng`.
std::vector<float> SynthesizeWord(const std::string &word, const SpeakerTraits &speaker, Rng &rng,
                                  int num_samples = 16000, int fs = 16000);

const std::vector<std::string> &NoiseCategories();
const std::vector<std::string> &TrainNoiseCategories();
const std::vector<std::string> &TestNoiseCategories();
std::vector<float> SynthesizeNoise(const std::string &category, int num_samples, Rng &rng, int fs = 16000);

struct SynthCorpusConfig {
  std::vector<std::string> keywords = {"yes", "no"};
  std::vector<std::string> fillers = {"bed", "bird", "cat"};
  int clips_per_class = 300;
  int speakers = 60;
  int valid_speakers = 6, test_speakers = 6;  // the last speakers, disjoint from training
  int noise_clips = 3;
  double noise_seconds = 4;
  uint64_t seed = 1;

  void Validate() const;
  static SynthCorpusConfig FromJson(const std::string &text);
  std::string ToJson() const;
};

struct SynthCorpus {
  std::filesystem::path speech_root;  // <word>/<speaker>_nohash_<n>.wav plus split lists
  std::filesystem::path noise_root;   // <category>/<n>.wav
  int num_clips = 0, num_noise_clips = 0;
};

SynthCorpus WriteSynthCorpus(const SynthCorpusConfig &config, const std::filesystem::path &root);

}  // namespace dakws

#endif  // DAKWS_SYNTH_H_

// include/dakws/audio_io.h

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

#ifndef DAKWS_AUDIO_IO_H_
#define DAKWS_AUDIO_IO_H_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dakws/geometry.h"

namespace dakws {

// Multi-channel audio with samples normalized to [-1, 1].
struct AudioClip {
  int sample_rate = 16000;
  std::vector<std::vector<float>> channels;

  AudioClip() = default;
  AudioClip(int rate, std::vector<std::vector<float>> data)
      : sample_rate(rate), channels(std::move(data)) {}
  static AudioClip Mono(std::vector<float> samples, int rate = 16000);

  size_t NumChannels() const { return channels.size(); }
  size_t NumSamples() const { return channels.empty() ? 0 : channels[0].size(); }
  // Throws if the clip breaks the shape / rate / finiteness invariants.
  void Validate() const;
};

enum class WavEncoding { kPcm16, kFloat32 };

AudioClip ReadWav(const std::filesystem::path &path);

// Writes a RIFF WAV. Samples outside [-1, 1] are clipped; the number of
// clipped samples is returned (and logged as a warning when nonzero).
size_t WriteWav(const std::filesystem::path &path, const AudioClip &clip,
                WavEncoding encoding = WavEncoding::kFloat32);

enum class Split { kTrain, kValid, kTest };
const char *SplitName(Split split);
Split ParseSplit(const std::string &name);

struct ManifestEntry {
  std::string path;
  std::string word;
  int class_index = 0;
  std::string speaker;
  Split split = Split::kTrain;
  bool operator==(const ManifestEntry &) const = default;
};

// Clean-corpus manifest. Keywords occupy classes [0, K); every other word
// maps to the filler class C - 1 = K.
struct DatasetManifest {
  std::vector<std::string> keywords;
  int num_classes = 0;
  std::vector<ManifestEntry> entries;

  int FillerIndex() const { return num_classes - 1; }
  std::vector<ManifestEntry> Select(Split split) const;
  bool operator==(const DatasetManifest &) const = default;
};

// Walks `root`/<word>/*.wav. Splits follow validation_list.txt /
// testing_list.txt when present, otherwise the corpus' SHA-1 speaker hash.
DatasetManifest ScanGscDataset(const std::filesystem::path &root,
                               const std::vector<std::string> &keywords);

// Hash-based split of a GSC-style filename ("<speaker>_nohash_<n>.wav").
Split HashSplit(const std::string &filename, double validation_pct = 10,
                double testing_pct = 10);

void SaveManifest(const DatasetManifest &manifest,
                  const std::filesystem::path &path);
DatasetManifest LoadManifest(const std::filesystem::path &path);

// One rendered utterance.
struct RenderRecord {
  std::string path;         // rendered mixture
  std::string source_path;  // clean utterance
  std::string noise_category;
  int zone = 0;
  double azimuth_deg = 0;
  std::optional<double> snr_db;  // nullopt = rendered without noise
  SceneSpec scene;
  int class_index = 0;
  int num_channels = 0;
  int num_samples = 0;
  int valid_frames = 0;  // STFT frames covered by the utterance
  Split split = Split::kTrain;
  bool operator==(const RenderRecord &) const = default;
};

void SaveRenderManifest(const std::vector<RenderRecord> &records,
                        const std::filesystem::path &path);
std::vector<RenderRecord> LoadRenderManifest(const std::filesystem::path &path);

}  // namespace dakws

#endif  // DAKWS_AUDIO_IO_H_

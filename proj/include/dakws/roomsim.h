// include/dakws/roomsim.h

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

#ifndef DAKWS_ROOMSIM_H_
#define DAKWS_ROOMSIM_H_

#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "dakws/audio_io.h"
#include "dakws/dsp.h"
#include "dakws/geometry.h"

namespace dakws {

using Rng = std::mt19937_64;

// Per-record RNG stream derived from (seed, index).
Rng DeriveRng(uint64_t seed, uint64_t index);

// Sabine inversion alpha = 0.1611 V / (S T60), clipped to (0, 1].
double SabineAbsorption(double lx, double ly, double lz, double rt60);

// Absorption whose image-source energy decay (Schroeder, -5..-25 dB) matches
// `rt60`, solved by bisection. Shoebox image-source fields are not diffuse,
// so the Sabine value alone misses the target decay. Returns 1.0 when the
// Sabine estimate saturates.
double CalibratedAbsorption(double lx, double ly, double lz, double rt60, int fs = 16000);

// Uniform room: 3-8 x 3-5 x 2.5-4 m, RT60 in [0.05, 0.8] s.
RoomSpec SampleRoom(Rng &rng);

// K zones of width FOV/K. Intervals are left-closed; an azimuth equal to the
// FOV falls into the last zone. Label 0 is the no-prior token.
struct ZoneScheme {
  int zones = 6;
  double fov_deg = 180.0;

  static ZoneScheme Front6() { return {6, 180.0}; }
  static ZoneScheme Full12() { return {12, 360.0}; }
  double Width() const { return fov_deg / zones; }
  double Center(int zone) const;
  bool operator==(const ZoneScheme &) const = default;
};

int AzimuthToZone(double azimuth_deg, const ZoneScheme &scheme);

struct ArrayGeometry {
  std::vector<Vec3> mics;  // relative to the array center, local frame
  ZoneScheme scheme;

  // Linear pair along local x, `spacing` apart; front hemisphere, 6 zones.
  static ArrayGeometry Linear2(double spacing = 0.03);
  // Equilateral triangle in the horizontal plane; full circle, 12 zones.
  static ArrayGeometry Triangle3(double side = 0.03);
  static ArrayGeometry ForChannels(int channels);

  int NumMics() const { return static_cast<int>(mics.size()); }
  double Radius() const;
  std::vector<Vec3> WorldPositions(const Vec3 &center, double yaw_deg) const;
};

// RIR length in samples used for a room.
int RirLength(const RoomSpec &room, int fs);

// Image-source RIR with reflection coefficient sqrt(1 - alpha) and 81-tap
// Hann-windowed sinc fractional delays, followed by a 100 Hz high-pass.
std::vector<double> SimulateRir(const RoomSpec &room, const Vec3 &source, const Vec3 &mic, int fs = 16000,
                                bool high_pass = true);

// Samples array pose, target and noise positions inside `room`.
SceneSpec PlaceScene(Rng &rng, const RoomSpec &room, const ArrayGeometry &geometry);

struct RenderedScene {
  AudioClip mixture;
  RenderRecord record;  // path / source / split left to the caller
  // Components before peak normalization: mixture = scale * (target + noise).
  MultiChannel target_image;
  MultiChannel noise_image;  // already scaled to the requested SNR
  double scale = 1.0;
};

// Spatializes `clean` from the target position and `noise` from the noise
// position, mixes at `snr_db` on channel 0 (kNoNoise disables noise) and
// peak-normalizes to 0.9 when the mixture would clip.
RenderedScene RenderScene(std::span<const float> clean, std::span<const float> noise, const SceneSpec &scene,
                          const ArrayGeometry &geometry, double snr_db, int fs = 16000);

// Noise clips grouped by category.
struct NoisePool {
  std::map<std::string, std::vector<std::vector<float>>> categories;
  static NoisePool Load(const std::filesystem::path &root);
  size_t NumClips() const;
};

enum class RenderMode { kTrain, kTest };

struct RenderConfig {
  RenderMode mode = RenderMode::kTrain;
  double snr_db = 5;  // test mode only
  double snr_min_db = 0, snr_max_db = 10;
  bool no_noise = false;
  int channels = 2;
  uint64_t seed = 1;
  std::vector<std::string> train_noise;  // categories used in train mode
  std::vector<std::string> test_noise;   // categories used in test mode
  std::vector<Split> splits = {Split::kTrain, Split::kValid, Split::kTest};
  int max_per_class = 0;  // 0 = unlimited

  static RenderConfig FromJson(const std::string &text);
  std::string ToJson() const;
};

// First draw of every record's RNG stream: U[snr_min, snr_max] in train
// mode, the fixed SNR in test mode, kNoNoise when noise is disabled.
double DrawSnr(Rng &rng, const RenderConfig &config);

// Renders every selected manifest entry into `out_dir`. Per-file failures
// are appended to `failures` and skipped.
std::vector<RenderRecord> BuildDataset(const DatasetManifest &manifest, const NoisePool &noise,
                                       const RenderConfig &config, const std::filesystem::path &out_dir,
                                       std::vector<std::string> *failures = nullptr);

}  // namespace dakws

#endif  // DAKWS_ROOMSIM_H_

// src/roomsim.cc

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

#include "dakws/roomsim.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "dakws/json_io.h"

namespace dakws {

namespace fs = std::filesystem;

namespace {

constexpr int kSincTaps = 81;
constexpr int kSincHalf = kSincTaps / 2;
constexpr int kSincTableSteps = 512;
constexpr double kWallMargin = 0.3;

// Windowed-sinc rows for fractional offsets frac in [-0.5, 0.5]; row q holds
// taps j = -40..40 evaluated at x = j + frac(q).
class SincTable {
 public:
  SincTable() : rows_((kSincTableSteps + 1) * kSincTaps) {
    for (int q = 0; q <= kSincTableSteps; ++q) {
      double frac = -0.5 + double(q) / kSincTableSteps;
      for (int j = -kSincHalf; j <= kSincHalf; ++j) rows_[q * kSincTaps + j + kSincHalf] = Eval(j + frac);
    }
  }
  static double Eval(double x) {
    if (std::abs(x) > kSincTaps / 2.0) return 0.0;
    double window = 0.5 * (1.0 + std::cos(2.0 * kPi * x / kSincTaps));
    double sinc = std::abs(x) < 1e-12 ? 1.0 : std::sin(kPi * x) / (kPi * x);
    return window * sinc;
  }
  const double *Row(int q) const { return rows_.data() + q * kSincTaps; }

 private:
  std::vector<double> rows_;
};

const SincTable &Sinc() {
  static const SincTable table;
  return table;
}

// Adds amp * windowed_sinc(n - delay) into h, linearly interpolating between
// the two nearest tabulated fractional offsets.
void AddPulse(std::vector<double> &h, double delay, double amp) {
  const long center = std::lround(delay);
  const double frac = double(center) - delay;  // in [-0.5, 0.5]
  const double pos = (frac + 0.5) * kSincTableSteps;
  int q = std::min(static_cast<int>(pos), kSincTableSteps - 1);
  const double w1 = pos - q, w0 = 1.0 - w1;
  const double *r0 = Sinc().Row(q);
  const double *r1 = Sinc().Row(q + 1);
  const long first = center - kSincHalf;
  const long lo = std::max(0L, -first);
  const long hi = std::min<long>(kSincTaps, static_cast<long>(h.size()) - first);
  double *out = h.data() + first;
  const double a0 = amp * w0, a1 = amp * w1;
  for (long j = lo; j < hi; ++j) out[j] += a0 * r0[j] + a1 * r1[j];
}

// Allen & Berkley's 100 Hz high-pass; removes the coherent low-frequency
// build-up of the image sum.
void HighPass(std::vector<double> &h, int fs) {
  const double w = 2 * kPi * 100.0 / fs;
  const double r1 = std::exp(-w), b1 = 2 * r1 * std::cos(w), b2 = -r1 * r1, a1 = -(1 + r1);
  double y1 = 0, y2 = 0;
  for (double &v : h) {
    const double y0 = b1 * y1 + b2 * y2 + v;
    v = y0 + a1 * y1 + r1 * y2;
    y2 = y1;
    y1 = y0;
  }
}

}  // namespace

Rng DeriveRng(uint64_t seed, uint64_t index) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(index),
                    static_cast<uint32_t>(index >> 32), 0x6b7773u};
  return Rng(seq);
}

double SabineAbsorption(double lx, double ly, double lz, double rt60) {
  if (rt60 <= 0) throw std::invalid_argument("SabineAbsorption: rt60 must be positive");
  const double volume = lx * ly * lz, surface = 2 * (lx * ly + lx * lz + ly * lz);
  return std::min(1.0, 0.1611 * volume / (surface * rt60));
}

namespace {

// Schroeder decay time (-5..-25 dB regression) of a binned energy envelope.
double SchroederT60(std::span<const double> energy, double bin_seconds) {
  std::vector<double> edc(energy.size());
  double acc = 0;
  for (size_t i = energy.size(); i-- > 0;) edc[i] = acc += energy[i];
  if (!(edc[0] > 0)) return 0;
  double st = 0, sy = 0, stt = 0, sty = 0;
  int n = 0;
  for (size_t i = 0; i < edc.size(); ++i) {
    double db = 10 * std::log10(edc[i] / edc[0]);
    if (db > -5) continue;
    if (db < -25) break;
    double t = i * bin_seconds;
    st += t, sy += db, stt += t * t, sty += t * db, ++n;
  }
  if (n < 2) return 0;
  double slope = (n * sty - st * sy) / (n * stt - st * st);
  return slope < 0 ? -60.0 / slope : 0;
}

}  // namespace

double CalibratedAbsorption(double lx, double ly, double lz, double rt60, int fs) {
  const double sabine = SabineAbsorption(lx, ly, lz, rt60);
  if (sabine >= 1.0) return 1.0;
  RoomSpec room{lx, ly, lz, rt60, sabine};
  const Vec3 source{0.62 * lx, 0.58 * ly, 0.45 * lz}, mic{0.38 * lx, 0.44 * ly, 0.4 * lz};

  // Image energies binned by (time bin, reflection count); the decay for any
  // reflection coefficient is then a cheap polynomial evaluation.
  constexpr int kBin = 16;
  const int length = RirLength(room, fs);
  const int bins = length / kBin + 1;
  const double max_dist = double(length) / fs * kSpeedOfSound;
  std::vector<std::vector<double>> hist(bins);
  auto axis = [&](double s, double m, double len) {
    std::vector<std::pair<double, int>> out;
    const int order = static_cast<int>(std::ceil(max_dist / (2 * len))) + 1;
    for (int n = -order; n <= order; ++n)
      for (int q = 0; q <= 1; ++q) {
        double d = (1 - 2 * q) * s + 2 * n * len - m;
        if (std::abs(d) <= max_dist) out.push_back({d * d, std::abs(n - q) + std::abs(n)});
      }
    return out;
  };
  const auto xs = axis(source.x, mic.x, lx), ys = axis(source.y, mic.y, ly), zs = axis(source.z, mic.z, lz);
  const double max_d2 = max_dist * max_dist;
  for (const auto &[x2, nx] : xs)
    for (const auto &[y2, ny] : ys) {
      if (x2 + y2 > max_d2) continue;
      for (const auto &[z2, nz] : zs) {
        const double d2 = x2 + y2 + z2;
        if (d2 > max_d2) continue;
        const int bin = static_cast<int>(std::sqrt(d2) / kSpeedOfSound * fs) / kBin;
        auto &row = hist[bin];
        const size_t refl = nx + ny + nz;
        if (row.size() <= refl) row.resize(refl + 1, 0.0);
        row[refl] += 1.0 / d2;
      }
    }

  std::vector<double> energy(bins);
  auto t60_for = [&](double alpha) {
    const double r = 1.0 - alpha;  // energy reflection coefficient
    for (int b = 0; b < bins; ++b) {
      double e = 0, p = 1;
      for (double w : hist[b]) {
        e += w * p;
        p *= r;
      }
      energy[b] = e;
    }
    return SchroederT60(energy, double(kBin) / fs);
  };
  // Decay time falls monotonically with absorption.
  double lo = 1e-3, hi = 0.999;
  if (t60_for(lo) <= rt60) return lo;
  if (t60_for(hi) >= rt60) return hi;
  for (int it = 0; it < 40; ++it) {
    double mid = 0.5 * (lo + hi);
    (t60_for(mid) > rt60 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

RoomSpec SampleRoom(Rng &rng) {
  std::uniform_real_distribution<double> ux(3.0, 8.0), uy(3.0, 5.0), uz(2.5, 4.0), ut(0.05, 0.8);
  RoomSpec room;
  room.lx = ux(rng);
  room.ly = uy(rng);
  room.lz = uz(rng);
  room.rt60 = ut(rng);
  room.absorption = CalibratedAbsorption(room.lx, room.ly, room.lz, room.rt60);
  return room;
}

double ZoneScheme::Center(int zone) const {
  if (zone < 1 || zone > zones) throw std::invalid_argument("ZoneScheme: zone " + std::to_string(zone) + " has no center");
  return (zone - 0.5) * Width();
}

int AzimuthToZone(double azimuth_deg, const ZoneScheme &scheme) {
  // A full circle is half-open: 360 is the same direction as 0.
  const bool circle = scheme.fov_deg >= 360.0;
  if (!(azimuth_deg >= 0.0 && (circle ? azimuth_deg < scheme.fov_deg : azimuth_deg <= scheme.fov_deg)))
    throw std::invalid_argument("AzimuthToZone: azimuth " + std::to_string(azimuth_deg) + " outside the " +
                                std::to_string(scheme.fov_deg) + " degree field of view");
  int zone = static_cast<int>(std::floor(azimuth_deg / scheme.Width())) + 1;
  return std::min(zone, scheme.zones);
}

ArrayGeometry ArrayGeometry::Linear2(double spacing) {
  return {{{-spacing / 2, 0, 0}, {spacing / 2, 0, 0}}, ZoneScheme::Front6()};
}

ArrayGeometry ArrayGeometry::Triangle3(double side) {
  const double r = side / std::sqrt(3.0);
  ArrayGeometry g;
  g.scheme = ZoneScheme::Full12();
  for (int i = 0; i < 3; ++i) {
    double a = 2 * kPi * i / 3;
    g.mics.push_back({r * std::cos(a), r * std::sin(a), 0});
  }
  return g;
}

ArrayGeometry ArrayGeometry::ForChannels(int channels) {
  if (channels == 2) return Linear2();
  if (channels == 3) return Triangle3();
  throw std::invalid_argument("no array preset for " + std::to_string(channels) + " channels");
}

double ArrayGeometry::Radius() const {
  double r = 0;
  for (const auto &m : mics) r = std::max(r, m.Norm());
  return r;
}

std::vector<Vec3> ArrayGeometry::WorldPositions(const Vec3 &center, double yaw_deg) const {
  const double c = std::cos(yaw_deg * kPi / 180), s = std::sin(yaw_deg * kPi / 180);
  std::vector<Vec3> out;
  for (const auto &m : mics) out.push_back({center.x + c * m.x - s * m.y, center.y + s * m.x + c * m.y, center.z + m.z});
  return out;
}

int RirLength(const RoomSpec &room, int fs) {
  const double diag = std::sqrt(room.lx * room.lx + room.ly * room.ly + room.lz * room.lz);
  const int decay = static_cast<int>(std::ceil(1.2 * room.rt60 * fs));
  const int direct = static_cast<int>(std::ceil(diag / kSpeedOfSound * fs));
  return std::max(decay, direct) + kSincHalf + 1;
}

std::vector<double> SimulateRir(const RoomSpec &room, const Vec3 &source, const Vec3 &mic, int fs, bool high_pass) {
  if (!room.Contains(source)) throw std::invalid_argument("SimulateRir: source outside room");
  if (!room.Contains(mic)) throw std::invalid_argument("SimulateRir: microphone outside room");
  if ((source - mic).Norm() < 1e-6) throw std::invalid_argument("SimulateRir: source coincides with microphone");
  if (!(room.absorption > 0 && room.absorption <= 1)) throw std::invalid_argument("SimulateRir: absorption outside (0, 1]");

  const int length = RirLength(room, fs);
  std::vector<double> h(length, 0.0);
  const double beta = std::sqrt(1.0 - room.absorption);
  const double samples_per_m = fs / kSpeedOfSound;
  const double max_dist = (length + kSincHalf) / samples_per_m;
  const double max_dist2 = max_dist * max_dist;

  // Image coordinates along one axis: ((1 - 2q) s + 2 n L) with |n - q| + |n|
  // wall reflections.
  struct AxisImage {
    double d;
    int reflections;
  };
  auto axis_images = [&](double s, double m, double len) {
    const int order = static_cast<int>(std::ceil(max_dist / (2 * len))) + 1;
    std::vector<AxisImage> out;
    for (int n = -order; n <= order; ++n)
      for (int q = 0; q <= 1; ++q) {
        double d = (1 - 2 * q) * s + 2 * n * len - m;
        if (std::abs(d) <= max_dist) out.push_back({d, std::abs(n - q) + std::abs(n)});
      }
    return out;
  };
  const auto xs = axis_images(source.x, mic.x, room.lx);
  const auto ys = axis_images(source.y, mic.y, room.ly);
  const auto zs = axis_images(source.z, mic.z, room.lz);

  int max_refl = 0;
  for (const auto *axis : {&xs, &ys, &zs}) {
    int m = 0;
    for (const auto &a : *axis) m = std::max(m, a.reflections);
    max_refl += m;
  }
  std::vector<double> beta_pow(max_refl + 1, 1.0);
  for (int i = 1; i <= max_refl; ++i) beta_pow[i] = beta_pow[i - 1] * beta;

  for (const auto &ix : xs) {
    const double dx2 = ix.d * ix.d;
    if (dx2 > max_dist2) continue;
    for (const auto &iy : ys) {
      const double dxy2 = dx2 + iy.d * iy.d;
      if (dxy2 > max_dist2) continue;
      for (const auto &iz : zs) {
        const double d2 = dxy2 + iz.d * iz.d;
        if (d2 > max_dist2) continue;
        const double gain = beta_pow[ix.reflections + iy.reflections + iz.reflections];
        if (gain == 0.0) continue;
        const double d = std::sqrt(d2);
        AddPulse(h, d * samples_per_m, gain / (4 * kPi * d));
      }
    }
  }
  if (high_pass) HighPass(h, fs);
  return h;
}

SceneSpec PlaceScene(Rng &rng, const RoomSpec &room, const ArrayGeometry &geometry) {
  const double margin = kWallMargin + geometry.Radius();
  if (room.lx <= 2 * margin || room.ly <= 2 * margin || room.lz < 1.5 + kWallMargin)
    throw std::invalid_argument("PlaceScene: room too small for the array");
  std::uniform_real_distribution<double> ux(margin, room.lx - margin), uy(margin, room.ly - margin), uh(1.0, 1.5),
      uyaw(0.0, 360.0), udist(0.5, 5.0);
  // A fully rotationally symmetric joint resample keeps the accepted target
  // azimuth uniform in the array frame.
  std::uniform_real_distribution<double> uaz(0.0, geometry.scheme.fov_deg);
  auto place = [&](const Vec3 &center, double yaw, double az, double dist) {
    const double a = (yaw + az) * kPi / 180.0;
    return Vec3{center.x + dist * std::cos(a), center.y + dist * std::sin(a), center.z};
  };
  for (int attempt = 0; attempt < 1000; ++attempt) {
    SceneSpec scene;
    scene.room = room;
    scene.array_center = {ux(rng), uy(rng), uh(rng)};
    scene.array_yaw_deg = uyaw(rng);
    scene.azimuth_deg = uaz(rng);
    scene.distance = udist(rng);
    scene.target = place(scene.array_center, scene.array_yaw_deg, scene.azimuth_deg, scene.distance);
    if (!room.Contains(scene.target, kWallMargin)) continue;
    bool placed = false;
    for (int k = 0; k < 1000 && !placed; ++k) {
      scene.noise_azimuth_deg = uaz(rng);
      scene.noise_distance = udist(rng);
      scene.noise = place(scene.array_center, scene.array_yaw_deg, scene.noise_azimuth_deg, scene.noise_distance);
      placed = room.Contains(scene.noise, kWallMargin);
    }
    if (!placed) continue;
    scene.zone = AzimuthToZone(scene.azimuth_deg, geometry.scheme);
    return scene;
  }
  throw std::runtime_error("PlaceScene: could not satisfy placement margins after 1000 attempts");
}

RenderedScene RenderScene(std::span<const float> clean, std::span<const float> noise, const SceneSpec &scene,
                          const ArrayGeometry &geometry, double snr_db, int fs) {
  if (clean.empty()) throw std::invalid_argument("RenderScene: empty utterance");
  const auto mics = geometry.WorldPositions(scene.array_center, scene.array_yaw_deg);
  const size_t n = clean.size();
  const std::vector<double> x(clean.begin(), clean.end());

  auto spatialize = [&](const std::vector<double> &src, const Vec3 &pos) {
    MultiChannel out;
    for (const auto &mic : mics) {
      auto y = Convolve(src, SimulateRir(scene.room, pos, mic, fs));
      y.resize(n);
      out.push_back(std::move(y));
    }
    return out;
  };
  RenderedScene out;
  out.target_image = spatialize(x, scene.target);
  MultiChannel mixture;
  const bool with_noise = !(std::isinf(snr_db) && snr_db > 0);
  if (with_noise) {
    if (noise.empty()) throw std::invalid_argument("RenderScene: empty noise");
    std::vector<double> seg(n);
    for (size_t i = 0; i < n; ++i) seg[i] = noise[i % noise.size()];
    out.noise_image = spatialize(seg, scene.noise);
    MixResult mix = MixAtSnr(out.target_image, out.noise_image, snr_db, 0);
    for (auto &ch : out.noise_image)
      for (double &v : ch) v *= mix.gain;
    mixture = std::move(mix.mixture);
  } else {
    mixture = out.target_image;
  }

  double peak = 0;
  for (const auto &ch : mixture)
    for (double v : ch) peak = std::max(peak, std::abs(v));
  out.scale = peak > 1.0 ? 0.9 / peak : 1.0;

  out.mixture.sample_rate = fs;
  for (const auto &ch : mixture) {
    std::vector<float> c(n);
    for (size_t i = 0; i < n; ++i) c[i] = static_cast<float>(ch[i] * out.scale);
    out.mixture.channels.push_back(std::move(c));
  }
  auto &rec = out.record;
  rec.zone = scene.zone;
  rec.azimuth_deg = scene.azimuth_deg;
  rec.snr_db = with_noise ? std::optional<double>(snr_db) : std::nullopt;
  rec.scene = scene;
  rec.num_channels = geometry.NumMics();
  rec.num_samples = static_cast<int>(n);
  rec.valid_frames = StftConfig{}.NumFrames(n);
  return out;
}

NoisePool NoisePool::Load(const fs::path &root) {
  if (!fs::is_directory(root)) throw std::runtime_error("NoisePool: not a directory: " + root.string());
  NoisePool pool;
  std::vector<fs::path> dirs;
  for (const auto &d : fs::directory_iterator(root))
    if (d.is_directory()) dirs.push_back(d.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto &dir : dirs) {
    std::vector<fs::path> files;
    for (const auto &f : fs::directory_iterator(dir))
      if (f.path().extension() == ".wav") files.push_back(f.path());
    std::sort(files.begin(), files.end());
    for (const auto &f : files) {
      AudioClip clip = ReadWav(f);
      pool.categories[dir.filename().string()].push_back(std::move(clip.channels[0]));
    }
  }
  return pool;
}

size_t NoisePool::NumClips() const {
  size_t n = 0;
  for (const auto &[name, clips] : categories) n += clips.size();
  return n;
}

RenderConfig RenderConfig::FromJson(const std::string &text) {
  auto j = nlohmann::json::parse(text);
  RenderConfig c;
  std::string mode = j.value("mode", "train");
  if (mode != "train" && mode != "test") throw std::invalid_argument("render config: mode must be train or test");
  c.mode = mode == "train" ? RenderMode::kTrain : RenderMode::kTest;
  c.snr_db = j.value("snr_db", c.snr_db);
  c.snr_min_db = j.value("snr_min_db", c.snr_min_db);
  c.snr_max_db = j.value("snr_max_db", c.snr_max_db);
  c.no_noise = j.value("no_noise", c.no_noise);
  c.channels = j.value("channels", c.channels);
  c.seed = j.value("seed", c.seed);
  c.train_noise = j.value("train_noise", c.train_noise);
  c.test_noise = j.value("test_noise", c.test_noise);
  c.max_per_class = j.value("max_per_class", c.max_per_class);
  if (j.contains("splits")) {
    c.splits.clear();
    for (const auto &s : j.at("splits")) c.splits.push_back(ParseSplit(s.get<std::string>()));
  }
  return c;
}

std::string RenderConfig::ToJson() const {
  nlohmann::json j = {{"mode", mode == RenderMode::kTrain ? "train" : "test"},
                      {"snr_db", snr_db},
                      {"snr_min_db", snr_min_db},
                      {"snr_max_db", snr_max_db},
                      {"no_noise", no_noise},
                      {"channels", channels},
                      {"seed", seed},
                      {"train_noise", train_noise},
                      {"test_noise", test_noise},
                      {"max_per_class", max_per_class}};
  for (Split s : splits) j["splits"].push_back(SplitName(s));
  return j.dump(2);
}

double DrawSnr(Rng &rng, const RenderConfig &config) {
  if (config.no_noise) return kNoNoise;
  if (config.mode == RenderMode::kTest) return config.snr_db;
  return std::uniform_real_distribution<double>(config.snr_min_db, config.snr_max_db)(rng);
}

std::vector<RenderRecord> BuildDataset(const DatasetManifest &manifest, const NoisePool &noise,
                                       const RenderConfig &config, const fs::path &out_dir,
                                       std::vector<std::string> *failures) {
  const ArrayGeometry geometry = ArrayGeometry::ForChannels(config.channels);
  std::vector<std::string> categories;
  if (!config.no_noise) {
    std::set<std::string> train(config.train_noise.begin(), config.train_noise.end());
    for (const auto &c : config.test_noise)
      if (train.count(c)) throw std::invalid_argument("render config: noise category '" + c + "' is in both splits");
    categories = config.mode == RenderMode::kTrain ? config.train_noise : config.test_noise;
    if (categories.empty())
      for (const auto &[name, clips] : noise.categories) categories.push_back(name);
    for (const auto &c : categories) {
      auto it = noise.categories.find(c);
      if (it == noise.categories.end() || it->second.empty())
        throw std::invalid_argument("render: noise category '" + c + "' is empty or missing");
    }
    if (categories.empty()) throw std::invalid_argument("render: empty noise pool");
  }

  std::vector<const ManifestEntry *> selected;
  std::map<std::pair<int, int>, int> taken;
  for (const auto &e : manifest.entries) {
    if (std::find(config.splits.begin(), config.splits.end(), e.split) == config.splits.end()) continue;
    int &count = taken[{static_cast<int>(e.split), e.class_index}];
    if (config.max_per_class > 0 && count >= config.max_per_class) continue;
    ++count;
    selected.push_back(&e);
  }

  fs::create_directories(out_dir);
  std::vector<RenderRecord> records;
  for (size_t i = 0; i < selected.size(); ++i) {
    const ManifestEntry &entry = *selected[i];
    try {
      Rng rng = DeriveRng(config.seed, i);
      AudioClip clean = ReadWav(entry.path);
      if (clean.sample_rate != 16000) throw std::runtime_error("sample rate " + std::to_string(clean.sample_rate) + " != 16000");
      const double snr = DrawSnr(rng, config);
      RoomSpec room = SampleRoom(rng);
      SceneSpec scene = PlaceScene(rng, room, geometry);
      std::string category;
      std::span<const float> noise_clip;
      std::vector<float> segment;
      if (!config.no_noise) {
        category = categories[std::uniform_int_distribution<size_t>(0, categories.size() - 1)(rng)];
        const auto &clips = noise.categories.at(category);
        const auto &clip = clips[std::uniform_int_distribution<size_t>(0, clips.size() - 1)(rng)];
        const size_t n = clean.NumSamples();
        const size_t offset = clip.size() > n ? std::uniform_int_distribution<size_t>(0, clip.size() - n)(rng) : 0;
        segment.assign(clip.begin() + offset, clip.begin() + std::min(clip.size(), offset + n));
        noise_clip = segment;
      }
      RenderedScene rendered = RenderScene(clean.channels[0], noise_clip, scene, geometry, snr);
      char name[32];
      std::snprintf(name, sizeof(name), "%06zu_", i);
      fs::path out = out_dir / (name + fs::path(entry.path).stem().string() + ".wav");
      WriteWav(out, rendered.mixture, WavEncoding::kFloat32);
      RenderRecord rec = std::move(rendered.record);
      rec.path = out.string();
      rec.source_path = entry.path;
      rec.noise_category = category;
      rec.class_index = entry.class_index;
      rec.split = entry.split;
      records.push_back(std::move(rec));
    } catch (const std::exception &e) {
      std::string msg = entry.path + ": " + e.what();
      spdlog::error("render failed: {}", msg);
      if (failures) failures->push_back(msg);
    }
    if ((i + 1) % 200 == 0) spdlog::info("rendered {}/{}", i + 1, selected.size());
  }
  return records;
}

}  // namespace dakws

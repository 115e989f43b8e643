// src/gsc.cc

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

#include "dakws/gsc.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dakws {

namespace {

constexpr int kInterpHalf = 40;

double WindowedSinc(double x) {
  if (std::abs(x) > kInterpHalf + 0.5) return 0.0;
  const double window = 0.5 * (1.0 + std::cos(2.0 * kPi * x / (2 * kInterpHalf + 1)));
  return std::abs(x) < 1e-12 ? window : window * std::sin(kPi * x) / (kPi * x);
}

}  // namespace

std::vector<double> SteeringDelays(const ArrayGeometry &geometry, double azimuth_deg, int fs) {
  if (!(azimuth_deg >= 0 && azimuth_deg <= geometry.scheme.fov_deg))
    throw std::invalid_argument("SteeringDelays: azimuth " + std::to_string(azimuth_deg) + " outside the array FOV");
  const double a = azimuth_deg * kPi / 180.0;
  const Vec3 u{std::cos(a), std::sin(a), 0};
  std::vector<double> delays;
  for (const auto &p : geometry.mics) delays.push_back(-u.Dot(p) / kSpeedOfSound * fs);
  const double lo = *std::min_element(delays.begin(), delays.end());
  for (double &d : delays) d -= lo;
  return delays;
}

std::vector<double> FractionalShift(std::span<const double> x, double shift) {
  const long n = static_cast<long>(x.size());
  std::vector<double> y(n, 0.0);
  const long k = std::lround(shift);
  const double frac = shift - k;
  if (std::abs(frac) < 1e-12) {
    for (long i = 0; i < n; ++i)
      if (i + k >= 0 && i + k < n) y[i] = x[i + k];
    return y;
  }
  double taps[2 * kInterpHalf + 1];
  for (int j = -kInterpHalf; j <= kInterpHalf; ++j) taps[j + kInterpHalf] = WindowedSinc(frac - j);
  for (long i = 0; i < n; ++i) {
    double acc = 0;
    const long base = i + k;
    const int jlo = static_cast<int>(std::max<long>(-kInterpHalf, -base));
    const int jhi = static_cast<int>(std::min<long>(kInterpHalf, n - 1 - base));
    for (int j = jlo; j <= jhi; ++j) acc += x[base + j] * taps[j + kInterpHalf];
    y[i] = acc;
  }
  return y;
}

MultiChannel AlignChannels(const MultiChannel &x, std::span<const double> delays) {
  if (x.empty() || x.size() != delays.size()) throw std::invalid_argument("AlignChannels: channel/delay count mismatch");
  MultiChannel out;
  for (size_t m = 0; m < x.size(); ++m) {
    if (x[m].size() != x[0].size()) throw std::invalid_argument("AlignChannels: channel length mismatch");
    out.push_back(FractionalShift(x[m], delays[m]));
  }
  return out;
}

std::vector<double> DelayAndSum(const MultiChannel &x, std::span<const double> delays) {
  const MultiChannel aligned = AlignChannels(x, delays);
  std::vector<double> y(aligned[0].size(), 0.0);
  for (const auto &ch : aligned)
    for (size_t i = 0; i < y.size(); ++i) y[i] += ch[i];
  const double inv = 1.0 / aligned.size();
  for (double &v : y) v *= inv;
  return y;
}

MultiChannel BlockingMatrix(const MultiChannel &x, std::span<const double> delays) {
  if (x.size() < 2) throw std::invalid_argument("BlockingMatrix: needs at least two channels");
  const MultiChannel aligned = AlignChannels(x, delays);
  MultiChannel refs;
  for (size_t m = 0; m + 1 < aligned.size(); ++m) {
    std::vector<double> r(aligned[m].size());
    for (size_t i = 0; i < r.size(); ++i) r[i] = aligned[m + 1][i] - aligned[m][i];
    refs.push_back(std::move(r));
  }
  return refs;
}

void GscConfig::Validate() const {
  if (!(mu >= 0 && mu < 2)) throw std::invalid_argument("GscConfig: mu must lie in [0, 2)");
  if (taps <= 0) throw std::invalid_argument("GscConfig: taps must be positive");
  if (!(delta > 0)) throw std::invalid_argument("GscConfig: delta must be positive");
}

GscResult GscProcess(const MultiChannel &x, const ArrayGeometry &geometry, const GscConfig &config,
                     std::span<const MultiChannel> probes) {
  config.Validate();
  if (static_cast<int>(x.size()) != geometry.NumMics())
    throw std::invalid_argument("GscProcess: input has " + std::to_string(x.size()) + " channels, array has " +
                                std::to_string(geometry.NumMics()));
  const auto delays = SteeringDelays(geometry, config.steer_azimuth_deg, config.fs);

  struct Paths {
    std::vector<double> beam;
    MultiChannel refs;
  };
  auto split = [&](const MultiChannel &s) { return Paths{DelayAndSum(s, delays), BlockingMatrix(s, delays)}; };
  const Paths main = split(x);
  std::vector<Paths> side;
  for (const auto &p : probes) {
    if (p.size() != x.size() || p[0].size() != x[0].size())
      throw std::invalid_argument("GscProcess: probe shape differs from input");
    side.push_back(split(p));
  }

  const long n = static_cast<long>(main.beam.size());
  const int taps = config.taps;
  const int lookahead = taps / 2;
  const size_t num_refs = main.refs.size();
  std::vector<double> w(num_refs * taps, 0.0);

  // Tap k of reference r at time t reads refs[r][t + lookahead - k].
  auto fill = [&](const MultiChannel &refs, long t, std::vector<double> &buf) {
    for (size_t r = 0; r < num_refs; ++r)
      for (int k = 0; k < taps; ++k) {
        const long idx = t + lookahead - k;
        buf[r * taps + k] = idx >= 0 && idx < n ? refs[r][idx] : 0.0;
      }
  };

  GscResult result;
  result.enhanced.resize(n);
  result.probes.assign(probes.size(), std::vector<double>(n));
  result.lookahead = lookahead;
  std::vector<double> buf(w.size()), probe_buf(w.size());
  for (long t = 0; t < n; ++t) {
    fill(main.refs, t, buf);
    double yhat = 0, energy = 0;
    for (size_t i = 0; i < w.size(); ++i) {
      yhat += w[i] * buf[i];
      energy += buf[i] * buf[i];
    }
    for (size_t p = 0; p < side.size(); ++p) {
      fill(side[p].refs, t, probe_buf);
      double py = 0;
      for (size_t i = 0; i < w.size(); ++i) py += w[i] * probe_buf[i];
      result.probes[p][t] = side[p].beam[t] - py;
    }
    const double e = main.beam[t] - yhat;
    result.enhanced[t] = e;
    if (config.mu > 0) {
      const double step = config.mu * e / (energy + config.delta);
      double norm2 = 0;
      for (size_t i = 0; i < w.size(); ++i) {
        w[i] += step * buf[i];
        norm2 += w[i] * w[i];
      }
      result.max_weight_norm = std::max(result.max_weight_norm, std::sqrt(norm2));
    }
  }
  double norm2 = 0;
  for (double v : w) norm2 += v * v;
  result.final_weight_norm = std::sqrt(norm2);
  return result;
}

double ZoneSteeringAzimuth(const ArrayGeometry &geometry, int zone) { return geometry.scheme.Center(zone); }

}  // namespace dakws

// include/dakws/gsc.h

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

#ifndef DAKWS_GSC_H_
#define DAKWS_GSC_H_

#include <span>
#include <vector>

#include "dakws/dsp.h"
#include "dakws/roomsim.h"

namespace dakws {

// Far-field arrival delays (samples) of a plane wave from `azimuth_deg`,
// shifted so the earliest microphone has delay 0.
std::vector<double> SteeringDelays(const ArrayGeometry &geometry, double azimuth_deg, int fs = 16000);

// y[n] = x(n + shift) by 81-tap Hann-windowed sinc interpolation; samples
// outside the signal read as zero. Integer shifts are exact copies.
std::vector<double> FractionalShift(std::span<const double> x, double shift);

// Aligns every channel by advancing it by its arrival delay.
MultiChannel AlignChannels(const MultiChannel &x, std::span<const double> delays);

std::vector<double> DelayAndSum(const MultiChannel &x, std::span<const double> delays);

// Differences of adjacent aligned channels: M - 1 noise references.
MultiChannel BlockingMatrix(const MultiChannel &x, std::span<const double> delays);

struct GscConfig {
  double steer_azimuth_deg = 90;
  int taps = 64;
  double mu = 0.1;
  double delta = 1e-6;
  int fs = 16000;

  void Validate() const;
};

struct GscResult {
  std::vector<double> enhanced;
  // Same weights applied (without adaptation) to each probe signal; used to
  // split the output into known components.
  std::vector<std::vector<double>> probes;
  // Output is time-aligned with the delay-and-sum beam. The adaptive filter
  // reads taps/2 samples ahead on the references.
  int group_delay = 0;
  int lookahead = 0;
  double final_weight_norm = 0;
  double max_weight_norm = 0;
};

// Fixed beam minus NLMS-filtered blocking-matrix references; adapts on every
// sample. Probes must have the same shape as `x`.
GscResult GscProcess(const MultiChannel &x, const ArrayGeometry &geometry, const GscConfig &config,
                     std::span<const MultiChannel> probes = {});

// Steering azimuth for a zone label: the zone center.
double ZoneSteeringAzimuth(const ArrayGeometry &geometry, int zone);

}  // namespace dakws

#endif  // DAKWS_GSC_H_

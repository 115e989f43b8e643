// include/dakws/geometry.h

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

#ifndef DAKWS_GEOMETRY_H_
#define DAKWS_GEOMETRY_H_

#include <cmath>
#include <vector>

namespace dakws {

inline constexpr double kSpeedOfSound = 343.0;  // m/s
inline constexpr double kPi = 3.14159265358979323846;

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3 &o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3 &o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double Dot(const Vec3 &o) const { return x * o.x + y * o.y + z * o.z; }
  double Norm() const { return std::sqrt(Dot(*this)); }
  bool operator==(const Vec3 &) const = default;
};

// Shoebox room with uniform surface absorption.
struct RoomSpec {
  double lx = 5, ly = 4, lz = 3;  // m
  double rt60 = 0.3;              // s
  double absorption = 0.5;        // energy absorption coefficient, (0, 1]

  double Volume() const { return lx * ly * lz; }
  double Surface() const { return 2 * (lx * ly + lx * lz + ly * lz); }
  bool Contains(const Vec3 &p, double margin = 0) const {
    return p.x > margin && p.x < lx - margin && p.y > margin &&
           p.y < ly - margin && p.z > margin && p.z < lz - margin;
  }
  bool operator==(const RoomSpec &) const = default;
};

// A sampled acoustic scene. Azimuths are in the array frame: 0 deg points
// along the array's local +x axis, 90 deg is broadside (local +y).
struct SceneSpec {
  RoomSpec room;
  Vec3 array_center;
  double array_yaw_deg = 0;  // rotation of the array's local frame about z
  Vec3 target;
  Vec3 noise;
  double azimuth_deg = 0;  // true target azimuth
  double noise_azimuth_deg = 0;
  double distance = 1;  // horizontal target distance (m)
  double noise_distance = 1;
  int zone = 1;
  bool operator==(const SceneSpec &) const = default;
};

// Azimuth (degrees, [0, 360)) of `p` seen from `center` in an array frame
// rotated by `yaw_deg`.
inline double AzimuthInArrayFrame(const Vec3 &center, double yaw_deg,
                                  const Vec3 &p) {
  double world = std::atan2(p.y - center.y, p.x - center.x) * 180.0 / kPi;
  double az = std::fmod(world - yaw_deg, 360.0);
  if (az < 0) az += 360.0;
  if (az >= 360.0) az -= 360.0;
  return az;
}

}  // namespace dakws

#endif  // DAKWS_GEOMETRY_H_

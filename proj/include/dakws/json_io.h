// include/dakws/json_io.h

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

// JSON conversions for the manifest and scene types.

#ifndef DAKWS_JSON_IO_H_
#define DAKWS_JSON_IO_H_

#include <json.hpp>

#include "dakws/audio_io.h"
#include "dakws/geometry.h"

namespace dakws {

inline void to_json(nlohmann::json &j, const Vec3 &v) { j = nlohmann::json::array({v.x, v.y, v.z}); }
inline void from_json(const nlohmann::json &j, Vec3 &v) {
  v = {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

inline void to_json(nlohmann::json &j, const RoomSpec &r) {
  j = {{"dims", {r.lx, r.ly, r.lz}}, {"rt60", r.rt60}, {"absorption", r.absorption}};
}
inline void from_json(const nlohmann::json &j, RoomSpec &r) {
  const auto &d = j.at("dims");
  r.lx = d.at(0).get<double>();
  r.ly = d.at(1).get<double>();
  r.lz = d.at(2).get<double>();
  r.rt60 = j.at("rt60").get<double>();
  r.absorption = j.at("absorption").get<double>();
}

inline void to_json(nlohmann::json &j, const SceneSpec &s) {
  j = {{"room", s.room},
       {"array_center", s.array_center},
       {"array_yaw_deg", s.array_yaw_deg},
       {"target", s.target},
       {"noise", s.noise},
       {"azimuth_deg", s.azimuth_deg},
       {"noise_azimuth_deg", s.noise_azimuth_deg},
       {"distance", s.distance},
       {"noise_distance", s.noise_distance},
       {"zone", s.zone}};
}
inline void from_json(const nlohmann::json &j, SceneSpec &s) {
  s.room = j.at("room").get<RoomSpec>();
  s.array_center = j.at("array_center").get<Vec3>();
  s.array_yaw_deg = j.at("array_yaw_deg").get<double>();
  s.target = j.at("target").get<Vec3>();
  s.noise = j.at("noise").get<Vec3>();
  s.azimuth_deg = j.at("azimuth_deg").get<double>();
  s.noise_azimuth_deg = j.at("noise_azimuth_deg").get<double>();
  s.distance = j.at("distance").get<double>();
  s.noise_distance = j.at("noise_distance").get<double>();
  s.zone = j.at("zone").get<int>();
}

inline void to_json(nlohmann::json &j, const ManifestEntry &e) {
  j = {{"path", e.path}, {"word", e.word}, {"class", e.class_index}, {"speaker", e.speaker}, {"split", SplitName(e.split)}};
}
inline void from_json(const nlohmann::json &j, ManifestEntry &e) {
  e.path = j.at("path").get<std::string>();
  e.word = j.at("word").get<std::string>();
  e.class_index = j.at("class").get<int>();
  e.speaker = j.at("speaker").get<std::string>();
  e.split = ParseSplit(j.at("split").get<std::string>());
}

inline void to_json(nlohmann::json &j, const RenderRecord &r) {
  j = {{"path", r.path},
       {"source_path", r.source_path},
       {"noise_category", r.noise_category},
       {"zone", r.zone},
       {"azimuth_deg", r.azimuth_deg},
       {"snr_db", r.snr_db ? nlohmann::json(*r.snr_db) : nlohmann::json(nullptr)},
       {"scene", r.scene},
       {"class", r.class_index},
       {"channels", r.num_channels},
       {"samples", r.num_samples},
       {"valid_frames", r.valid_frames},
       {"split", SplitName(r.split)}};
}
inline void from_json(const nlohmann::json &j, RenderRecord &r) {
  r.path = j.at("path").get<std::string>();
  r.source_path = j.at("source_path").get<std::string>();
  r.noise_category = j.at("noise_category").get<std::string>();
  r.zone = j.at("zone").get<int>();
  r.azimuth_deg = j.at("azimuth_deg").get<double>();
  const auto &snr = j.at("snr_db");
  r.snr_db = snr.is_null() ? std::nullopt : std::optional<double>(snr.get<double>());
  r.scene = j.at("scene").get<SceneSpec>();
  r.class_index = j.at("class").get<int>();
  r.num_channels = j.at("channels").get<int>();
  r.num_samples = j.at("samples").get<int>();
  r.valid_frames = j.at("valid_frames").get<int>();
  r.split = ParseSplit(j.at("split").get<std::string>());
}

}  // namespace dakws

#endif  // DAKWS_JSON_IO_H_

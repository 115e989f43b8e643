// src/audio_io.cc

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

#include "dakws/audio_io.h"

#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "dakws/json_io.h"

namespace dakws {

static_assert(std::endian::native == std::endian::little,
              "WAV and checkpoint I/O assume a little-endian host");

namespace fs = std::filesystem;

AudioClip AudioClip::Mono(std::vector<float> samples, int rate) {
  AudioClip clip;
  clip.sample_rate = rate;
  clip.channels.push_back(std::move(samples));
  return clip;
}

void AudioClip::Validate() const {
  if (sample_rate <= 0) throw std::invalid_argument("AudioClip: sample_rate must be positive");
  if (channels.empty()) throw std::invalid_argument("AudioClip: no channels");
  for (const auto &ch : channels) {
    if (ch.size() != channels[0].size())
      throw std::invalid_argument("AudioClip: channels differ in length");
    for (float v : ch)
      if (!std::isfinite(v)) throw std::invalid_argument("AudioClip: non-finite sample");
  }
}

namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T ReadLe(const char *p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void WriteLe(std::ostream &os, T v) {
  os.write(reinterpret_cast<const char *>(&v), sizeof(T));
}

}  // namespace

AudioClip ReadWav(const fs::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("ReadWav: cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  auto fail = [&](const std::string &why) {
    return std::runtime_error("ReadWav: " + path.string() + ": " + why);
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw fail("not a RIFF/WAVE file");

  uint16_t format = 0, num_channels = 0, bits = 0;
  uint32_t rate = 0;
  const char *data = nullptr;
  size_t data_size = 0;
  bool have_fmt = false;
  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char *chunk = bytes.data() + pos;
    uint32_t size = ReadLe<uint32_t>(chunk + 4);
    size_t body = pos + 8;
    if (body + size > bytes.size()) {
      // Tolerate a data chunk whose declared size overruns the file.
      if (std::memcmp(chunk, "data", 4) == 0) size = static_cast<uint32_t>(bytes.size() - body);
      else throw fail("truncated chunk");
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw fail("short fmt chunk");
      format = ReadLe<uint16_t>(chunk + 8);
      num_channels = ReadLe<uint16_t>(chunk + 10);
      rate = ReadLe<uint32_t>(chunk + 12);
      bits = ReadLe<uint16_t>(chunk + 22);
      if (format == kFormatExtensible) {
        if (size < 40) throw fail("short extensible fmt chunk");
        format = ReadLe<uint16_t>(chunk + 8 + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = size;
    }
    pos = body + size + (size & 1);
  }
  if (!have_fmt) throw fail("missing fmt chunk");
  if (data == nullptr) throw fail("missing data chunk");
  if (num_channels == 0 || rate == 0) throw fail("malformed fmt chunk");

  size_t sample_bytes;
  if (format == kFormatPcm && bits == 16) sample_bytes = 2;
  else if (format == kFormatFloat && bits == 32) sample_bytes = 4;
  else throw fail("unsupported encoding (format " + std::to_string(format) + ", " + std::to_string(bits) + " bits)");

  size_t frames = data_size / (sample_bytes * num_channels);
  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.channels.assign(num_channels, std::vector<float>(frames));
  for (size_t n = 0; n < frames; ++n) {
    for (size_t c = 0; c < num_channels; ++c) {
      const char *p = data + (n * num_channels + c) * sample_bytes;
      clip.channels[c][n] = sample_bytes == 2 ? ReadLe<int16_t>(p) / 32768.0f : ReadLe<float>(p);
    }
  }
  return clip;
}

size_t WriteWav(const fs::path &path, const AudioClip &clip, WavEncoding encoding) {
  clip.Validate();
  if (clip.NumSamples() == 0) throw std::invalid_argument("WriteWav: empty clip");
  const uint16_t num_channels = static_cast<uint16_t>(clip.NumChannels());
  const uint16_t bits = encoding == WavEncoding::kPcm16 ? 16 : 32;
  const uint32_t block_align = num_channels * bits / 8;
  const uint32_t data_size = static_cast<uint32_t>(clip.NumSamples() * block_align);

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("WriteWav: cannot open " + path.string() + " for writing");
  os.write("RIFF", 4);
  WriteLe<uint32_t>(os, 36 + data_size);
  os.write("WAVEfmt ", 8);
  WriteLe<uint32_t>(os, 16);
  WriteLe<uint16_t>(os, encoding == WavEncoding::kPcm16 ? kFormatPcm : kFormatFloat);
  WriteLe<uint16_t>(os, num_channels);
  WriteLe<uint32_t>(os, static_cast<uint32_t>(clip.sample_rate));
  WriteLe<uint32_t>(os, static_cast<uint32_t>(clip.sample_rate) * block_align);
  WriteLe<uint16_t>(os, static_cast<uint16_t>(block_align));
  WriteLe<uint16_t>(os, bits);
  os.write("data", 4);
  WriteLe<uint32_t>(os, data_size);

  size_t clipped = 0;
  std::vector<char> buf(data_size);
  char *out = buf.data();
  for (size_t n = 0; n < clip.NumSamples(); ++n) {
    for (size_t c = 0; c < num_channels; ++c) {
      float v = clip.channels[c][n];
      if (v > 1.0f || v < -1.0f) {
        ++clipped;
        v = std::clamp(v, -1.0f, 1.0f);
      }
      if (encoding == WavEncoding::kPcm16) {
        long q = std::lround(static_cast<double>(v) * 32768.0);
        int16_t s = static_cast<int16_t>(std::clamp(q, -32768L, 32767L));
        std::memcpy(out, &s, 2);
        out += 2;
      } else {
        std::memcpy(out, &v, 4);
        out += 4;
      }
    }
  }
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!os) throw std::runtime_error("WriteWav: write failed for " + path.string());
  if (clipped > 0)
    spdlog::warn("WriteWav: {} samples clipped to [-1, 1] in {}", clipped, path.string());
  return clipped;
}

const char *SplitName(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  return "train";
}

Split ParseSplit(const std::string &name) {
  if (name == "train") return Split::kTrain;
  if (name == "valid") return Split::kValid;
  if (name == "test") return Split::kTest;
  throw std::invalid_argument("unknown split tag '" + name + "'");
}

std::vector<ManifestEntry> DatasetManifest::Select(Split split) const {
  std::vector<ManifestEntry> out;
  for (const auto &e : entries)
    if (e.split == split) out.push_back(e);
  return out;
}

Split HashSplit(const std::string &filename, double validation_pct, double testing_pct) {
  // Mirrors which_set() from the Speech Commands release: the speaker part of
  // the name is SHA-1 hashed and bucketed modulo 2^27.
  constexpr uint32_t kMaxWavsPerClass = (1u << 27) - 1;
  std::string hash_name = filename;
  if (auto p = hash_name.find("_nohash_"); p != std::string::npos) hash_name.resize(p);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(hash_name.data(), hash_name.size(), digest, &len, EVP_sha1(), nullptr);
  uint32_t tail = (uint32_t(digest[16]) << 24) | (uint32_t(digest[17]) << 16) |
                  (uint32_t(digest[18]) << 8) | uint32_t(digest[19]);
  double pct = (tail % (kMaxWavsPerClass + 1u)) * (100.0 / kMaxWavsPerClass);
  if (pct < validation_pct) return Split::kValid;
  if (pct < validation_pct + testing_pct) return Split::kTest;
  return Split::kTrain;
}

namespace {

std::set<std::string> ReadList(const fs::path &path) {
  std::set<std::string> items;
  std::ifstream is(path);
  std::string line;
  while (std::getline(is, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) items.insert(line);
  }
  return items;
}

}  // namespace

DatasetManifest ScanGscDataset(const fs::path &root, const std::vector<std::string> &keywords) {
  if (keywords.empty()) throw std::invalid_argument("ScanGscDataset: keyword list is empty");
  if (!fs::is_directory(root)) throw std::runtime_error("ScanGscDataset: not a directory: " + root.string());

  std::vector<std::string> words;
  for (const auto &d : fs::directory_iterator(root)) {
    std::string name = d.path().filename().string();
    if (d.is_directory() && !name.empty() && name[0] != '_' && name[0] != '.') words.push_back(name);
  }
  std::sort(words.begin(), words.end());
  for (const auto &kw : keywords)
    if (std::find(words.begin(), words.end(), kw) == words.end())
      throw std::runtime_error("ScanGscDataset: keyword '" + kw + "' not found under " + root.string());

  const fs::path valid_list = root / "validation_list.txt";
  const fs::path test_list = root / "testing_list.txt";
  const bool use_lists = fs::exists(valid_list) || fs::exists(test_list);
  std::set<std::string> valid_items, test_items;
  if (use_lists) {
    valid_items = ReadList(valid_list);
    test_items = ReadList(test_list);
  }

  DatasetManifest manifest;
  manifest.keywords = keywords;
  manifest.num_classes = static_cast<int>(keywords.size()) + 1;
  std::unordered_map<std::string, int> class_of;
  for (size_t i = 0; i < keywords.size(); ++i) class_of[keywords[i]] = static_cast<int>(i);

  size_t counts[3] = {0, 0, 0};
  for (const auto &word : words) {
    std::vector<std::string> files;
    for (const auto &f : fs::directory_iterator(root / word))
      if (f.is_regular_file() && f.path().extension() == ".wav") files.push_back(f.path().filename().string());
    std::sort(files.begin(), files.end());
    for (const auto &file : files) {
      ManifestEntry e;
      e.path = (root / word / file).string();
      e.word = word;
      auto it = class_of.find(word);
      e.class_index = it == class_of.end() ? manifest.FillerIndex() : it->second;
      auto p = file.find("_nohash_");
      e.speaker = p == std::string::npos ? fs::path(file).stem().string() : file.substr(0, p);
      if (use_lists) {
        std::string rel = word + "/" + file;
        e.split = valid_items.count(rel) ? Split::kValid : test_items.count(rel) ? Split::kTest : Split::kTrain;
      } else {
        e.split = HashSplit(file);
      }
      ++counts[static_cast<int>(e.split)];
      manifest.entries.push_back(std::move(e));
    }
  }
  if (manifest.entries.empty()) throw std::runtime_error("ScanGscDataset: no WAV files under " + root.string());
  spdlog::info("scanned {}: {} utterances (train {}, valid {}, test {}), {} classes", root.string(),
               manifest.entries.size(), counts[0], counts[1], counts[2], manifest.num_classes);
  return manifest;
}

namespace {

template <typename F>
void ForEachJsonLine(const fs::path &path, F &&fn) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open manifest " + path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    try {
      fn(nlohmann::json::parse(line));
    } catch (const std::exception &e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": malformed manifest line: " + e.what());
    }
  }
}

std::ofstream OpenForWrite(const fs::path &path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return os;
}

}  // namespace

void SaveManifest(const DatasetManifest &manifest, const fs::path &path) {
  auto os = OpenForWrite(path);
  os << nlohmann::json{{"keywords", manifest.keywords}, {"num_classes", manifest.num_classes}}.dump() << '\n';
  for (const auto &e : manifest.entries) os << nlohmann::json(e).dump() << '\n';
}

DatasetManifest LoadManifest(const fs::path &path) {
  DatasetManifest manifest;
  ForEachJsonLine(path, [&](const nlohmann::json &j) {
    if (j.contains("keywords")) {
      manifest.keywords = j.at("keywords").get<std::vector<std::string>>();
      manifest.num_classes = j.at("num_classes").get<int>();
    } else {
      manifest.entries.push_back(j.get<ManifestEntry>());
    }
  });
  return manifest;
}

void SaveRenderManifest(const std::vector<RenderRecord> &records, const fs::path &path) {
  auto os = OpenForWrite(path);
  for (const auto &r : records) os << nlohmann::json(r).dump() << '\n';
}

std::vector<RenderRecord> LoadRenderManifest(const fs::path &path) {
  std::vector<RenderRecord> records;
  ForEachJsonLine(path, [&](const nlohmann::json &j) { records.push_back(j.get<RenderRecord>()); });
  return records;
}

}  // namespace dakws

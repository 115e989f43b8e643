// tests/test_util.h

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

#ifndef DAKWS_TESTS_TEST_UTIL_H_
#define DAKWS_TESTS_TEST_UTIL_H_

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "dakws/geometry.h"

namespace dakws::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string &tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("dakws_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path &path() const { return path_; }
  std::filesystem::path operator/(const std::string &name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Sum of random tones below `max_hz`; evaluable at fractional sample times,
// so exact plane waves can be synthesized without an interpolator.
class MultiTone {
 public:
  MultiTone(unsigned seed, int count = 40, double max_hz = 5000, int fs = 16000) : fs_(fs) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> f(80.0, max_hz), ph(0, 2 * kPi), a(0.2, 1.0);
    for (int i = 0; i < count; ++i) tones_.push_back({f(rng), ph(rng), a(rng) / count});
  }
  double operator()(double t_samples) const {
    double v = 0;
    for (const auto &t : tones_) v += t.amp * std::sin(2 * kPi * t.hz * t_samples / fs_ + t.phase);
    return v;
  }
  std::vector<double> Render(size_t n, double delay = 0) const {
    std::vector<double> x(n);
    for (size_t i = 0; i < n; ++i) x[i] = (*this)(double(i) - delay);
    return x;
  }

 private:
  struct Tone {
    double hz, phase, amp;
  };
  int fs_;
  std::vector<Tone> tones_;
};

inline double Energy(const std::vector<double> &x, size_t begin = 0, size_t end = SIZE_MAX) {
  double e = 0;
  for (size_t i = begin; i < std::min(end, x.size()); ++i) e += x[i] * x[i];
  return e;
}

}  // namespace dakws::testing

#endif  // DAKWS_TESTS_TEST_UTIL_H_

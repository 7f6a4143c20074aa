// Copyright 2026 The Cantus Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "cantus/autodiff.hpp"
#include "cantus/lexicon.hpp"
#include "cantus/ops.hpp"
#include "cantus/score.hpp"

namespace cantus::test {

/// Small deterministic generator for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  }
  int integer(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(rng_() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  bool chance(double p) { return uniform(0.0, 1.0) < p; }

  Tensor tensor(const Shape& shape, double lo = -2.0, double hi = 2.0) {
    Tensor t(shape);
    for (double& v : t.data()) v = uniform(lo, hi);
    return t;
  }
  // Values kept at least `gap` away from zero (for ops with a kink there).
  Tensor tensor_away_from_zero(const Shape& shape, double gap, double lo = -2.0, double hi = 2.0) {
    Tensor t(shape);
    for (double& v : t.data()) {
      do v = uniform(lo, hi);
      while (std::abs(v) < gap);
    }
    return t;
  }

  /// Random valid score over the lexicon's syllables: rests, melismas and
  /// a spread of tempi and beat lengths.
  MusicalScore score(const PhonemeLexicon& lexicon, int max_notes = 12) {
    const auto syllables = lexicon.syllables();
    MusicalScore s;
    s.tempo_bpm = uniform(60.0, 180.0);
    const int notes = integer(1, max_notes);
    for (int n = 0; n < notes; ++n) {
      NoteEvent ev;
      ev.beat_length = uniform(0.05, 3.0);
      const bool prev_sung = !s.events.empty() && !s.events.back().is_rest();
      const double u = uniform(0.0, 1.0);
      if (u < 0.15) {
        ev.syllable = std::string(kRestMarker);
        ev.midi_pitch = 0;
      } else if (u < 0.35 && prev_sung) {
        ev.syllable = s.events.back().syllable;
        ev.midi_pitch = integer(1, 127);
        ev.continues_syllable = true;
      } else {
        ev.syllable = syllables[static_cast<std::size_t>(integer(0, static_cast<int>(syllables.size()) - 1))];
        ev.midi_pitch = integer(1, 127);
      }
      s.events.push_back(ev);
    }
    return s;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

/// Relative error with an absolute floor so near-zero gradients are judged
/// on absolute scale: |a - n| / max(|a|, |n|, floor).
inline double relative_error(double analytic, double numeric, double floor = 1e-3) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Largest relative error between backward() and central differences over
/// every element of every input. `loss` must rebuild the graph from the
/// current input values.
inline double gradient_check(std::vector<Var> inputs, const std::function<Var()>& loss,
                             double h = 1e-5) {
  for (Var& v : inputs) v.zero_grad();
  backward(loss());
  std::vector<Tensor> analytic;
  for (const Var& v : inputs) analytic.push_back(v.grad());
  double worst = 0.0;
  for (std::size_t p = 0; p < inputs.size(); ++p) {
    Tensor& x = inputs[p].mutable_value();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double saved = x[i];
      x[i] = saved + h;
      const double up = loss().value().item();
      x[i] = saved - h;
      const double down = loss().value().item();
      x[i] = saved;
      worst = std::max(worst, relative_error(analytic[p][i], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

/// sum(f(x) * R) for a fixed random R: a scalar whose gradient exercises
/// every output element with a distinct weight.
inline Var project(const Var& y, std::uint64_t seed = 99) {
  Gen g(seed);
  return ops::sum(ops::mul(y, Var::constant(g.tensor(y.shape(), -1.0, 1.0))));
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("cantus_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string str() const { return path_.string(); }
  std::string operator/(const std::string& leaf) const { return (path_ / leaf).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace cantus::test

// Copyright 2026 The Cantus Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "cantus/score.hpp"

namespace cantus {

inline constexpr std::size_t kMgcDim = 60;
inline constexpr std::size_t kBapDim = 5;
inline constexpr std::size_t kAcousticDim = kMgcDim + kBapDim + 1 + 1;

/// Frame-level vocoder parameters. Matrices are row-major, one row per frame.
/// logf0 is natural-log Hz and meaningful only where vuv marks voicing.
struct AcousticFeatureSequence {
  std::vector<double> mgc;    // T x 60
  std::vector<double> bap;    // T x 5, dB
  std::vector<double> logf0;  // T
  std::vector<double> vuv;    // T, probability or {0, 1}
  double frame_shift_s = kFrameShiftSeconds;

  explicit AcousticFeatureSequence(std::size_t frames = 0)
      : mgc(frames * kMgcDim), bap(frames * kBapDim), logf0(frames), vuv(frames) {}

  std::size_t frames() const { return logf0.size(); }
  void validate() const;

  friend bool operator==(const AcousticFeatureSequence&, const AcousticFeatureSequence&) = default;
};

/// Binary container: "CNTSFEAT", u32 version, u64 T, then the named blocks
/// mgc, bap, logf0, vuv as (u64 name length, name, u64 rows, u64 cols,
/// little-endian f64 payload).
std::string encode_features(const AcousticFeatureSequence& features);
AcousticFeatureSequence decode_features(std::string_view bytes);

void save_features(const std::string& path, const AcousticFeatureSequence& features);
AcousticFeatureSequence load_features(const std::string& path);

}  // namespace cantus

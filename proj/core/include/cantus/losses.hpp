// Copyright 2026 The Cantus Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cantus/features.hpp"
#include "cantus/model.hpp"

namespace cantus {

struct LossWeights {
  double phoneme_duration = 1.0;   // w_pd
  double syllable_duration = 1.0;  // w_sd
  double mgc = 1.0;                // w_m
  double bap = 1.0;                // w_b
  double logf0 = 1.0;              // w_f
  double vuv = 1.0;                // w_u

  void validate() const;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct LossBreakdown {
  double total = 0.0;
  double phoneme_duration = 0.0;
  double syllable_duration = 0.0;
  double mgc = 0.0;
  double bap = 0.0;
  double logf0 = 0.0;
  double vuv = 0.0;
};

/// A weighted composite and its unweighted components. Components a given
/// composite does not cover stay undefined.
struct LossTerms {
  Var total;
  Var phoneme_duration, syllable_duration, mgc, bap, logf0, vuv;

  LossBreakdown values() const;
};

struct DurationTargets {
  Tensor log_targets;                   // [B, N], log(gt + 1)
  std::vector<std::uint8_t> token_mask;  // B*N
  std::vector<Span> spans;              // flat row ranges into B*N
  Tensor syllable_frames;               // [S]

  static DurationTargets build(std::span<const PhonemeTokenSequence* const> sequences,
                               std::size_t max_tokens);
};

struct FrameTargets {
  Tensor mgc;    // [B, T, 60]
  Tensor bap;    // [B, T, 5]
  Tensor logf0;  // [B, T]
  Tensor vuv;    // [B, T]
  std::vector<std::uint8_t> frame_mask;  // B*T real frames
  std::vector<std::uint8_t> mgc_mask;    // B*T*60
  std::vector<std::uint8_t> bap_mask;    // B*T*5
  std::vector<std::uint8_t> f0_mask;     // real, non-rest and gt-voiced

  static FrameTargets build(std::span<const AcousticFeatureSequence* const> features,
                            const FrameBatch& frames);
};

/// w_pd * mean|pred - log(gt + 1)| over tokens plus w_sd * mean over
/// syllables of |sum(exp(pred) - 1) - gt syllable frames|.
LossTerms duration_loss(const Var& pred_log_durations, const DurationTargets& targets,
                        const LossWeights& weights);

/// w_m * MAE(mgc) + w_b * MAE(bap) over real frames.
LossTerms spectral_loss(const Var& mgc, const Var& bap, const FrameTargets& targets,
                        const LossWeights& weights);

/// Spectral loss + w_f * MAE(logF0 on voiced non-rest frames) + w_u * BCE(V/UV).
LossTerms decoder_loss(const DecoderOutput& output, const FrameTargets& targets,
                       const LossWeights& weights);

struct TrainTargets {
  DurationTargets durations;
  FrameTargets frames;
};

TrainTargets build_targets(std::span<const PhonemeTokenSequence* const> sequences,
                           std::span<const AcousticFeatureSequence* const> features,
                           const Predictions& predictions);

/// decoder_loss + duration_loss.
LossTerms total_loss(const Predictions& predictions, const TrainTargets& targets,
                     const LossWeights& weights);

}  // namespace cantus

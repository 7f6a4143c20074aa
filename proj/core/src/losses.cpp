// Copyright 2026 The Cantus Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cantus/losses.hpp"

#include <cmath>

#include "cantus/error.hpp"
#include "cantus/ops.hpp"

namespace cantus {
namespace {

double value_or_zero(const Var& v) { return v.defined() ? v.value().item() : 0.0; }

Var weighted(const Var& a, double wa, const Var& b, double wb) {
  return ops::add(ops::scale(a, wa), ops::scale(b, wb));
}

}  // namespace

void LossWeights::validate() const {
  const double all[] = {phoneme_duration, syllable_duration, mgc, bap, logf0, vuv};
  bool any_positive = false;
  for (double w : all) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("loss weights must be >= 0");
    any_positive = any_positive || w > 0.0;
  }
  if (!any_positive) throw ValidationError("at least one loss weight must be positive");
}

LossBreakdown LossTerms::values() const {
  return {value_or_zero(total), value_or_zero(phoneme_duration), value_or_zero(syllable_duration),
          value_or_zero(mgc),   value_or_zero(bap),              value_or_zero(logf0),
          value_or_zero(vuv)};
}

DurationTargets DurationTargets::build(std::span<const PhonemeTokenSequence* const> sequences,
                                       std::size_t max_tokens) {
  DurationTargets t;
  const std::size_t batch = sequences.size();
  t.log_targets = Tensor({batch, max_tokens}, 0.0);
  t.token_mask.assign(batch * max_tokens, 0);
  std::vector<double> syllables;
  for (std::size_t b = 0; b < batch; ++b) {
    const auto& seq = *sequences[b];
    if (!seq.gt_durations) throw ValidationError("duration targets: sequence lacks durations");
    if (seq.size() > max_tokens) throw ShapeError("duration targets: sequence longer than batch");
    const std::size_t base = b * max_tokens;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      t.log_targets[base + i] = std::log((*seq.gt_durations)[i] + 1.0);
      t.token_mask[base + i] = 1;
    }
    const auto totals = syllable_frame_totals(seq);
    for (std::size_t s = 0; s < seq.syllable_spans.size(); ++s) {
      const auto [begin, end] = seq.syllable_spans[s];
      if (end > seq.size()) throw ValidationError("duration targets: span out of range");
      t.spans.emplace_back(base + begin, base + end);
      syllables.push_back(totals[s]);
    }
  }
  const std::size_t n_syllables = syllables.size();
  t.syllable_frames = Tensor({n_syllables}, std::move(syllables));
  return t;
}

FrameTargets FrameTargets::build(std::span<const AcousticFeatureSequence* const> features,
                                 const FrameBatch& frames) {
  if (features.size() != frames.batch) throw ShapeError("frame targets: batch size mismatch");
  const std::size_t batch = frames.batch, tmax = frames.max_frames;
  FrameTargets t;
  t.mgc = Tensor({batch, tmax, kMgcDim}, 0.0);
  t.bap = Tensor({batch, tmax, kBapDim}, 0.0);
  t.logf0 = Tensor({batch, tmax}, 0.0);
  t.vuv = Tensor({batch, tmax}, 0.0);
  t.frame_mask.assign(batch * tmax, 0);
  t.mgc_mask.assign(batch * tmax * kMgcDim, 0);
  t.bap_mask.assign(batch * tmax * kBapDim, 0);
  t.f0_mask.assign(batch * tmax, 0);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto& f = *features[b];
    if (f.frames() != frames.lengths[b]) {
      throw ValidationError("frame targets: sequence " + std::to_string(b) + " has " +
                            std::to_string(f.frames()) + " frames but durations sum to " +
                            std::to_string(frames.lengths[b]));
    }
    for (std::size_t i = 0; i < f.frames(); ++i) {
      const std::size_t r = b * tmax + i;
      std::copy_n(f.mgc.begin() + i * kMgcDim, kMgcDim, t.mgc.data().begin() + r * kMgcDim);
      std::copy_n(f.bap.begin() + i * kBapDim, kBapDim, t.bap.data().begin() + r * kBapDim);
      std::fill_n(t.mgc_mask.begin() + r * kMgcDim, kMgcDim, 1);
      std::fill_n(t.bap_mask.begin() + r * kBapDim, kBapDim, 1);
      t.logf0[r] = f.logf0[i];
      t.vuv[r] = f.vuv[i];
      t.frame_mask[r] = 1;
      t.f0_mask[r] = (f.vuv[i] >= 0.5 && frames.note_mask[r] != 0.0) ? 1 : 0;
    }
  }
  return t;
}

LossTerms duration_loss(const Var& pred_log_durations, const DurationTargets& targets,
                        const LossWeights& weights) {
  if (pred_log_durations.shape() != targets.log_targets.shape()) {
    throw ShapeError("duration_loss: prediction " + shape_string(pred_log_durations.shape()) +
                     " vs target " + shape_string(targets.log_targets.shape()));
  }
  LossTerms terms;
  Var diff = ops::sub(pred_log_durations, Var::constant(targets.log_targets));
  terms.phoneme_duration = ops::masked_mean(ops::abs(diff), targets.token_mask);

  // Syllable totals in the linear frame domain.
  Var linear = ops::add_scalar(ops::exp(pred_log_durations), -1.0);
  Var sums = ops::segment_sum(linear, targets.spans);
  Var syl_err = ops::abs(ops::sub(sums, Var::constant(targets.syllable_frames)));
  terms.syllable_duration = ops::mean(syl_err);

  terms.total = weighted(terms.phoneme_duration, weights.phoneme_duration,
                         terms.syllable_duration, weights.syllable_duration);
  return terms;
}

LossTerms spectral_loss(const Var& mgc, const Var& bap, const FrameTargets& targets,
                        const LossWeights& weights) {
  if (mgc.shape() != targets.mgc.shape() || bap.shape() != targets.bap.shape()) {
    throw ShapeError("spectral_loss: prediction " + shape_string(mgc.shape()) + "/" +
                     shape_string(bap.shape()) + " vs target " + shape_string(targets.mgc.shape()) +
                     "/" + shape_string(targets.bap.shape()));
  }
  LossTerms terms;
  terms.mgc = ops::masked_mean(ops::abs(ops::sub(mgc, Var::constant(targets.mgc))), targets.mgc_mask);
  terms.bap = ops::masked_mean(ops::abs(ops::sub(bap, Var::constant(targets.bap))), targets.bap_mask);
  terms.total = weighted(terms.mgc, weights.mgc, terms.bap, weights.bap);
  return terms;
}

LossTerms decoder_loss(const DecoderOutput& output, const FrameTargets& targets,
                       const LossWeights& weights) {
  if (output.logf0.shape() != targets.logf0.shape()) {
    throw ShapeError("decoder_loss: logF0 " + shape_string(output.logf0.shape()) + " vs " +
                     shape_string(targets.logf0.shape()));
  }
  LossTerms terms = spectral_loss(output.mgc, output.bap, targets, weights);
  terms.logf0 = ops::masked_mean(ops::abs(ops::sub(output.logf0, Var::constant(targets.logf0))),
                                 targets.f0_mask);
  terms.vuv = ops::masked_mean(ops::bce_with_logits(output.vuv_logit, targets.vuv),
                               targets.frame_mask);
  terms.total = ops::add(terms.total, weighted(terms.logf0, weights.logf0, terms.vuv, weights.vuv));
  return terms;
}

TrainTargets build_targets(std::span<const PhonemeTokenSequence* const> sequences,
                           std::span<const AcousticFeatureSequence* const> features,
                           const Predictions& predictions) {
  return {DurationTargets::build(sequences, predictions.tokens.max_tokens),
          FrameTargets::build(features, predictions.frames)};
}

LossTerms total_loss(const Predictions& predictions, const TrainTargets& targets,
                     const LossWeights& weights) {
  LossTerms dec = decoder_loss(predictions.output, targets.frames, weights);
  LossTerms dur = duration_loss(predictions.log_durations, targets.durations, weights);
  LossTerms out = dec;
  out.phoneme_duration = dur.phoneme_duration;
  out.syllable_duration = dur.syllable_duration;
  out.total = ops::add(dec.total, dur.total);
  return out;
}

}  // namespace cantus

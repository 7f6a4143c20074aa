// Copyright 2026 The Cantus Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cantus/features.hpp"

namespace cantus {

// std::nullopt marks an undefined metric (e.g. correlation of a constant sequence).
using MetricValue = std::optional<double>;

struct RmseCorr {
  double rmse = 0.0;
  MetricValue corr;
};

/// Root-mean-square error and Pearson correlation. Throws ShapeError on a
/// length mismatch or empty input.
RmseCorr rmse_corr(std::span<const double> pred, std::span<const double> gt);

inline constexpr double kVoicingThreshold = 0.5;

struct F0Metrics {
  MetricValue rmse_hz;
  MetricValue corr;
  std::size_t frames = 0;  // commonly voiced frames used
};

/// F0 error in Hz over frames voiced in both sequences (pred thresholded).
F0Metrics f0_metrics(const AcousticFeatureSequence& pred, const AcousticFeatureSequence& gt);

/// Mel-cepstral distortion in dB: frame mean of (10 sqrt(2) / ln 10) *
/// sqrt(sum over coefficients 1..59 of squared differences).
double mcd(std::span<const double> pred_mgc, std::span<const double> gt_mgc);

/// Band aperiodicity distortion: RMS difference over all frames and bands (dB).
double bapd(std::span<const double> pred_bap, std::span<const double> gt_bap);

/// Percentage of frames whose thresholded voicing disagrees.
double vuv_error(std::span<const double> pred_vuv, std::span<const double> gt_vuv);

struct GlobalVariance {
  std::vector<double> values;  // per MGC coefficient
  std::size_t utterances = 0;
  std::size_t skipped = 0;     // utterances with fewer than two frames
};

/// Per-utterance population variance of each coefficient, averaged over utterances.
GlobalVariance global_variance(const std::vector<std::span<const double>>& mgc_per_utterance);

struct EvalPair {
  std::string name;
  AcousticFeatureSequence pred;
  AcousticFeatureSequence gt;
  std::vector<int> pred_durations;  // optional; empty when unavailable
  std::vector<int> gt_durations;
};

struct UtteranceReport {
  std::string name;
  std::size_t frames = 0;
  MetricValue dur_rmse, dur_corr, f0_rmse_hz, f0_corr;
  double mcd_db = 0.0, bapd_db = 0.0, vuv_error_pct = 0.0;
};

struct EvalReport {
  MetricValue dur_rmse, dur_corr, f0_rmse_hz, f0_corr, mcd_db, bapd_db, vuv_error_pct;
  std::vector<UtteranceReport> per_utterance;
  std::vector<std::string> errors;  // pairs that could not be evaluated
  std::string alignment;            // how predicted and reference frames were aligned
};

/// Frame metrics pool all frames of all pairs; duration metrics pool all tokens.
/// Pairs with mismatched lengths are recorded in `errors` and skipped.
EvalReport evaluate(const std::vector<EvalPair>& pairs);

/// The seven report keys, in table order.
const std::vector<std::string>& report_keys();

/// `# ` header lines followed by `key<TAB>value` lines ("undefined" for missing values).
std::string format_report(const EvalReport& report);
std::string format_utterance_table(const EvalReport& report);
/// `coefficient<TAB>gv` rows, one per MGC coefficient.
std::string format_gv_table(const GlobalVariance& gv);

}  // namespace cantus

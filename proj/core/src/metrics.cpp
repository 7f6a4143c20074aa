// Copyright 2026 The Cantus Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cantus/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>

#include "cantus/error.hpp"
#include "cantus/io.hpp"

namespace cantus {
namespace {

void require_equal(const char* what, std::size_t a, std::size_t b) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": length mismatch " + std::to_string(a) + " vs " +
                     std::to_string(b));
  }
}

bool voiced(double v) { return v >= kVoicingThreshold; }

const double kMcdScale = 10.0 * std::numbers::sqrt2 / std::numbers::ln10;

std::string format_metric(const MetricValue& v) { return v ? format_double(*v) : "undefined"; }

}  // namespace

RmseCorr rmse_corr(std::span<const double> pred, std::span<const double> gt) {
  require_equal("rmse_corr", pred.size(), gt.size());
  if (pred.empty()) throw ShapeError("rmse_corr: empty input");
  const double n = static_cast<double>(pred.size());
  double se = 0.0, mp = 0.0, mg = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    se += (pred[i] - gt[i]) * (pred[i] - gt[i]);
    mp += pred[i];
    mg += gt[i];
  }
  mp /= n;
  mg /= n;
  double cov = 0.0, vp = 0.0, vg = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    cov += (pred[i] - mp) * (gt[i] - mg);
    vp += (pred[i] - mp) * (pred[i] - mp);
    vg += (gt[i] - mg) * (gt[i] - mg);
  }
  RmseCorr out;
  out.rmse = std::sqrt(se / n);
  if (vp > 0.0 && vg > 0.0) out.corr = std::clamp(cov / std::sqrt(vp * vg), -1.0, 1.0);
  return out;
}

F0Metrics f0_metrics(const AcousticFeatureSequence& pred, const AcousticFeatureSequence& gt) {
  require_equal("f0_metrics", pred.frames(), gt.frames());
  std::vector<double> p, g;
  for (std::size_t t = 0; t < pred.frames(); ++t) {
    if (voiced(pred.vuv[t]) && voiced(gt.vuv[t])) {
      p.push_back(std::exp(pred.logf0[t]));
      g.push_back(std::exp(gt.logf0[t]));
    }
  }
  F0Metrics out;
  out.frames = p.size();
  if (p.empty()) return out;
  const RmseCorr rc = rmse_corr(p, g);
  out.rmse_hz = rc.rmse;
  out.corr = rc.corr;
  return out;
}

double mcd(std::span<const double> pred_mgc, std::span<const double> gt_mgc) {
  require_equal("mcd", pred_mgc.size(), gt_mgc.size());
  if (pred_mgc.empty() || pred_mgc.size() % kMgcDim != 0) {
    throw ShapeError("mcd: expected a non-empty T x 60 matrix");
  }
  const std::size_t frames = pred_mgc.size() / kMgcDim;
  double total = 0.0;
  for (std::size_t t = 0; t < frames; ++t) {
    double sq = 0.0;
    for (std::size_t d = 1; d < kMgcDim; ++d) {
      const double diff = pred_mgc[t * kMgcDim + d] - gt_mgc[t * kMgcDim + d];
      sq += diff * diff;
    }
    total += kMcdScale * std::sqrt(sq);
  }
  return total / static_cast<double>(frames);
}

double bapd(std::span<const double> pred_bap, std::span<const double> gt_bap) {
  require_equal("bapd", pred_bap.size(), gt_bap.size());
  if (pred_bap.empty() || pred_bap.size() % kBapDim != 0) {
    throw ShapeError("bapd: expected a non-empty T x 5 matrix");
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < pred_bap.size(); ++i) {
    const double diff = pred_bap[i] - gt_bap[i];
    sq += diff * diff;
  }
  return std::sqrt(sq / static_cast<double>(pred_bap.size()));
}

double vuv_error(std::span<const double> pred_vuv, std::span<const double> gt_vuv) {
  require_equal("vuv_error", pred_vuv.size(), gt_vuv.size());
  if (pred_vuv.empty()) throw ShapeError("vuv_error: empty input");
  std::size_t wrong = 0;
  for (std::size_t t = 0; t < pred_vuv.size(); ++t) wrong += voiced(pred_vuv[t]) != voiced(gt_vuv[t]);
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(pred_vuv.size());
}

GlobalVariance global_variance(const std::vector<std::span<const double>>& mgc_per_utterance) {
  GlobalVariance out;
  out.values.assign(kMgcDim, 0.0);
  for (const auto& mgc : mgc_per_utterance) {
    if (mgc.size() % kMgcDim != 0) throw ShapeError("global_variance: expected T x 60 matrices");
    const std::size_t frames = mgc.size() / kMgcDim;
    if (frames < 2) {
      ++out.skipped;
      std::cerr << "warning: global variance skips an utterance with " << frames << " frame(s)\n";
      continue;
    }
    for (std::size_t d = 0; d < kMgcDim; ++d) {
      double mean = 0.0;
      for (std::size_t t = 0; t < frames; ++t) mean += mgc[t * kMgcDim + d];
      mean /= static_cast<double>(frames);
      double var = 0.0;
      for (std::size_t t = 0; t < frames; ++t) {
        const double c = mgc[t * kMgcDim + d] - mean;
        var += c * c;
      }
      out.values[d] += var / static_cast<double>(frames);
    }
    ++out.utterances;
  }
  if (out.utterances) {
    for (double& v : out.values) v /= static_cast<double>(out.utterances);
  }
  return out;
}

EvalReport evaluate(const std::vector<EvalPair>& pairs) {
  EvalReport report;
  report.alignment =
      "frame metrics compare frames aligned by ground-truth durations; duration metrics use the "
      "free-running duration predictor";
  std::vector<double> all_pred_mgc, all_gt_mgc, all_pred_bap, all_gt_bap, all_pred_vuv,
      all_gt_vuv, f0_pred, f0_gt, dur_pred, dur_gt;
  for (const EvalPair& pair : pairs) {
    try {
      if (pair.pred.frames() != pair.gt.frames()) {
        throw ShapeError("frame count mismatch: predicted " + std::to_string(pair.pred.frames()) +
                         " vs reference " + std::to_string(pair.gt.frames()));
      }
      pair.pred.validate();
      pair.gt.validate();
      const bool have_durations = !pair.pred_durations.empty() || !pair.gt_durations.empty();
      if (have_durations) require_equal("durations", pair.pred_durations.size(), pair.gt_durations.size());

      UtteranceReport u;
      u.name = pair.name;
      u.frames = pair.pred.frames();
      u.mcd_db = mcd(pair.pred.mgc, pair.gt.mgc);
      u.bapd_db = bapd(pair.pred.bap, pair.gt.bap);
      u.vuv_error_pct = vuv_error(pair.pred.vuv, pair.gt.vuv);
      const F0Metrics f0 = f0_metrics(pair.pred, pair.gt);
      u.f0_rmse_hz = f0.rmse_hz;
      u.f0_corr = f0.corr;
      if (have_durations && !pair.pred_durations.empty()) {
        std::vector<double> p(pair.pred_durations.begin(), pair.pred_durations.end());
        std::vector<double> g(pair.gt_durations.begin(), pair.gt_durations.end());
        const RmseCorr rc = rmse_corr(p, g);
        u.dur_rmse = rc.rmse;
        u.dur_corr = rc.corr;
        dur_pred.insert(dur_pred.end(), p.begin(), p.end());
        dur_gt.insert(dur_gt.end(), g.begin(), g.end());
      }
      all_pred_mgc.insert(all_pred_mgc.end(), pair.pred.mgc.begin(), pair.pred.mgc.end());
      all_gt_mgc.insert(all_gt_mgc.end(), pair.gt.mgc.begin(), pair.gt.mgc.end());
      all_pred_bap.insert(all_pred_bap.end(), pair.pred.bap.begin(), pair.pred.bap.end());
      all_gt_bap.insert(all_gt_bap.end(), pair.gt.bap.begin(), pair.gt.bap.end());
      all_pred_vuv.insert(all_pred_vuv.end(), pair.pred.vuv.begin(), pair.pred.vuv.end());
      all_gt_vuv.insert(all_gt_vuv.end(), pair.gt.vuv.begin(), pair.gt.vuv.end());
      for (std::size_t t = 0; t < pair.pred.frames(); ++t) {
        if (voiced(pair.pred.vuv[t]) && voiced(pair.gt.vuv[t])) {
          f0_pred.push_back(std::exp(pair.pred.logf0[t]));
          f0_gt.push_back(std::exp(pair.gt.logf0[t]));
        }
      }
      report.per_utterance.push_back(std::move(u));
    } catch (const Error& e) {
      report.errors.push_back(pair.name + ": " + e.what());
    }
  }
  if (!all_pred_mgc.empty()) {
    report.mcd_db = mcd(all_pred_mgc, all_gt_mgc);
    report.bapd_db = bapd(all_pred_bap, all_gt_bap);
    report.vuv_error_pct = vuv_error(all_pred_vuv, all_gt_vuv);
  }
  if (!f0_pred.empty()) {
    const RmseCorr rc = rmse_corr(f0_pred, f0_gt);
    report.f0_rmse_hz = rc.rmse;
    report.f0_corr = rc.corr;
  }
  if (!dur_pred.empty()) {
    const RmseCorr rc = rmse_corr(dur_pred, dur_gt);
    report.dur_rmse = rc.rmse;
    report.dur_corr = rc.corr;
  }
  return report;
}

const std::vector<std::string>& report_keys() {
  static const std::vector<std::string> keys = {
      "Dur RMSE", "Dur CORR", "F0 RMSE (Hz)", "F0 CORR", "MCD (dB)", "BAPD (dB)", "V/UV Error (%)"};
  return keys;
}

std::string format_report(const EvalReport& report) {
  std::string out = "# alignment: " + report.alignment + "\n";
  out += "# utterances: " + std::to_string(report.per_utterance.size()) + " evaluated, " +
         std::to_string(report.errors.size()) + " failed\n";
  const MetricValue values[] = {report.dur_rmse, report.dur_corr, report.f0_rmse_hz,
                                report.f0_corr,  report.mcd_db,   report.bapd_db,
                                report.vuv_error_pct};
  for (std::size_t i = 0; i < report_keys().size(); ++i) {
    out += report_keys()[i] + "\t" + format_metric(values[i]) + "\n";
  }
  return out;
}

std::string format_utterance_table(const EvalReport& report) {
  std::string out = "utterance\tframes";
  for (const auto& key : report_keys()) out += "\t" + key;
  out += "\n";
  for (const UtteranceReport& u : report.per_utterance) {
    out += u.name + "\t" + std::to_string(u.frames) + "\t" + format_metric(u.dur_rmse) + "\t" +
           format_metric(u.dur_corr) + "\t" + format_metric(u.f0_rmse_hz) + "\t" +
           format_metric(u.f0_corr) + "\t" + format_double(u.mcd_db) + "\t" +
           format_double(u.bapd_db) + "\t" + format_double(u.vuv_error_pct) + "\n";
  }
  return out;
}

std::string format_gv_table(const GlobalVariance& gv) {
  std::string out = "# coefficient\tgv\n";
  for (std::size_t d = 0; d < gv.values.size(); ++d) {
    out += std::to_string(d) + "\t" + format_double(gv.values[d]) + "\n";
  }
  return out;
}

}  // namespace cantus

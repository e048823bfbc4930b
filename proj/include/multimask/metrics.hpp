// Copyright (c) 2026 The multimask Authors
// SPDX-License-Identifier: Apache-2.0
//
// Standard monocular depth-evaluation metrics and absolute trajectory error
// over pose snippets.

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "multimask/camera.hpp"
#include "multimask/grid.hpp"

namespace multimask {

struct DepthMetrics {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
};

/// Table-standard depth errors over the valid pixels. Median scaling (when
/// enabled) rescales the prediction by median(gt)/median(pred) first; the
/// prediction is then clamped to [1e-3, cap].
inline DepthMetrics depth_metrics(const DepthMap& pred, const DepthMap& gt,
                                  const Mask& valid, double cap,
                                  bool median_scale) {
  if (!pred.same_shape(gt) || pred.width() != valid.width() ||
      pred.height() != valid.height()) {
    throw std::invalid_argument("depth_metrics: shape mismatch");
  }
  std::vector<double> p_vals, g_vals;
  for (int j = 0; j < pred.height(); ++j) {
    for (int i = 0; i < pred.width(); ++i) {
      if (!valid.at(i, j)) continue;
      p_vals.push_back(pred.at(i, j));
      g_vals.push_back(gt.at(i, j));
    }
  }
  if (p_vals.empty()) {
    throw std::invalid_argument("depth_metrics: no valid pixels");
  }
  double scale = 1.0;
  if (median_scale) {
    auto median = [](std::vector<double> v) {
      std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
      return v[v.size() / 2];
    };
    scale = median(g_vals) / median(p_vals);
  }
  DepthMetrics m;
  const double n = static_cast<double>(p_vals.size());
  for (std::size_t k = 0; k < p_vals.size(); ++k) {
    const double p = std::clamp(p_vals[k] * scale, 1e-3, cap);
    const double g = g_vals[k];
    const double diff = p - g;
    m.abs_rel += std::abs(diff) / g;
    m.sq_rel += diff * diff / g;
    m.rmse += diff * diff;
    const double dlog = std::log(p) - std::log(g);
    m.rmse_log += dlog * dlog;
    const double ratio = std::max(p / g, g / p);
    m.delta1 += ratio < 1.25;
    m.delta2 += ratio < 1.25 * 1.25;
    m.delta3 += ratio < 1.25 * 1.25 * 1.25;
  }
  m.abs_rel /= n;
  m.sq_rel /= n;
  m.rmse = std::sqrt(m.rmse / n);
  m.rmse_log = std::sqrt(m.rmse_log / n);
  m.delta1 /= n;
  m.delta2 /= n;
  m.delta3 /= n;
  return m;
}

struct AteStats {
  double mean = 0.0;
  double stddev = 0.0;
};

/// ATE over every consecutive window of snippet_len poses: each window is
/// re-anchored to its first frame, the predicted translations are scaled by
/// the least-squares ratio s = Σ⟨t_pred,t_gt⟩ / Σ‖t_pred‖², and the window's
/// ATE is the RMSE of the remaining translation differences. Returns the
/// mean and population standard deviation across windows.
inline AteStats ate_snippets(const std::vector<PoseSE3>& pred,
                             const std::vector<PoseSE3>& gt, int snippet_len) {
  if (snippet_len < 2) {
    throw std::invalid_argument("ate_snippets: snippet_len must be >= 2");
  }
  if (pred.size() != gt.size()) {
    throw std::invalid_argument("ate_snippets: sequence lengths differ");
  }
  if (pred.size() < static_cast<std::size_t>(snippet_len)) {
    throw std::invalid_argument("ate_snippets: sequence shorter than snippet");
  }
  std::vector<double> ates;
  for (std::size_t start = 0; start + snippet_len <= pred.size(); ++start) {
    const PoseSE3 p0_inv = pred[start].inverse();
    const PoseSE3 g0_inv = gt[start].inverse();
    double dot = 0.0, norm2 = 0.0;
    std::vector<Eigen::Vector3d> tp, tg;
    for (int k = 0; k < snippet_len; ++k) {
      tp.push_back((p0_inv * pred[start + k]).translation());
      tg.push_back((g0_inv * gt[start + k]).translation());
      dot += tp.back().dot(tg.back());
      norm2 += tp.back().squaredNorm();
    }
    const double s = norm2 > 0.0 ? dot / norm2 : 1.0;
    double sq = 0.0;
    for (int k = 0; k < snippet_len; ++k) {
      sq += (s * tp[static_cast<std::size_t>(k)] -
             tg[static_cast<std::size_t>(k)])
                .squaredNorm();
    }
    ates.push_back(std::sqrt(sq / snippet_len));
  }
  AteStats stats;
  for (double a : ates) stats.mean += a;
  stats.mean /= static_cast<double>(ates.size());
  for (double a : ates) {
    stats.stddev += (a - stats.mean) * (a - stats.mean);
  }
  stats.stddev = std::sqrt(stats.stddev / static_cast<double>(ates.size()));
  return stats;
}

}  // namespace multimask

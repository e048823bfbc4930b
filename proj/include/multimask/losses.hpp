// Copyright (c) 2026 The multimask Authors
// SPDX-License-Identifier: Apache-2.0
//
// Masked photometric reconstruction loss, masked SSIM loss, edge-aware
// smoothness, depth normalization, and the four-scale total loss.
//
// The written losses are sums; implemented as means over unmasked pixels so
// magnitudes stay comparable across mask densities and scales.

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "multimask/grid.hpp"
#include "multimask/masks.hpp"

namespace multimask {

enum class PhotometricNorm { kL1, kL2 };

/// Loss weights of the total objective. Defaults are the published values;
/// beta moves to 0.2 when depth normalization is enabled.
struct LossWeights {
  double alpha = 0.15;
  double beta = 0.03;
  double gamma = 0.85;
  int num_scales = 4;

  static LossWeights defaults(bool depth_normalization) {
    LossWeights w;
    if (depth_normalization) w.beta = 0.2;
    return w;
  }

  void validate() const {
    if (alpha < 0.0 || beta < 0.0 || gamma < 0.0) {
      throw std::invalid_argument("LossWeights: weights must be nonnegative");
    }
    if (num_scales < 1) {
      throw std::invalid_argument("LossWeights: num_scales must be positive");
    }
  }
};

/// Per-scale loss terms (averaged over the two frame directions) and the
/// weighted total. valid_count_* hold unmasked-pixel counts per scale.
struct LossReport {
  std::vector<double> rec;
  std::vector<double> ssim;
  std::vector<double> smooth;
  double total = 0.0;
  std::vector<std::int64_t> valid_count_t;
  std::vector<std::int64_t> valid_count_tm1;
};

/// Mean absolute (or squared) difference over unmasked pixels and channels.
/// Returns 0 when nothing is unmasked.
inline double reconstruction_loss(const ImageBuffer& x, const ImageBuffer& x_hat,
                                  const Mask& m,
                                  PhotometricNorm norm = PhotometricNorm::kL1) {
  if (!x.same_shape(x_hat) || x.width() != m.width() ||
      x.height() != m.height()) {
    throw std::invalid_argument("reconstruction_loss: shape mismatch");
  }
  double sum = 0.0;
  std::int64_t n = 0;
  for (int j = 0; j < x.height(); ++j) {
    for (int i = 0; i < x.width(); ++i) {
      if (!m.at(i, j)) continue;
      for (int c = 0; c < x.channels(); ++c) {
        const double d = x.at(i, j, c) - x_hat.at(i, j, c);
        sum += norm == PhotometricNorm::kL1 ? std::abs(d) : d * d;
        ++n;
      }
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

namespace detail {

/// Per-pixel SSIM map for one channel pair, 3×3 uniform windows (boundary
/// windows use the in-bounds subset), constants per the unit-range
/// convention. Values clamped to [−1, 1].
inline Grid<double> ssim_map(const ImageBuffer& x, const ImageBuffer& y,
                             int channel) {
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  const int w = x.width(), h = x.height();
  Grid<double> out(w, h, 0.0);
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
      int n = 0;
      for (int dj = -1; dj <= 1; ++dj) {
        for (int di = -1; di <= 1; ++di) {
          const int u = i + di, v = j + dj;
          if (u < 0 || u >= w || v < 0 || v >= h) continue;
          const double a = x.at(u, v, channel), b = y.at(u, v, channel);
          sx += a;
          sy += b;
          sxx += a * a;
          syy += b * b;
          sxy += a * b;
          ++n;
        }
      }
      const double inv = 1.0 / n;
      const double mx = sx * inv, my = sy * inv;
      const double vx = sxx * inv - mx * mx;
      const double vy = syy * inv - my * my;
      const double cxy = sxy * inv - mx * my;
      const double ssim = ((2.0 * mx * my + kC1) * (2.0 * cxy + kC2)) /
                          ((mx * mx + my * my + kC1) * (vx + vy + kC2));
      out.at(i, j) = std::clamp(ssim, -1.0, 1.0);
    }
  }
  return out;
}

}  // namespace detail

/// Mean of (1 − SSIM) over unmasked pixels and channels. SSIM windows read
/// all image pixels; the mask gates only which map entries are averaged.
inline double ssim_loss(const ImageBuffer& x, const ImageBuffer& x_hat,
                        const Mask& m) {
  if (!x.same_shape(x_hat) || x.width() != m.width() ||
      x.height() != m.height()) {
    throw std::invalid_argument("ssim_loss: shape mismatch");
  }
  double sum = 0.0;
  std::int64_t n = 0;
  for (int c = 0; c < x.channels(); ++c) {
    const Grid<double> map = detail::ssim_map(x, x_hat, c);
    for (int j = 0; j < x.height(); ++j) {
      for (int i = 0; i < x.width(); ++i) {
        if (!m.at(i, j)) continue;
        sum += 1.0 - map.at(i, j);
        ++n;
      }
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

/// Edge-aware first-order smoothness: forward differences of depth, damped
/// where the image has gradients. The mean runs over all defined difference
/// terms (x terms and y terms pooled together).
inline double smoothness_loss(const DepthMap& d, const ImageBuffer& x) {
  if (d.width() != x.width() || d.height() != x.height()) {
    throw std::invalid_argument("smoothness_loss: shape mismatch");
  }
  const int w = d.width(), h = d.height();
  auto image_grad_x = [&](int i, int j) {
    double g = 0.0;
    for (int c = 0; c < x.channels(); ++c) {
      g += std::abs(x.at(i + 1, j, c) - x.at(i, j, c));
    }
    return g / x.channels();
  };
  auto image_grad_y = [&](int i, int j) {
    double g = 0.0;
    for (int c = 0; c < x.channels(); ++c) {
      g += std::abs(x.at(i, j + 1, c) - x.at(i, j, c));
    }
    return g / x.channels();
  };
  double sum = 0.0;
  std::int64_t n = 0;
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i + 1 < w; ++i) {
      sum += std::abs(d.at(i + 1, j) - d.at(i, j)) * std::exp(-image_grad_x(i, j));
      ++n;
    }
  }
  for (int j = 0; j + 1 < h; ++j) {
    for (int i = 0; i < w; ++i) {
      sum += std::abs(d.at(i, j + 1) - d.at(i, j)) * std::exp(-image_grad_y(i, j));
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

/// Scales the map so its mean becomes 1.
inline DepthMap depth_normalize(const DepthMap& d) {
  double mean = 0.0;
  for (double v : d.grid().values()) mean += v;
  mean /= static_cast<double>(d.size());
  Grid<double> out = d.grid();
  for (double& v : out.values()) v /= mean;
  return DepthMap(std::move(out));
}

// ---------------------------------------------------------------------------
// Pyramids: 2×2 average pooling for images and depths, 2×2 AND for masks.
// Odd trailing rows/columns are dropped (floor division).

inline ImageBuffer pool_image(const ImageBuffer& x) {
  const int w = x.width() / 2, h = x.height() / 2;
  if (w < 1 || h < 1) throw std::invalid_argument("pool_image: too small");
  ImageBuffer out(w, h, x.channels());
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      for (int c = 0; c < x.channels(); ++c) {
        out.at(i, j, c) = 0.25 * (x.at(2 * i, 2 * j, c) + x.at(2 * i + 1, 2 * j, c) +
                                  x.at(2 * i, 2 * j + 1, c) +
                                  x.at(2 * i + 1, 2 * j + 1, c));
      }
    }
  }
  return out;
}

inline DepthMap pool_depth(const DepthMap& d) {
  const int w = d.width() / 2, h = d.height() / 2;
  if (w < 1 || h < 1) throw std::invalid_argument("pool_depth: too small");
  Grid<double> out(w, h, 1.0);
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      out.at(i, j) = 0.25 * (d.at(2 * i, 2 * j) + d.at(2 * i + 1, 2 * j) +
                             d.at(2 * i, 2 * j + 1) + d.at(2 * i + 1, 2 * j + 1));
    }
  }
  return DepthMap(std::move(out));
}

/// A pooled mask pixel is 1 only if all four parents are 1.
inline Mask pool_mask(const Mask& m) {
  const int w = m.width() / 2, h = m.height() / 2;
  if (w < 1 || h < 1) throw std::invalid_argument("pool_mask: too small");
  Mask out = Mask::zeros(w, h);
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      out.set(i, j, m.at(2 * i, 2 * j) && m.at(2 * i + 1, 2 * j) &&
                        m.at(2 * i, 2 * j + 1) && m.at(2 * i + 1, 2 * j + 1));
    }
  }
  return out;
}

struct PyramidLevel {
  ImageBuffer image;
  DepthMap depth;
  MaskSet masks;
};
using Pyramid = std::vector<PyramidLevel>;

inline Pyramid build_pyramid(const ImageBuffer& x, const DepthMap& d,
                             const MaskSet& masks, int num_scales = 4) {
  if (num_scales < 1) {
    throw std::invalid_argument("build_pyramid: num_scales must be positive");
  }
  const int need = 1 << (num_scales - 1);
  if (x.width() < need || x.height() < need) {
    throw std::invalid_argument("build_pyramid: image too small for scale count");
  }
  Pyramid levels;
  levels.push_back(PyramidLevel{x, d, masks});
  for (int l = 1; l < num_scales; ++l) {
    const PyramidLevel& prev = levels.back();
    levels.push_back(PyramidLevel{
        pool_image(prev.image), pool_depth(prev.depth),
        MaskSet{pool_mask(prev.masks.edge), pool_mask(prev.masks.overlap),
                pool_mask(prev.masks.blank)}});
  }
  return levels;
}

/// Runs repeated masking at full resolution, pools everything down, and
/// assembles the weighted multi-scale loss. rec/ssim are averaged over the
/// two directions; smoothness over the two frames' depths. Depth
/// normalization (when enabled) applies to the smoothness depths only.
inline LossReport total_loss(const ImageBuffer& x_t, const ImageBuffer& x_tm1,
                             const DepthMap& d_t, const DepthMap& d_tm1,
                             const PoseSE3& pose_t, const Intrinsics& intr,
                             const LossWeights& weights,
                             bool depth_normalization, int rounds = 3,
                             PhotometricNorm norm = PhotometricNorm::kL1) {
  weights.validate();
  RepeatedMaskingResult rm =
      repeated_masking(x_t, x_tm1, d_t, d_tm1, pose_t, intr, rounds);

  const DepthMap smooth_d_t = depth_normalization ? depth_normalize(d_t) : d_t;
  const DepthMap smooth_d_tm1 =
      depth_normalization ? depth_normalize(d_tm1) : d_tm1;

  Pyramid pyr_t = build_pyramid(x_t, smooth_d_t, rm.masks_t, weights.num_scales);
  Pyramid pyr_tm1 =
      build_pyramid(x_tm1, smooth_d_tm1, rm.masks_tm1, weights.num_scales);

  LossReport report;
  ImageBuffer xhat_t = rm.xhat_t, xhat_tm1 = rm.xhat_tm1;
  for (int l = 0; l < weights.num_scales; ++l) {
    if (l > 0) {
      xhat_t = pool_image(xhat_t);
      xhat_tm1 = pool_image(xhat_tm1);
    }
    const Mask m_t = combine(pyr_t[l].masks);
    const Mask m_tm1 = combine(pyr_tm1[l].masks);
    const double rec_l =
        0.5 * (reconstruction_loss(pyr_t[l].image, xhat_t, m_t, norm) +
               reconstruction_loss(pyr_tm1[l].image, xhat_tm1, m_tm1, norm));
    const double ssim_l = 0.5 * (ssim_loss(pyr_t[l].image, xhat_t, m_t) +
                                 ssim_loss(pyr_tm1[l].image, xhat_tm1, m_tm1));
    const double smooth_l =
        0.5 * (smoothness_loss(pyr_t[l].depth, pyr_t[l].image) +
               smoothness_loss(pyr_tm1[l].depth, pyr_tm1[l].image));
    report.rec.push_back(rec_l);
    report.ssim.push_back(ssim_l);
    report.smooth.push_back(smooth_l);
    report.valid_count_t.push_back(static_cast<std::int64_t>(m_t.count()));
    report.valid_count_tm1.push_back(static_cast<std::int64_t>(m_tm1.count()));
    report.total +=
        weights.alpha * rec_l + weights.beta * smooth_l + weights.gamma * ssim_l;
  }
  return report;
}

}  // namespace multimask

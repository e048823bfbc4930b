// Copyright (c) 2026 The multimask Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable bilinear inverse warping: footprint computation, image
// sampling at continuous coordinates, the full depth+pose reconstruction
// chain, and forward splat accounting of interpolation weights.

#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

#include "multimask/camera.hpp"
#include "multimask/grid.hpp"

namespace multimask {

/// The four integer corners around a continuous coordinate and their
/// bilinear weights, in tl, tr, bl, br order.
///
/// fully_in_bounds: all four corners lie inside the image (the edge-mask
/// criterion). sampleable: every corner with weight > 0 lies inside, so the
/// interpolated value is well defined; a coordinate exactly on the last row
/// or column is sampleable but not fully in bounds.
struct BilinearFootprint {
  std::array<int, 4> corner_x;
  std::array<int, 4> corner_y;
  std::array<double, 4> weight;
  std::array<bool, 4> in_bounds;
  bool fully_in_bounds = false;
  bool sampleable = false;
};

inline BilinearFootprint footprint(double x, double y, int width, int height) {
  BilinearFootprint fp;
  const double x0 = std::floor(x), y0 = std::floor(y);
  const double ax = x - x0, ay = y - y0;  // fractional parts in [0,1)
  const int ix = static_cast<int>(x0), iy = static_cast<int>(y0);
  fp.corner_x = {ix, ix + 1, ix, ix + 1};
  fp.corner_y = {iy, iy, iy + 1, iy + 1};
  fp.weight = {(1.0 - ax) * (1.0 - ay), ax * (1.0 - ay), (1.0 - ax) * ay,
               ax * ay};
  fp.fully_in_bounds = true;
  fp.sampleable = true;
  for (int k = 0; k < 4; ++k) {
    fp.in_bounds[k] = fp.corner_x[k] >= 0 && fp.corner_x[k] < width &&
                      fp.corner_y[k] >= 0 && fp.corner_y[k] < height;
    if (!fp.in_bounds[k]) {
      fp.fully_in_bounds = false;
      if (fp.weight[k] > 0.0) fp.sampleable = false;
    }
  }
  return fp;
}

/// Interpolates all channels of src at (x, y). Returns false (and zeros) if
/// the footprint is not sampleable. When dvdx/dvdy are non-null they receive
/// the analytic partial derivatives of each channel w.r.t. x and y;
/// out-of-bounds zero-weight corners contribute nothing to either.
inline bool sample_with_grad(const ImageBuffer& src, double x, double y,
                             double* value, double* dvdx = nullptr,
                             double* dvdy = nullptr) {
  const int ch = src.channels();
  for (int c = 0; c < ch; ++c) {
    value[c] = 0.0;
    if (dvdx) dvdx[c] = 0.0;
    if (dvdy) dvdy[c] = 0.0;
  }
  const BilinearFootprint fp = footprint(x, y, src.width(), src.height());
  if (!fp.sampleable) return false;
  const double ax = x - std::floor(x), ay = y - std::floor(y);
  // d(weight)/dx and /dy per corner, same tl, tr, bl, br order.
  const std::array<double, 4> dwx = {-(1.0 - ay), (1.0 - ay), -ay, ay};
  const std::array<double, 4> dwy = {-(1.0 - ax), -ax, (1.0 - ax), ax};
  for (int k = 0; k < 4; ++k) {
    if (!fp.in_bounds[k]) continue;
    for (int c = 0; c < ch; ++c) {
      const double v = src.at(fp.corner_x[k], fp.corner_y[k], c);
      value[c] += fp.weight[k] * v;
      if (dvdx) dvdx[c] += dwx[k] * v;
      if (dvdy) dvdy[c] += dwy[k] * v;
    }
  }
  return true;
}

/// Inverse warp: for every target pixel, interpolates src at the recorded
/// continuous coordinates. Pixels that are invalid or not sampleable get 0;
/// they are covered by the edge mask and never enter a loss.
inline ImageBuffer bilinear_sample(const ImageBuffer& src,
                                   const ProjectionRecord& rec) {
  ImageBuffer out(rec.width(), rec.height(), src.channels());
  double value[3];
  for (int j = 0; j < rec.height(); ++j) {
    for (int i = 0; i < rec.width(); ++i) {
      if (!rec.is_valid(i, j)) continue;
      if (!sample_with_grad(src, rec.x.at(i, j), rec.y.at(i, j), value)) {
        continue;
      }
      for (int c = 0; c < src.channels(); ++c) out.at(i, j, c) = value[c];
    }
  }
  return out;
}

struct Reconstruction {
  ImageBuffer image;       // X̂ on the target frame's plane
  ProjectionRecord record; // target-pixel coordinates on the source plane
};

/// Full chain of one reconstruction direction: backproject the target
/// frame's depth, move it by pose, project onto the source plane, and
/// sample the source image there.
inline Reconstruction reconstruct(const ImageBuffer& x_src,
                                  const DepthMap& d_tgt, const PoseSE3& pose,
                                  const Intrinsics& intr) {
  if (x_src.width() != intr.width || x_src.height() != intr.height ||
      d_tgt.width() != intr.width || d_tgt.height() != intr.height) {
    throw std::invalid_argument("reconstruct: shapes do not match intrinsics");
  }
  ProjectionRecord rec =
      project(transform_points(backproject(d_tgt, intr), pose), intr);
  ImageBuffer image = bilinear_sample(x_src, rec);
  return Reconstruction{std::move(image), std::move(rec)};
}

/// Accumulated interpolation weight each target pixel receives.
using SplatBuffer = Grid<double>;

/// Adds every contributing source pixel's four footprint weights at the
/// corner positions on the target plane. Only source pixels that are active
/// and valid contribute; out-of-bounds corners are skipped individually.
inline SplatBuffer splat_weights(const ProjectionRecord& rec, int target_width,
                                 int target_height, const Mask& active) {
  if (active.width() != rec.width() || active.height() != rec.height()) {
    throw std::invalid_argument("splat_weights: active mask shape mismatch");
  }
  SplatBuffer buf(target_width, target_height, 0.0);
  for (int j = 0; j < rec.height(); ++j) {
    for (int i = 0; i < rec.width(); ++i) {
      if (!active.at(i, j) || !rec.is_valid(i, j)) continue;
      const BilinearFootprint fp =
          footprint(rec.x.at(i, j), rec.y.at(i, j), target_width, target_height);
      for (int k = 0; k < 4; ++k) {
        if (fp.in_bounds[k]) {
          buf.at(fp.corner_x[k], fp.corner_y[k]) += fp.weight[k];
        }
      }
    }
  }
  return buf;
}

}  // namespace multimask

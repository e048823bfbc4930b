// Copyright (c) 2026 The multimask Authors
// SPDX-License-Identifier: Apache-2.0
//
// The three reconstruction masks and their iterated combination.
//
// For a frame direction d (the frame whose loss the masks gate):
//   edge    — d's pixel projects outside the other frame's plane, or has
//             non-positive transformed depth.
//   overlap — among d's pixels landing in the same unit interpolation cell
//             on the other plane, only the one nearest the camera survives.
//   blank   — d's pixel receives no interpolation contribution when the
//             other frame's active pixels are splatted onto d's plane.
//
// Repeated masking alternates the two directions, intersecting each mask
// kind across rounds; each frame's active set is the product of its three
// accumulated masks.

#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <utility>

#include "multimask/camera.hpp"
#include "multimask/grid.hpp"
#include "multimask/warp.hpp"

namespace multimask {

/// Accumulated splat weight below this counts as "no interpolation
/// contribution" (strict zero would be fragile next to cell boundaries).
inline constexpr double kBlankWeight = 1e-6;

struct MaskSet {
  Mask edge;
  Mask overlap;
  Mask blank;

  friend bool operator==(const MaskSet&, const MaskSet&) = default;
};

/// Elementwise product of the three masks.
inline Mask combine(const MaskSet& set) {
  return set.edge & set.overlap & set.blank;
}

/// 1 iff the pixel's footprint lies fully inside the target plane and its
/// transformed depth is valid.
inline Mask edge_mask(const ProjectionRecord& rec, int target_width,
                      int target_height) {
  Mask out = Mask::zeros(rec.width(), rec.height());
  for (int j = 0; j < rec.height(); ++j) {
    for (int i = 0; i < rec.width(); ++i) {
      if (!rec.is_valid(i, j)) continue;
      if (footprint(rec.x.at(i, j), rec.y.at(i, j), target_width,
                    target_height)
              .fully_in_bounds) {
        out.set(i, j, true);
      }
    }
  }
  return out;
}

/// Groups active, valid source pixels by unit cell (⌊î⌋, ⌊ĵ⌋) on the target
/// plane. In each cell the pixel with minimum transformed depth survives;
/// ties keep the earliest pixel in row-major source order. Pixels alone in
/// their cell survive; active pixels with invalid depth are left untouched
/// (the edge mask owns them); inactive pixels keep their prior 0.
inline Mask overlap_mask(const ProjectionRecord& rec, int target_width,
                         int target_height, const Mask& active) {
  (void)target_width;
  (void)target_height;  // cells are keyed by floor value, bounds play no role
  if (active.width() != rec.width() || active.height() != rec.height()) {
    throw std::invalid_argument("overlap_mask: active mask shape mismatch");
  }
  struct Entry {
    double z;
    int idx;
  };
  std::map<std::pair<long long, long long>, Entry> best;
  const int w = rec.width(), h = rec.height();
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      if (!active.at(i, j) || !rec.is_valid(i, j)) continue;
      const std::pair<long long, long long> key{
          static_cast<long long>(std::floor(rec.x.at(i, j))),
          static_cast<long long>(std::floor(rec.y.at(i, j)))};
      const double z = rec.z.at(i, j);
      const int idx = j * w + i;
      auto [it, inserted] = best.try_emplace(key, Entry{z, idx});
      if (!inserted && z < it->second.z) it->second = Entry{z, idx};
    }
  }
  Mask out = Mask::zeros(w, h);
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      if (!active.at(i, j)) continue;
      if (!rec.is_valid(i, j)) {
        out.set(i, j, true);
        continue;
      }
      const std::pair<long long, long long> key{
          static_cast<long long>(std::floor(rec.x.at(i, j))),
          static_cast<long long>(std::floor(rec.y.at(i, j)))};
      out.set(i, j, best.at(key).idx == j * w + i);
    }
  }
  return out;
}

/// Blank mask on THIS frame's plane from the reverse projection: splat the
/// other frame's active pixels here and zero every pixel whose accumulated
/// weight stays below kBlankWeight.
inline Mask blank_mask(const ProjectionRecord& rec_other_to_this,
                       int this_width, int this_height,
                       const Mask& active_other) {
  const SplatBuffer buf =
      splat_weights(rec_other_to_this, this_width, this_height, active_other);
  Mask out = Mask::zeros(this_width, this_height);
  for (int j = 0; j < this_height; ++j) {
    for (int i = 0; i < this_width; ++i) {
      out.set(i, j, buf.at(i, j) >= kBlankWeight);
    }
  }
  return out;
}

struct RepeatedMaskingResult {
  MaskSet masks_t;         // gates the loss of frame t
  MaskSet masks_tm1;       // gates the loss of frame t−1
  ImageBuffer xhat_t;      // reconstruction of frame t from frame t−1
  ImageBuffer xhat_tm1;    // reconstruction of frame t−1 from frame t
  ProjectionRecord record_t;    // frame-t pixels on the t−1 plane
  ProjectionRecord record_tm1;  // frame-(t−1) pixels on the t plane
  int rounds_run = 0;
};

/// Alternating two-way projection and masking. pose_t maps frame-t camera
/// coordinates to frame-(t−1) camera coordinates; the reverse direction uses
/// its inverse. Each round recomputes all six masks from the active sets at
/// the start of the round, intersects them into the accumulated MaskSets,
/// and rebuilds the active sets; iteration stops early at a fixed point.
/// Reconstructions are computed once from the (round-independent) geometry.
inline RepeatedMaskingResult repeated_masking(
    const ImageBuffer& x_t, const ImageBuffer& x_tm1, const DepthMap& d_t,
    const DepthMap& d_tm1, const PoseSE3& pose_t, const Intrinsics& intr,
    int rounds) {
  if (rounds < 1) {
    throw std::invalid_argument("repeated_masking: rounds must be >= 1");
  }
  if (!x_t.same_shape(x_tm1) || x_t.width() != intr.width ||
      x_t.height() != intr.height || !d_t.same_shape(d_tm1) ||
      d_t.width() != intr.width || d_t.height() != intr.height) {
    throw std::invalid_argument("repeated_masking: shape mismatch");
  }
  const int w = intr.width, h = intr.height;
  const PoseSE3 pose_tm1 = pose_t.inverse();
  ProjectionRecord rec_t =
      project(transform_points(backproject(d_t, intr), pose_t), intr);
  ProjectionRecord rec_tm1 =
      project(transform_points(backproject(d_tm1, intr), pose_tm1), intr);

  MaskSet acc_t{Mask::ones(w, h), Mask::ones(w, h), Mask::ones(w, h)};
  MaskSet acc_tm1 = acc_t;
  Mask active_t = Mask::ones(w, h);
  Mask active_tm1 = Mask::ones(w, h);

  int executed = 0;
  for (int round = 0; round < rounds; ++round) {
    const Mask e_t = edge_mask(rec_t, w, h);
    const Mask o_t = overlap_mask(rec_t, w, h, active_t);
    const Mask b_t = blank_mask(rec_tm1, w, h, active_tm1);
    const Mask e_m = edge_mask(rec_tm1, w, h);
    const Mask o_m = overlap_mask(rec_tm1, w, h, active_tm1);
    const Mask b_m = blank_mask(rec_t, w, h, active_t);

    const MaskSet before_t = acc_t, before_tm1 = acc_tm1;
    acc_t.edge &= e_t;
    acc_t.overlap &= o_t;
    acc_t.blank &= b_t;
    acc_tm1.edge &= e_m;
    acc_tm1.overlap &= o_m;
    acc_tm1.blank &= b_m;
    active_t = combine(acc_t);
    active_tm1 = combine(acc_tm1);
    ++executed;
    if (acc_t == before_t && acc_tm1 == before_tm1) break;
  }

  ImageBuffer xhat_t = bilinear_sample(x_tm1, rec_t);
  ImageBuffer xhat_tm1 = bilinear_sample(x_t, rec_tm1);
  return RepeatedMaskingResult{std::move(acc_t),   std::move(acc_tm1),
                               std::move(xhat_t),  std::move(xhat_tm1),
                               std::move(rec_t),   std::move(rec_tm1),
                               executed};
}

}  // namespace multimask

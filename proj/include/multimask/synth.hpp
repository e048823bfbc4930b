// Copyright (c) 2026 The multimask Authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic synthetic occlusion scenes: textured fronto-parallel
// rectangles over an infinite background plane, a ray-cast renderer with
// exact depth, an exact two-view visibility oracle, and the named presets
// used across the test and acceptance suites.
//
// World frame = the t−1 camera frame of each preset. Textures are seeded
// sums of four sinusoids, band-limited so bilinear resampling stays well
// below the photometric tolerances the suites assert.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

#include "multimask/camera.hpp"
#include "multimask/grid.hpp"

namespace multimask {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline double unit_double(std::uint64_t& state) {
  return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
}

}  // namespace detail

/// Procedural texture: bias plus four sinusoids, values always in [0,1].
struct SinusoidTexture {
  struct Term {
    double amp = 0.0;
    double fu = 0.0;     // cycles per world unit along x
    double fv = 0.0;     // cycles per world unit along y
    double phase = 0.0;
  };
  std::array<Term, 4> terms{};
  double bias = 0.5;

  double value(double u, double v) const {
    double s = bias;
    for (const Term& t : terms) {
      s += t.amp * std::sin(2.0 * M_PI * (u * t.fu + v * t.fv) + t.phase);
    }
    return s;
  }
};

/// Builds a texture whose shortest wavelength is min_wavelength (world
/// units). Choose min_wavelength ≥ 4 · depth / focal so the projected
/// wavelength stays ≥ 4 pixels.
inline SinusoidTexture make_texture(std::uint64_t seed, double min_wavelength) {
  if (!(min_wavelength > 0.0)) {
    throw std::invalid_argument("make_texture: wavelength must be positive");
  }
  std::uint64_t state = seed * 0x9E3779B97F4A7C15ULL + 0xD1B54A32D192ED03ULL;
  const std::array<double, 4> wavelengths = {
      8.0 * min_wavelength, 4.0 * min_wavelength, 2.0 * min_wavelength,
      min_wavelength};
  // Long wavelengths carry most of the amplitude to keep the bilinear
  // resampling error small; two axis-aligned terms guarantee gradients in
  // both directions.
  std::array<double, 4> amps = {0.24, 0.12, 0.072, 0.048};
  const std::array<double, 4> base_angle = {0.0, M_PI / 2.0, M_PI / 5.0,
                                            2.0 * M_PI / 3.0};
  SinusoidTexture tex;
  double total = 0.0;
  for (int k = 0; k < 4; ++k) {
    amps[k] *= 0.8 + 0.4 * detail::unit_double(state);
    total += amps[k];
  }
  for (int k = 0; k < 4; ++k) {
    const double angle =
        base_angle[k] + 0.25 * (detail::unit_double(state) - 0.5);
    tex.terms[k].amp = amps[k] * (0.48 / total);
    tex.terms[k].fu = std::cos(angle) / wavelengths[k];
    tex.terms[k].fv = std::sin(angle) / wavelengths[k];
    tex.terms[k].phase = 2.0 * M_PI * detail::unit_double(state);
  }
  return tex;
}

/// Textured, axis-aligned, fronto-parallel rectangle at world depth z.
struct RectPrimitive {
  double z = 1.0;
  double x0 = 0.0, x1 = 0.0;
  double y0 = 0.0, y1 = 0.0;
  SinusoidTexture texture;
};

struct Scene {
  std::vector<RectPrimitive> rects;
  double z_bg = 10.0;
  SinusoidTexture bg_texture;

  void validate() const {
    for (std::size_t a = 0; a < rects.size(); ++a) {
      if (!(rects[a].z > 0.0 && rects[a].z < z_bg)) {
        throw std::invalid_argument("Scene: primitive depth outside (0, z_bg)");
      }
      if (!(rects[a].x0 < rects[a].x1 && rects[a].y0 < rects[a].y1)) {
        throw std::invalid_argument("Scene: degenerate rectangle extents");
      }
      for (std::size_t b = a + 1; b < rects.size(); ++b) {
        if (rects[a].z == rects[b].z) {
          throw std::invalid_argument("Scene: primitive depths must differ");
        }
      }
    }
  }
};

namespace detail {

struct RayHit {
  double s = std::numeric_limits<double>::infinity();  // camera-frame depth
  double world_x = 0.0, world_y = 0.0;
  const SinusoidTexture* texture = nullptr;
};

/// Nearest intersection along origin + s·dir, where dir has unit camera-z
/// so s equals depth along the optical axis.
inline RayHit cast_ray(const Scene& scene, const Eigen::Vector3d& origin,
                       const Eigen::Vector3d& dir) {
  RayHit hit;
  auto try_plane = [&](double plane_z, const SinusoidTexture* tex, double rx0,
                       double rx1, double ry0, double ry1, bool bounded) {
    if (dir.z() == 0.0) return;
    const double s = (plane_z - origin.z()) / dir.z();
    if (s <= kMinDepth || s >= hit.s) return;
    const double px = origin.x() + s * dir.x();
    const double py = origin.y() + s * dir.y();
    if (bounded && (px < rx0 || px > rx1 || py < ry0 || py > ry1)) return;
    hit = RayHit{s, px, py, tex};
  };
  for (const RectPrimitive& r : scene.rects) {
    try_plane(r.z, &r.texture, r.x0, r.x1, r.y0, r.y1, true);
  }
  try_plane(scene.z_bg, &scene.bg_texture, 0, 0, 0, 0, false);
  return hit;
}

}  // namespace detail

struct RenderedFrame {
  ImageBuffer image;
  DepthMap depth;
};

/// Casts one ray per pixel center; the nearest plane wins the z-buffer and
/// the depth map records the camera-frame depth of the hit.
inline RenderedFrame render(const Scene& scene, const Intrinsics& intr,
                            const PoseSE3& cam_to_world) {
  scene.validate();
  for (const RectPrimitive& r : scene.rects) {
    if (cam_to_world.translation().z() >= r.z - kMinDepth) {
      throw std::invalid_argument("render: camera at or behind a primitive");
    }
  }
  ImageBuffer image(intr.width, intr.height, 1);
  Grid<double> depth(intr.width, intr.height, 1.0);
  for (int j = 0; j < intr.height; ++j) {
    for (int i = 0; i < intr.width; ++i) {
      const Eigen::Vector3d dir_cam((i - intr.cx) / intr.fx,
                                    (j - intr.cy) / intr.fy, 1.0);
      const Eigen::Vector3d dir = cam_to_world.rotation() * dir_cam;
      const detail::RayHit hit =
          detail::cast_ray(scene, cam_to_world.translation(), dir);
      if (!std::isfinite(hit.s)) {
        throw std::invalid_argument("render: ray misses all geometry");
      }
      image.at(i, j) = hit.texture->value(hit.world_x, hit.world_y);
      depth.at(i, j) = hit.s;
    }
  }
  return RenderedFrame{std::move(image), DepthMap(std::move(depth))};
}

enum class Visibility : std::uint8_t {
  kVisibleBoth = 0,
  kOccludedInOther = 1,
  kOutOfViewInOther = 2,
};

using VisibilityLabels = Grid<Visibility>;

/// Exact per-pixel ground truth for frame a against frame b: where does a's
/// surface point land in b, and does b see it or something nearer?
inline VisibilityLabels visibility_oracle(const Scene& scene,
                                          const Intrinsics& intr,
                                          const PoseSE3& cam_to_world_a,
                                          const PoseSE3& cam_to_world_b) {
  scene.validate();
  VisibilityLabels labels(intr.width, intr.height, Visibility::kVisibleBoth);
  const PoseSE3 world_to_b = cam_to_world_b.inverse();
  for (int j = 0; j < intr.height; ++j) {
    for (int i = 0; i < intr.width; ++i) {
      const Eigen::Vector3d dir_cam((i - intr.cx) / intr.fx,
                                    (j - intr.cy) / intr.fy, 1.0);
      const Eigen::Vector3d dir = cam_to_world_a.rotation() * dir_cam;
      const detail::RayHit hit =
          detail::cast_ray(scene, cam_to_world_a.translation(), dir);
      if (!std::isfinite(hit.s)) {
        throw std::invalid_argument("visibility_oracle: ray misses geometry");
      }
      const Eigen::Vector3d world_point =
          cam_to_world_a.translation() + hit.s * dir;
      const Eigen::Vector3d p_b = world_to_b.apply(world_point);
      if (p_b.z() <= kMinDepth) {
        labels.at(i, j) = Visibility::kOutOfViewInOther;
        continue;
      }
      const double u = p_b.x() / p_b.z() * intr.fx + intr.cx;
      const double v = p_b.y() / p_b.z() * intr.fy + intr.cy;
      if (u < 0.0 || u > intr.width - 1 || v < 0.0 || v > intr.height - 1) {
        labels.at(i, j) = Visibility::kOutOfViewInOther;
        continue;
      }
      const Eigen::Vector3d dir_b = cam_to_world_b.rotation() * (p_b / p_b.z());
      const detail::RayHit hit_b =
          detail::cast_ray(scene, cam_to_world_b.translation(), dir_b);
      labels.at(i, j) = (hit_b.s < p_b.z() - 1e-6)
                            ? Visibility::kOccludedInOther
                            : Visibility::kVisibleBoth;
    }
  }
  return labels;
}

// ---------------------------------------------------------------------------
// Presets

enum class PresetName {
  kIdentity,
  kPureTranslation,
  kOccluderFig3,
  kReverseFig5,
  kThinObjectFig7,
};

inline PresetName parse_preset(std::string_view name) {
  if (name == "identity") return PresetName::kIdentity;
  if (name == "pure_translation") return PresetName::kPureTranslation;
  if (name == "occluder_fig3") return PresetName::kOccluderFig3;
  if (name == "reverse_fig5") return PresetName::kReverseFig5;
  if (name == "thin_object_fig7") return PresetName::kThinObjectFig7;
  throw std::invalid_argument("unknown preset: " + std::string(name));
}

inline constexpr std::uint64_t kDefaultPresetSeed = 1234;

/// A fully specified two-frame instance. World frame = t−1 camera frame.
struct PresetPair {
  Scene scene;
  Intrinsics intr;
  PoseSE3 cam_to_world_tm1;
  PoseSE3 cam_to_world_t;

  /// The motion of Eq. 2: maps frame-t camera coords to frame-(t−1) coords.
  PoseSE3 motion_t() const {
    return cam_to_world_tm1.inverse() * cam_to_world_t;
  }
};

inline PresetPair preset(PresetName name,
                         std::uint64_t seed = kDefaultPresetSeed) {
  // 64×128 resolution with dyadic intrinsics throughout, so the identity
  // chain is float-exact. The occluder scenes use a longer focal length:
  // their occlusion bands must span enough pixels that one-pixel boundary
  // discretization stays a small fraction of the band.
  const double focal =
      (name == PresetName::kOccluderFig3 || name == PresetName::kReverseFig5)
          ? 128.0
          : 64.0;
  const Intrinsics intr(focal, focal, 63.5, 31.5, 128, 64);
  auto translated = [](double tx, double ty = 0.0) {
    return PoseSE3(Eigen::Matrix3d::Identity(), Eigen::Vector3d(tx, ty, 0.0));
  };
  auto min_wl = [&](double z) { return 4.0 * z / intr.fx; };

  PresetPair p;
  p.intr = intr;
  p.cam_to_world_tm1 = PoseSE3::identity();

  switch (name) {
    case PresetName::kIdentity:
    case PresetName::kPureTranslation: {
      // Near desk-scale scene: pixel leverage per meter is high enough for
      // the pose refiner to resolve millimetres. Fractional disparities on
      // both axes keep every projected pixel off the bilinear cell edges,
      // where the objective is one-sided.
      p.scene.z_bg = 2.0;
      p.scene.bg_texture = make_texture(seed ^ 0x11, min_wl(2.0));
      p.scene.rects.push_back(RectPrimitive{
          1.0, -0.3, 0.1, -0.2, 0.15, make_texture(seed ^ 0x22, min_wl(1.0))});
      p.cam_to_world_t = name == PresetName::kIdentity
                             ? PoseSE3::identity()
                             : translated(0.0575, 0.00875);
      break;
    }
    case PresetName::kOccluderFig3:
    case PresetName::kReverseFig5: {
      // One near rectangle (z=3) in front of a z=12 background, 0.4 m of
      // lateral camera motion; fig5 runs the same scene the other way.
      p.scene.z_bg = 12.0;
      p.scene.bg_texture = make_texture(seed ^ 0x33, min_wl(12.0));
      p.scene.rects.push_back(RectPrimitive{
          3.0, -0.9, 0.9, -0.7, 0.7, make_texture(seed ^ 0x44, min_wl(3.0))});
      p.cam_to_world_t = translated(name == PresetName::kOccluderFig3 ? 0.4
                                                                      : -0.4);
      break;
    }
    case PresetName::kThinObjectFig7: {
      // Two-pixel-wide vertical slab with motion fast enough that the
      // background strips flanking it swap visibility between the frames.
      // The slab's disparity is an exact 3 px while the background's is
      // fractional (0.8 px): the disoccluded strip then loses its only
      // splat contributors when round one masks them, so round two reveals
      // a fresh blank area and the mask sequence reaches a fixed point.
      p.scene.z_bg = 7.5;
      p.scene.bg_texture = make_texture(seed ^ 0x55, min_wl(7.5));
      p.scene.rects.push_back(RectPrimitive{2.0, 0.215, 0.2775, -2.0, 2.0,
                                            make_texture(seed ^ 0x66,
                                                         min_wl(2.0))});
      p.cam_to_world_t = translated(0.09375);
      break;
    }
  }
  p.scene.validate();
  return p;
}

struct RenderedPair {
  ImageBuffer x_t;
  ImageBuffer x_tm1;
  DepthMap d_t;
  DepthMap d_tm1;
};

inline RenderedPair render_pair(const PresetPair& p) {
  RenderedFrame t = render(p.scene, p.intr, p.cam_to_world_t);
  RenderedFrame tm1 = render(p.scene, p.intr, p.cam_to_world_tm1);
  return RenderedPair{std::move(t.image), std::move(tm1.image),
                      std::move(t.depth), std::move(tm1.depth)};
}

}  // namespace multimask

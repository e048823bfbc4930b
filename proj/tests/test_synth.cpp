// Copyright (c) 2026 The multimask Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "multimask/masks.hpp"
#include "multimask/synth.hpp"
#include "multimask/warp.hpp"
#include "test_util.hpp"

using namespace multimask;

TEST_CASE("render basics") {
  Intrinsics intr(32.0, 32.0, 31.5, 15.5, 64, 32);
  SECTION("background-only scene has constant depth") {
    Scene scene;
    scene.z_bg = 10.0;
    scene.bg_texture = make_texture(1, 4.0 * 10.0 / 32.0);
    RenderedFrame f = render(scene, intr, PoseSE3::identity());
    for (double v : f.depth.grid().values()) CHECK(v == 10.0);
    for (double v : f.image.values()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  SECTION("center rectangle: depth 5 inside its projection, 10 outside") {
    Scene scene;
    scene.z_bg = 10.0;
    scene.bg_texture = make_texture(2, 4.0 * 10.0 / 32.0);
    scene.rects.push_back(
        RectPrimitive{5.0, -1.0, 1.0, -0.5, 0.5, make_texture(3, 5.0 / 8.0)});
    RenderedFrame f = render(scene, intr, PoseSE3::identity());
    // Projected corner pixels by hand: x = ±1·fx/z + cx = 31.5 ± 6.4,
    // y = 15.5 ± 3.2. A pixel center hits the rect iff its ray does.
    for (int j = 0; j < 32; ++j) {
      for (int i = 0; i < 64; ++i) {
        const double wx = (i - intr.cx) / intr.fx * 5.0;
        const double wy = (j - intr.cy) / intr.fy * 5.0;
        const bool inside = wx >= -1.0 && wx <= 1.0 && wy >= -0.5 && wy <= 0.5;
        CHECK(f.depth.at(i, j) == (inside ? 5.0 : 10.0));
      }
    }
  }
  SECTION("rendering twice is bit-identical") {
    PresetPair p = preset(PresetName::kOccluderFig3);
    RenderedFrame a = render(p.scene, p.intr, p.cam_to_world_t);
    RenderedFrame b = render(p.scene, p.intr, p.cam_to_world_t);
    CHECK(a.image == b.image);
    CHECK(a.depth == b.depth);
  }
  SECTION("camera at or behind a primitive is rejected") {
    Scene scene;
    scene.z_bg = 10.0;
    scene.bg_texture = make_texture(4, 1.0);
    scene.rects.push_back(
        RectPrimitive{2.0, -1.0, 1.0, -1.0, 1.0, make_texture(5, 0.25)});
    PoseSE3 behind(Eigen::Matrix3d::Identity(), Eigen::Vector3d(0, 0, 2.5));
    CHECK_THROWS_AS(render(scene, intr, behind), std::invalid_argument);
  }
  SECTION("scene invariants are validated") {
    Scene scene;
    scene.z_bg = 5.0;
    scene.bg_texture = make_texture(6, 1.0);
    scene.rects.push_back(
        RectPrimitive{6.0, -1.0, 1.0, -1.0, 1.0, make_texture(7, 1.0)});
    CHECK_THROWS_AS(render(scene, intr, PoseSE3::identity()),
                    std::invalid_argument);
  }
}

TEST_CASE("visibility oracle") {
  SECTION("identical poses see everything") {
    PresetPair p = preset(PresetName::kIdentity);
    VisibilityLabels labels = visibility_oracle(p.scene, p.intr,
                                                p.cam_to_world_t,
                                                p.cam_to_world_tm1);
    for (Visibility v : labels.values()) CHECK(v == Visibility::kVisibleBoth);
  }

  SECTION("occluder preset: analytic occlusion band next to the rectangle") {
    PresetPair p = preset(PresetName::kOccluderFig3);
    const double z_o = p.scene.rects[0].z, z_bg = p.scene.z_bg;
    const double tx = p.cam_to_world_t.translation().x();
    const double band = p.intr.fx * tx * (1.0 / z_o - 1.0 / z_bg);  // 6.4 px
    // Labels of frame t−1 against frame t.
    VisibilityLabels labels = visibility_oracle(p.scene, p.intr,
                                                p.cam_to_world_tm1,
                                                p.cam_to_world_t);
    RenderedFrame tm1 = render(p.scene, p.intr, p.cam_to_world_tm1);
    int rows_checked = 0;
    for (int j = 8; j < 56; ++j) {
      // Rows crossing the rectangle only.
      bool crosses = false;
      for (int i = 0; i < 128; ++i) crosses |= tm1.depth.at(i, j) == z_o;
      if (!crosses) continue;
      int occluded_bg = 0;
      for (int i = 0; i < 128; ++i) {
        if (labels.at(i, j) == Visibility::kOccludedInOther &&
            tm1.depth.at(i, j) == z_bg) {
          ++occluded_bg;
        }
      }
      CHECK(occluded_bg >= static_cast<int>(band) - 2);
      CHECK(occluded_bg <= static_cast<int>(band) + 2);
      ++rows_checked;
    }
    CHECK(rows_checked > 20);
  }

  SECTION("large translation pushes a border band out of view") {
    PresetPair p = preset(PresetName::kIdentity);
    PoseSE3 far_cam(Eigen::Matrix3d::Identity(), Eigen::Vector3d(2.0, 0, 0));
    VisibilityLabels labels = visibility_oracle(p.scene, p.intr,
                                                far_cam, p.cam_to_world_tm1);
    // Frame a sits 2 m to the right; its right edge looks at background the
    // identity camera cannot see.
    int out = 0;
    for (int j = 0; j < 64; ++j) {
      for (int i = 120; i < 128; ++i) {
        out += labels.at(i, j) == Visibility::kOutOfViewInOther;
      }
    }
    CHECK(out > 300);
  }

  SECTION("render/oracle geometric self-consistency") {
    PresetPair p = preset(PresetName::kOccluderFig3);
    RenderedFrame t = render(p.scene, p.intr, p.cam_to_world_t);
    VisibilityLabels labels = visibility_oracle(p.scene, p.intr,
                                                p.cam_to_world_t,
                                                p.cam_to_world_tm1);
    PointCloud cloud = backproject(t.depth, p.intr);
    PointCloud in_tm1 = transform_points(cloud, p.motion_t());
    int checked = 0;
    for (int j = 0; j < 64; ++j) {
      for (int i = 0; i < 128; ++i) {
        if (labels.at(i, j) != Visibility::kVisibleBoth) continue;
        const Eigen::Vector3d& q = in_tm1.at(i, j);
        REQUIRE(q.z() > 0.0);
        // The other camera's ray through this point must hit the same
        // surface within 1e-6 m.
        Eigen::Vector3d dir = q / q.z();
        detail::RayHit hit = detail::cast_ray(
            p.scene, p.cam_to_world_tm1.translation(),
            p.cam_to_world_tm1.rotation() * dir);
        CHECK(std::abs(hit.s - q.z()) < 1e-6);
        ++checked;
      }
    }
    CHECK(checked > 4000);
  }
}

TEST_CASE("texture band limit keeps resampling error small") {
  PresetPair p = preset(PresetName::kPureTranslation);
  RenderedPair frames = render_pair(p);
  VisibilityLabels labels_t = visibility_oracle(p.scene, p.intr,
                                                p.cam_to_world_t,
                                                p.cam_to_world_tm1);
  Reconstruction r =
      reconstruct(frames.x_tm1, frames.d_t, p.motion_t(), p.intr);
  double err = 0.0;
  int n = 0;
  for (int j = 0; j < 64; ++j) {
    for (int i = 0; i < 128; ++i) {
      if (labels_t.at(i, j) != Visibility::kVisibleBoth) continue;
      if (!r.record.is_valid(i, j)) continue;
      const BilinearFootprint fp = footprint(r.record.x.at(i, j),
                                             r.record.y.at(i, j), 128, 64);
      if (!fp.fully_in_bounds) continue;
      err += std::abs(r.image.at(i, j) - frames.x_t.at(i, j));
      ++n;
    }
  }
  REQUIRE(n > 4000);
  CHECK(err / n < 0.02);
}

TEST_CASE("presets") {
  SECTION("identity preset is a true identity pair") {
    PresetPair p = preset(PresetName::kIdentity);
    CHECK(p.motion_t().is_identity());
    RenderedPair frames = render_pair(p);
    CHECK(frames.x_t == frames.x_tm1);
    CHECK(frames.d_t == frames.d_tm1);
  }
  SECTION("occluder_fig3 carries the published scene numbers") {
    PresetPair p = preset(PresetName::kOccluderFig3);
    CHECK(p.scene.rects.size() == 1);
    CHECK(p.scene.rects[0].z == 3.0);
    CHECK(p.scene.z_bg == 12.0);
    CHECK(p.cam_to_world_t.translation() == Eigen::Vector3d(0.4, 0.0, 0.0));
    VisibilityLabels labels = visibility_oracle(p.scene, p.intr,
                                                p.cam_to_world_tm1,
                                                p.cam_to_world_t);
    int occluded = 0;
    for (Visibility v : labels.values()) {
      occluded += v == Visibility::kOccludedInOther;
    }
    CHECK(occluded > 100);  // a real occlusion band exists
  }
  SECTION("thin_object_fig7 projects a two-pixel-wide slab") {
    PresetPair p = preset(PresetName::kThinObjectFig7);
    RenderedPair frames = render_pair(p);
    const double z_o = p.scene.rects[0].z;
    for (int j = 16; j < 48; ++j) {
      int cols = 0;
      for (int i = 0; i < 128; ++i) cols += frames.d_tm1.at(i, j) == z_o;
      CHECK(cols == 2);
    }
  }
  SECTION("same seed, same preset, bitwise identical frames") {
    RenderedPair a = render_pair(preset(PresetName::kReverseFig5, 99));
    RenderedPair b = render_pair(preset(PresetName::kReverseFig5, 99));
    CHECK(a.x_t == b.x_t);
    CHECK(a.d_tm1 == b.d_tm1);
  }
  SECTION("unknown preset names are rejected") {
    CHECK_THROWS_AS(parse_preset("bogus"), std::invalid_argument);
    CHECK(parse_preset("thin_object_fig7") == PresetName::kThinObjectFig7);
  }
}

// Copyright (c) 2026 The multimask Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "multimask/losses.hpp"
#include "test_util.hpp"

using namespace multimask;

TEST_CASE("reconstruction_loss") {
  std::mt19937_64 rng(51);
  SECTION("identical images give zero under any mask") {
    ImageBuffer x = mmtest::random_image(rng, 6, 4, 3);
    CHECK(reconstruction_loss(x, x, Mask::ones(6, 4)) == 0.0);
    CHECK(reconstruction_loss(x, x, Mask::zeros(6, 4)) == 0.0);
  }
  SECTION("maximal constant difference gives one") {
    ImageBuffer a(5, 5, 1, 1.0), b(5, 5, 1, 0.0);
    CHECK(reconstruction_loss(a, b, Mask::ones(5, 5)) == 1.0);
  }
  SECTION("mean runs over valid pixels only") {
    ImageBuffer a(4, 4, 1, 1.0), b(4, 4, 1, 0.0);
    Mask half = Mask::zeros(4, 4);
    for (int j = 0; j < 4; ++j)
      for (int i = 0; i < 2; ++i) half.set(i, j, true);
    CHECK(reconstruction_loss(a, b, half) == 1.0);
  }
  SECTION("L2 variant squares the differences") {
    ImageBuffer a(2, 2, 1, 0.5), b(2, 2, 1, 0.0);
    CHECK(reconstruction_loss(a, b, Mask::ones(2, 2), PhotometricNorm::kL2) ==
          0.25);
  }
  SECTION("no unmasked pixels returns zero") {
    ImageBuffer a(3, 3, 1, 1.0), b(3, 3, 1, 0.0);
    CHECK(reconstruction_loss(a, b, Mask::zeros(3, 3)) == 0.0);
  }
  SECTION("shape mismatch") {
    ImageBuffer a(3, 3, 1), b(3, 4, 1);
    CHECK_THROWS_AS(reconstruction_loss(a, b, Mask::ones(3, 3)),
                    std::invalid_argument);
  }
  SECTION("masked-pixel changes leave the loss untouched") {
    ImageBuffer x = mmtest::random_image(rng, 6, 6, 1);
    ImageBuffer y = mmtest::random_image(rng, 6, 6, 1);
    Mask m = Mask::ones(6, 6);
    m.set(3, 3, false);
    const double before = reconstruction_loss(x, y, m);
    y.at(3, 3) = 0.123;
    x.at(3, 3) = 0.9;
    CHECK(reconstruction_loss(x, y, m) == before);
  }
}

TEST_CASE("ssim_loss") {
  std::mt19937_64 rng(53);
  SECTION("self similarity is exactly one, loss zero") {
    ImageBuffer x = mmtest::random_image(rng, 8, 6, 1);
    CHECK(ssim_loss(x, x, Mask::ones(8, 6)) == 0.0);
  }
  SECTION("equal constants give zero") {
    ImageBuffer a(5, 5, 1, 0.5), b(5, 5, 1, 0.5);
    CHECK(ssim_loss(a, b, Mask::ones(5, 5)) == 0.0);
  }
  SECTION("constant 0 vs constant 1 matches the closed form") {
    ImageBuffer a(5, 5, 1, 0.0), b(5, 5, 1, 1.0);
    const double c1 = 1e-4;
    // SSIM = C1·C2 / ((1+C1)·C2) = C1/(1+C1)
    const double expect = 1.0 - c1 / (1.0 + c1);
    CHECK(ssim_loss(a, b, Mask::ones(5, 5)) ==
          Catch::Approx(expect).margin(1e-12));
  }
  SECTION("changes far inside the masked region leave the loss unchanged") {
    ImageBuffer x = mmtest::random_image(rng, 9, 9, 1);
    ImageBuffer y = mmtest::random_image(rng, 9, 9, 1);
    Mask m = Mask::ones(9, 9);
    for (int j = 3; j <= 7; ++j)
      for (int i = 3; i <= 7; ++i) m.set(i, j, false);
    const double before = ssim_loss(x, y, m);
    y.at(5, 5) = 0.001;  // two pixels away from any unmasked window
    CHECK(ssim_loss(x, y, m) == before);
  }
}

TEST_CASE("smoothness_loss") {
  SECTION("constant depth is perfectly smooth") {
    DepthMap d(7, 5, 3.0);
    ImageBuffer x(7, 5, 1, 0.2);
    CHECK(smoothness_loss(d, x) == 0.0);
  }
  SECTION("unit ramp on a constant 1xW image gives exactly one") {
    const int w = 9;
    Grid<double> g(w, 1, 1.0);
    for (int i = 0; i < w; ++i) g.at(i, 0) = 1.0 + i;
    DepthMap d(std::move(g));
    ImageBuffer x(w, 1, 1, 0.5);
    CHECK(smoothness_loss(d, x) == 1.0);
  }
  SECTION("strong image edges damp the penalty by e^-1") {
    const int w = 9;
    Grid<double> g(w, 1, 1.0);
    ImageBuffer x(w, 1, 1);
    for (int i = 0; i < w; ++i) {
      g.at(i, 0) = 1.0 + i;
      x.at(i, 0) = (i % 2 == 0) ? 0.0 : 1.0;  // |∂x I| = 1 everywhere
    }
    DepthMap d(std::move(g));
    CHECK(smoothness_loss(d, x) == Catch::Approx(std::exp(-1.0)).margin(1e-12));
  }
  SECTION("2x2 hand case pools x and y terms") {
    Grid<double> g(2, 2, 1.0);
    g.at(0, 0) = 1.0;
    g.at(1, 0) = 2.0;
    g.at(0, 1) = 3.0;
    g.at(1, 1) = 4.0;
    DepthMap d(std::move(g));
    ImageBuffer x(2, 2, 1, 0.7);
    // x-terms |2-1| + |4-3| = 2; y-terms |3-1| + |4-2| = 4; mean over 4 = 1.5
    CHECK(smoothness_loss(d, x) == Catch::Approx(1.5).margin(1e-12));
  }
}

TEST_CASE("depth_normalize") {
  SECTION("constant 5 collapses to 1") {
    DepthMap d(4, 4, 5.0);
    DepthMap n = depth_normalize(d);
    for (double v : n.grid().values()) CHECK(v == 1.0);
  }
  SECTION("{1,3} becomes {0.5,1.5}") {
    Grid<double> g(2, 1, 1.0);
    g.at(1, 0) = 3.0;
    DepthMap n = depth_normalize(DepthMap(std::move(g)));
    CHECK(n.at(0, 0) == 0.5);
    CHECK(n.at(1, 0) == 1.5);
  }
  SECTION("idempotent within 1e-12") {
    std::mt19937_64 rng(59);
    DepthMap d = mmtest::random_depth(rng, 6, 6, 0.5, 9.0);
    DepthMap once = depth_normalize(d);
    DepthMap twice = depth_normalize(once);
    for (std::size_t k = 0; k < once.size(); ++k) {
      CHECK(std::abs(once.grid()[k] - twice.grid()[k]) < 1e-12);
    }
  }
  SECTION("normalized mean is 1 within 1e-9") {
    std::mt19937_64 rng(61);
    DepthMap n = depth_normalize(mmtest::random_depth(rng, 8, 8, 0.1, 30.0));
    double mean = 0.0;
    for (double v : n.grid().values()) mean += v;
    CHECK(std::abs(mean / n.size() - 1.0) < 1e-9);
  }
}

TEST_CASE("pyramids") {
  SECTION("constant image stays constant at every level") {
    ImageBuffer x(16, 16, 1, 0.42);
    DepthMap d(16, 16, 2.0);
    MaskSet m{Mask::ones(16, 16), Mask::ones(16, 16), Mask::ones(16, 16)};
    Pyramid p = build_pyramid(x, d, m, 4);
    REQUIRE(p.size() == 4);
    CHECK(p[1].image.width() == 8);
    CHECK(p[2].image.width() == 4);
    CHECK(p[3].image.width() == 2);
    for (const PyramidLevel& level : p) {
      for (double v : level.image.values()) CHECK(v == Catch::Approx(0.42));
    }
  }
  SECTION("one zero in a 4x4 mask pools to exactly one zero") {
    Mask m = Mask::ones(4, 4);
    m.set(2, 1, false);
    Mask pooled = pool_mask(m);
    CHECK(pooled.count() == 3);
    CHECK_FALSE(pooled.at(1, 0));
  }
  SECTION("too-small images are rejected") {
    ImageBuffer x(4, 20, 1, 0.1);
    DepthMap d(4, 20, 2.0);
    MaskSet m{Mask::ones(4, 20), Mask::ones(4, 20), Mask::ones(4, 20)};
    CHECK_THROWS_AS(build_pyramid(x, d, m, 4), std::invalid_argument);
  }
}

TEST_CASE("LossWeights defaults") {
  LossWeights w = LossWeights::defaults(false);
  CHECK(w.alpha == 0.15);
  CHECK(w.beta == 0.03);
  CHECK(w.gamma == 0.85);
  CHECK(w.num_scales == 4);
  LossWeights dn = LossWeights::defaults(true);
  CHECK(dn.beta == 0.2);
  CHECK(dn.alpha == 0.15);
  CHECK(dn.gamma == 0.85);
  LossWeights bad;
  bad.alpha = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("total_loss") {
  std::mt19937_64 rng(67);
  Intrinsics intr(16.0, 16.0, 15.5, 7.5, 32, 16);
  ImageBuffer x = mmtest::random_image(rng, 32, 16, 1);
  DepthMap d(32, 16, 4.0);

  SECTION("static scene with identity pose: photometric terms vanish") {
    LossWeights w = LossWeights::defaults(false);
    LossReport r = total_loss(x, x, d, d, PoseSE3::identity(), intr, w, false);
    double smooth_sum = 0.0;
    for (int l = 0; l < 4; ++l) {
      CHECK(r.rec[l] == 0.0);
      CHECK(r.ssim[l] == 0.0);
      smooth_sum += r.smooth[l];
    }
    CHECK(r.total == Catch::Approx(w.beta * smooth_sum).margin(1e-15));
  }

  SECTION("total is affine in the weights") {
    ImageBuffer x2 = mmtest::random_image(rng, 32, 16, 1);
    DepthMap d2 = mmtest::random_depth(rng, 32, 16, 3.0, 6.0);
    PoseSE3 pose(Eigen::Matrix3d::Identity(), Eigen::Vector3d(0.1, 0, 0));
    LossWeights w = LossWeights::defaults(false);
    LossReport base = total_loss(x, x2, d, d2, pose, intr, w, false);
    LossWeights doubled = w;
    doubled.gamma = 2.0 * w.gamma;
    LossReport more = total_loss(x, x2, d, d2, pose, intr, doubled, false);
    double ssim_sum = 0.0;
    for (double v : base.ssim) ssim_sum += v;
    CHECK(more.total - base.total ==
          Catch::Approx(w.gamma * ssim_sum).margin(1e-12));
    for (int l = 0; l < 4; ++l) {
      CHECK(base.ssim[l] == more.ssim[l]);
      CHECK(base.rec[l] == more.rec[l]);
      CHECK(base.smooth[l] == more.smooth[l]);
    }
  }

  SECTION("per-scale terms match independent recomputation") {
    ImageBuffer x2 = mmtest::random_image(rng, 32, 16, 1);
    DepthMap d2 = mmtest::random_depth(rng, 32, 16, 3.0, 6.0);
    PoseSE3 pose(Eigen::Matrix3d::Identity(), Eigen::Vector3d(0.08, 0, 0));
    LossWeights w = LossWeights::defaults(false);
    LossReport r = total_loss(x, x2, d, d2, pose, intr, w, false);
    double expect = 0.0;
    for (int l = 0; l < 4; ++l) {
      expect += w.alpha * r.rec[l] + w.beta * r.smooth[l] + w.gamma * r.ssim[l];
      CHECK(r.rec[l] >= 0.0);
      CHECK(r.ssim[l] >= 0.0);
      CHECK(r.smooth[l] >= 0.0);
      CHECK(std::isfinite(r.rec[l]));
    }
    CHECK(r.total == Catch::Approx(expect).margin(1e-12));
    CHECK(r.valid_count_t.size() == 4);
    CHECK(r.valid_count_t[0] > 0);
  }

  SECTION("per-scale values match a from-scratch pooled recomputation") {
    ImageBuffer x2 = mmtest::random_image(rng, 32, 16, 1);
    DepthMap d2 = mmtest::random_depth(rng, 32, 16, 3.0, 6.0);
    PoseSE3 pose(Eigen::Matrix3d::Identity(), Eigen::Vector3d(0.09, 0.02, 0));
    LossWeights w = LossWeights::defaults(false);
    LossReport r = total_loss(x, x2, d, d2, pose, intr, w, false);

    RepeatedMaskingResult rm = repeated_masking(x, x2, d, d2, pose, intr, 3);
    ImageBuffer xt = x, xm = x2, xhat_t = rm.xhat_t, xhat_m = rm.xhat_tm1;
    MaskSet ms_t = rm.masks_t, ms_m = rm.masks_tm1;
    double report_sum = 0.0, recomputed_sum = 0.0;
    for (int l = 0; l < 4; ++l) {
      if (l > 0) {
        xt = pool_image(xt);
        xm = pool_image(xm);
        xhat_t = pool_image(xhat_t);
        xhat_m = pool_image(xhat_m);
        ms_t = MaskSet{pool_mask(ms_t.edge), pool_mask(ms_t.overlap),
                       pool_mask(ms_t.blank)};
        ms_m = MaskSet{pool_mask(ms_m.edge), pool_mask(ms_m.overlap),
                       pool_mask(ms_m.blank)};
      }
      const double rec_l =
          0.5 * (reconstruction_loss(xt, xhat_t, combine(ms_t)) +
                 reconstruction_loss(xm, xhat_m, combine(ms_m)));
      CHECK(std::isfinite(r.rec[l]));
      CHECK(std::abs(r.rec[l] - rec_l) < 1e-12);
      CHECK(r.valid_count_t[l] ==
            static_cast<std::int64_t>(combine(ms_t).count()));
      report_sum += r.rec[l];
      recomputed_sum += rec_l;
    }
    CHECK(std::abs(report_sum - recomputed_sum) < 1e-12);
  }

  SECTION("depth normalization leaves smoothness scale-invariant") {
    std::mt19937_64 rng2(71);
    DepthMap base = mmtest::random_depth(rng2, 16, 16, 1.0, 5.0);
    Grid<double> scaled = base.grid();
    for (double& v : scaled.values()) v *= 7.5;
    ImageBuffer img = mmtest::random_image(rng2, 16, 16, 1);
    const double a = smoothness_loss(depth_normalize(base), img);
    const double b = smoothness_loss(depth_normalize(DepthMap(scaled)), img);
    CHECK(a == Catch::Approx(b).margin(1e-12));
  }
}

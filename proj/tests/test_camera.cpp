// Copyright (c) 2026 The multimask Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "multimask/camera.hpp"
#include "test_util.hpp"

using namespace multimask;

namespace {

// Independent oracle: D · K⁻¹ [i, j, 1]ᵀ via dense matrix inversion.
Eigen::Vector3d backproject_oracle(const Intrinsics& intr, int i, int j,
                                   double depth) {
  return depth * (intr.matrix().inverse() * Eigen::Vector3d(i, j, 1.0));
}

}  // namespace

TEST_CASE("Intrinsics validates its invariants") {
  CHECK_NOTHROW(Intrinsics(64.0, 64.0, 63.5, 31.5, 128, 64));
  CHECK_THROWS_AS(Intrinsics(0.0, 64.0, 0.0, 0.0, 4, 4), std::invalid_argument);
  CHECK_THROWS_AS(Intrinsics(1.0, -2.0, 0.0, 0.0, 4, 4), std::invalid_argument);
  CHECK_THROWS_AS(Intrinsics(1.0, 1.0, 4.0, 0.0, 4, 4), std::invalid_argument);
  CHECK_THROWS_AS(Intrinsics(1.0, 1.0, 0.0, -0.5, 4, 4), std::invalid_argument);
}

TEST_CASE("DepthMap rejects non-positive depths") {
  Grid<double> g(2, 2, 1.0);
  CHECK_NOTHROW(DepthMap(g));
  g.at(1, 1) = 0.0;
  CHECK_THROWS_AS(DepthMap(g), std::invalid_argument);
  g.at(1, 1) = -3.0;
  CHECK_THROWS_AS(DepthMap(g), std::invalid_argument);
}

TEST_CASE("backproject matches direct matrix arithmetic") {
  SECTION("unit depth, identity-like K") {
    Intrinsics intr(1.0, 1.0, 0.0, 0.0, 4, 4);
    DepthMap depth(4, 4, 1.0);
    PointCloud cloud = backproject(depth, intr);
    CHECK(cloud.at(0, 0) == Eigen::Vector3d(0, 0, 1));
  }
  SECTION("depth 2 at pixel (2,3)") {
    Intrinsics intr(1.0, 1.0, 0.0, 0.0, 4, 4);
    DepthMap depth(4, 4, 2.0);
    PointCloud cloud = backproject(depth, intr);
    Eigen::Vector3d expect = backproject_oracle(intr, 2, 3, 2.0);
    CHECK(expect.isApprox(Eigen::Vector3d(4, 6, 2), 1e-15));
    CHECK((cloud.at(2, 3) - expect).norm() < 1e-12);
  }
  SECTION("fx=2, cx=1, pixel (3,0)") {
    Intrinsics intr(2.0, 1.0, 1.0, 0.0, 4, 4);
    DepthMap depth(4, 4, 1.0);
    PointCloud cloud = backproject(depth, intr);
    CHECK(cloud.at(3, 0).x() == Catch::Approx(1.0).margin(1e-15));
    Eigen::Vector3d expect = backproject_oracle(intr, 3, 0, 1.0);
    CHECK((cloud.at(3, 0) - expect).norm() < 1e-12);
  }
  SECTION("shape mismatch") {
    Intrinsics intr(1.0, 1.0, 0.0, 0.0, 4, 4);
    DepthMap depth(3, 4, 1.0);
    CHECK_THROWS_AS(backproject(depth, intr), std::invalid_argument);
  }
}

TEST_CASE("transform_points") {
  Intrinsics intr(1.0, 1.0, 0.0, 0.0, 8, 8);
  std::mt19937_64 rng(7);
  DepthMap depth = mmtest::random_depth(rng, 8, 8);
  PointCloud cloud = backproject(depth, intr);

  SECTION("identity pose leaves the cloud bitwise unchanged") {
    PointCloud out = transform_points(cloud, PoseSE3::identity());
    for (std::size_t k = 0; k < cloud.size(); ++k) {
      CHECK(out[k].x() == cloud[k].x());
      CHECK(out[k].y() == cloud[k].y());
      CHECK(out[k].z() == cloud[k].z());
    }
  }
  SECTION("pure translation shifts each point") {
    PoseSE3 pose(Eigen::Matrix3d::Identity(), Eigen::Vector3d(1, 0, 0));
    PointCloud in(1, 1, Eigen::Vector3d(4, 6, 2));
    CHECK(transform_points(in, pose).at(0, 0) == Eigen::Vector3d(5, 6, 2));
  }
  SECTION("90 degree yaw about the camera y-axis") {
    Eigen::Matrix3d r =
        Eigen::AngleAxisd(M_PI / 2.0, Eigen::Vector3d::UnitY()).toRotationMatrix();
    PoseSE3 pose(r, Eigen::Vector3d::Zero());
    PointCloud in(1, 1, Eigen::Vector3d(0, 0, 1));
    CHECK((transform_points(in, pose).at(0, 0) - Eigen::Vector3d(1, 0, 0)).norm() <
          1e-12);
  }
  SECTION("rigidity: pairwise distances preserved within 1e-9") {
    PoseSE3 pose = mmtest::random_pose(rng);
    PointCloud out = transform_points(cloud, pose);
    for (std::size_t a = 0; a < cloud.size(); a += 7) {
      for (std::size_t b = a + 1; b < cloud.size(); b += 11) {
        double before = (cloud[a] - cloud[b]).norm();
        double after = (out[a] - out[b]).norm();
        CHECK(std::abs(before - after) < 1e-9);
      }
    }
  }
}

TEST_CASE("project") {
  SECTION("perspective division by hand") {
    Intrinsics intr(1.0, 1.0, 0.0, 0.0, 8, 8);
    PointCloud cloud(1, 1, Eigen::Vector3d(5, 6, 2));
    ProjectionRecord rec = project(cloud, intr);
    CHECK(rec.x.at(0, 0) == Catch::Approx(2.5).margin(1e-15));
    CHECK(rec.y.at(0, 0) == Catch::Approx(3.0).margin(1e-15));
    CHECK(rec.z.at(0, 0) == 2.0);
    CHECK(rec.is_valid(0, 0));
  }
  SECTION("z = 0 is flagged invalid, not an error") {
    Intrinsics intr(1.0, 1.0, 0.0, 0.0, 8, 8);
    PointCloud cloud(1, 1, Eigen::Vector3d(1, 1, 0));
    ProjectionRecord rec = project(cloud, intr);
    CHECK_FALSE(rec.is_valid(0, 0));
  }
  SECTION("identity round trip is exact for dyadic K and power-of-two depth") {
    Intrinsics intr(64.0, 32.0, 63.5, 31.5, 128, 64);
    DepthMap depth(128, 64, 2.0);
    ProjectionRecord rec = project(
        transform_points(backproject(depth, intr), PoseSE3::identity()), intr);
    for (int j = 0; j < 64; ++j) {
      for (int i = 0; i < 128; ++i) {
        CHECK(rec.x.at(i, j) == static_cast<double>(i));
        CHECK(rec.y.at(i, j) == static_cast<double>(j));
        CHECK(rec.z.at(i, j) == 2.0);
      }
    }
  }
  SECTION("identity round trip within 1e-9 for arbitrary depths") {
    Intrinsics intr(100.0, 90.0, 31.7, 15.3, 64, 32);
    std::mt19937_64 rng(21);
    DepthMap depth = mmtest::random_depth(rng, 64, 32, 0.3, 40.0);
    ProjectionRecord rec = project(backproject(depth, intr), intr);
    double worst = 0.0;
    for (int j = 0; j < 32; ++j) {
      for (int i = 0; i < 64; ++i) {
        worst = std::max(worst, std::abs(rec.x.at(i, j) - i));
        worst = std::max(worst, std::abs(rec.y.at(i, j) - j));
        worst = std::max(worst, std::abs(rec.z.at(i, j) - depth.at(i, j)));
      }
    }
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("pose exponential and inverse") {
  SECTION("zero twist gives the identity") {
    PoseSE3 p = pose_exp(Twist::Zero());
    CHECK(p.is_identity());
  }
  SECTION("pure translation twist") {
    Twist t = Twist::Zero();
    t[0] = 1.0;
    PoseSE3 p = pose_exp(t);
    CHECK(p.rotation().isIdentity(1e-15));
    CHECK(p.translation() == Eigen::Vector3d(1, 0, 0));
  }
  SECTION("inverse composes to the identity") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      PoseSE3 p = mmtest::random_pose(rng, 2.0, 1.5);
      PoseSE3 both = p.inverse() * p;
      CHECK((both.matrix() - Eigen::Matrix4d::Identity()).cwiseAbs().maxCoeff() <
            1e-9);
      PoseSE3 twice = p.inverse().inverse();
      CHECK((twice.matrix() - p.matrix()).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
  SECTION("exp(t) · exp(-t) is the identity within 1e-7 for small twists") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      Twist t = mmtest::random_twist(rng, 1.0 / std::sqrt(6.0));
      PoseSE3 p = pose_exp(t) * pose_exp(Twist(-t));
      CHECK((p.matrix() - Eigen::Matrix4d::Identity()).cwiseAbs().maxCoeff() <
            1e-7);
    }
  }
  SECTION("non-orthonormal rotation is rejected") {
    Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
    r(0, 0) = 1.001;
    CHECK_THROWS_AS(PoseSE3(r, Eigen::Vector3d::Zero()), std::invalid_argument);
  }
}

// Copyright (c) 2026 The multimask Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pinhole camera model and SE(3) rigid transforms: backprojection of a depth
// map to a camera-frame point cloud, rigid motion, and reprojection onto a
// target image plane with continuous coordinates.

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <stdexcept>

#include "multimask/grid.hpp"

namespace multimask {

/// Points at or behind this camera-frame depth are invalid for projection.
inline constexpr double kMinDepth = 1e-6;

/// Pinhole intrinsics. Focal lengths and principal point in pixels.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  Intrinsics() = default;
  Intrinsics(double fx_, double fy_, double cx_, double cy_, int width_,
             int height_)
      : fx(fx_), fy(fy_), cx(cx_), cy(cy_), width(width_), height(height_) {
    if (!(fx > 0.0) || !(fy > 0.0)) {
      throw std::invalid_argument("Intrinsics: focal lengths must be positive");
    }
    if (width <= 0 || height <= 0) {
      throw std::invalid_argument("Intrinsics: image size must be positive");
    }
    if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
      throw std::invalid_argument(
          "Intrinsics: principal point must lie inside the image");
    }
  }

  Eigen::Matrix3d matrix() const {
    Eigen::Matrix3d k = Eigen::Matrix3d::Identity();
    k(0, 0) = fx;
    k(1, 1) = fy;
    k(0, 2) = cx;
    k(1, 2) = cy;
    return k;
  }

  friend bool operator==(const Intrinsics&, const Intrinsics&) = default;
};

namespace detail {
inline Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d s;
  s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return s;
}
}  // namespace detail

/// Rigid motion p ↦ R·p + t. Construction validates that R is a rotation
/// (RᵀR = I and det R = 1, both within 1e-9).
class PoseSE3 {
 public:
  PoseSE3() : rotation_(Eigen::Matrix3d::Identity()),
              translation_(Eigen::Vector3d::Zero()) {}
  PoseSE3(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
      : rotation_(rotation), translation_(translation) {
    const Eigen::Matrix3d err =
        rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
    if (err.cwiseAbs().maxCoeff() > 1e-9 ||
        std::abs(rotation.determinant() - 1.0) > 1e-9) {
      throw std::invalid_argument("PoseSE3: rotation is not orthonormal");
    }
  }

  static PoseSE3 identity() { return PoseSE3(); }

  /// Builds from a homogeneous 4×4 [R t; 0 1] matrix.
  static PoseSE3 from_matrix(const Eigen::Matrix4d& m) {
    return PoseSE3(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>());
  }

  const Eigen::Matrix3d& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation_;
    m.topRightCorner<3, 1>() = translation_;
    return m;
  }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return rotation_ * p + translation_;
  }

  PoseSE3 inverse() const {
    Eigen::Matrix3d rt = rotation_.transpose();
    return PoseSE3(rt, -(rt * translation_));
  }

  friend PoseSE3 operator*(const PoseSE3& a, const PoseSE3& b) {
    return PoseSE3(a.rotation_ * b.rotation_,
                   a.rotation_ * b.translation_ + a.translation_);
  }

  bool is_identity() const {
    return rotation_.isIdentity(0.0) && translation_.isZero(0.0);
  }

 private:
  Eigen::Matrix3d rotation_;
  Eigen::Vector3d translation_;
};

/// Body velocity (vx, vy, vz, wx, wy, wz): translational part first (meters),
/// rotational part second (radians).
using Twist = Eigen::Matrix<double, 6, 1>;

/// SE(3) exponential map: Rodrigues rotation plus the V-matrix translation.
inline PoseSE3 pose_exp(const Twist& twist) {
  if (!twist.allFinite()) {
    throw std::invalid_argument("pose_exp: twist must be finite");
  }
  const Eigen::Vector3d v = twist.head<3>();
  const Eigen::Vector3d w = twist.tail<3>();
  const double theta = w.norm();
  const Eigen::Matrix3d wx = detail::skew(w);
  Eigen::Matrix3d rotation, vmat;
  if (theta < 1e-9) {
    // Series expansion near zero keeps exp(0) exactly the identity.
    rotation = Eigen::Matrix3d::Identity() + wx + 0.5 * wx * wx;
    vmat = Eigen::Matrix3d::Identity() + 0.5 * wx + wx * wx / 6.0;
  } else {
    const double t2 = theta * theta;
    rotation = Eigen::Matrix3d::Identity() + std::sin(theta) / theta * wx +
               (1.0 - std::cos(theta)) / t2 * wx * wx;
    vmat = Eigen::Matrix3d::Identity() + (1.0 - std::cos(theta)) / t2 * wx +
           (theta - std::sin(theta)) / (t2 * theta) * wx * wx;
  }
  return PoseSE3(rotation, vmat * v);
}

/// One 3D point per source pixel, camera frame, grid-ordered.
using PointCloud = Grid<Eigen::Vector3d>;

/// Continuous target-plane coordinates (î, ĵ) and transformed depth z for
/// every source pixel. valid is false wherever z ≤ kMinDepth.
struct ProjectionRecord {
  Grid<double> x;  // î, target-plane column coordinate
  Grid<double> y;  // ĵ, target-plane row coordinate
  Grid<double> z;  // depth in the target camera frame
  Grid<std::uint8_t> valid;

  int width() const { return x.width(); }
  int height() const { return x.height(); }
  bool is_valid(int i, int j) const { return valid.at(i, j) != 0; }

  friend bool operator==(const ProjectionRecord&,
                         const ProjectionRecord&) = default;
};

/// Lifts each pixel (i, j) to the 3D point D(i,j) · K⁻¹ [i, j, 1]ᵀ.
inline PointCloud backproject(const DepthMap& depth, const Intrinsics& intr) {
  if (depth.width() != intr.width || depth.height() != intr.height) {
    throw std::invalid_argument("backproject: depth shape does not match intrinsics");
  }
  PointCloud cloud(depth.width(), depth.height(), Eigen::Vector3d::Zero());
  for (int j = 0; j < depth.height(); ++j) {
    for (int i = 0; i < depth.width(); ++i) {
      const double d = depth.at(i, j);
      cloud.at(i, j) = Eigen::Vector3d((i - intr.cx) / intr.fx * d,
                                       (j - intr.cy) / intr.fy * d, d);
    }
  }
  return cloud;
}

/// Applies p ↦ R·p + t to every point.
inline PointCloud transform_points(const PointCloud& cloud,
                                   const PoseSE3& pose) {
  PointCloud out = cloud;
  for (auto& p : out.values()) p = pose.apply(p);
  return out;
}

/// Perspective projection of each point: (î, ĵ) = K·p / p.z, z = p.z.
/// Points with z ≤ kMinDepth are flagged invalid rather than erroring.
inline ProjectionRecord project(const PointCloud& cloud,
                                const Intrinsics& intr) {
  const int w = cloud.width(), h = cloud.height();
  ProjectionRecord rec{Grid<double>(w, h, 0.0), Grid<double>(w, h, 0.0),
                       Grid<double>(w, h, 0.0), Grid<std::uint8_t>(w, h, 0)};
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      const Eigen::Vector3d& p = cloud.at(i, j);
      rec.z.at(i, j) = p.z();
      if (p.z() > kMinDepth) {
        rec.x.at(i, j) = p.x() / p.z() * intr.fx + intr.cx;
        rec.y.at(i, j) = p.y() / p.z() * intr.fy + intr.cy;
        rec.valid.at(i, j) = 1;
      }
    }
  }
  return rec;
}

}  // namespace multimask

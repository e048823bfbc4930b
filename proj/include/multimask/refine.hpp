// Copyright (c) 2026 The multimask Authors
// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale stand-in for network training: gradient descent on the masked
// photometric objective, over per-pixel log-depth or a 6-DoF pose twist.
//
// The objective is the t direction at full resolution with masks held fixed:
//   α·rec + γ·ssim (+ β·smooth for the depth target)
// where rec/ssim average over counted pixels (fixed mask ∧ currently valid
// and sampleable) and smooth is the edge-aware depth term. Masks are
// piecewise constant in the parameters, so between refreshes the objective
// is differentiable everywhere except bilinear cell boundaries.

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "multimask/camera.hpp"
#include "multimask/grid.hpp"
#include "multimask/losses.hpp"
#include "multimask/masks.hpp"
#include "multimask/warp.hpp"

namespace multimask {

enum class RefineTarget { kDepth, kPose };

struct RefineConfig {
  double step_size = 1.0;
  int max_iters = 100;
  LossWeights weights = LossWeights::defaults(false);
  RefineTarget target = RefineTarget::kDepth;
  int mask_refresh_interval = 5;  // accepted steps between mask refreshes
  int rounds = 3;                 // repeated-masking rounds per refresh
  PhotometricNorm norm = PhotometricNorm::kL1;

  void validate() const {
    if (!(step_size > 0.0)) {
      throw std::invalid_argument("RefineConfig: step_size must be positive");
    }
    if (max_iters < 1) {
      throw std::invalid_argument("RefineConfig: max_iters must be >= 1");
    }
    weights.validate();
  }
};

namespace refine_detail {

constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

inline double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// Forward (and optionally backward) pass of the masked photometric
/// objective. include gates which pixels are counted; pixels invalid or
/// unsampleable under the current geometry drop out of the counting but
/// their (zero) reconstructions still feed neighbouring SSIM windows.
struct PhotoResult {
  double loss = 0.0;
  std::int64_t counted = 0;
  Grid<double> grad_log_depth;  // depth target, same shape as the image
  Twist grad_twist = Twist::Zero();
};

inline PhotoResult photo_objective(const ImageBuffer& x_t,
                                   const ImageBuffer& x_tm1, const DepthMap& d,
                                   const PoseSE3& pose, const Intrinsics& intr,
                                   const Mask& include, double alpha,
                                   double gamma, PhotometricNorm norm,
                                   RefineTarget target, bool with_grad) {
  const int w = intr.width, h = intr.height, ch = x_t.channels();
  PhotoResult res;
  if (with_grad && target == RefineTarget::kDepth) {
    res.grad_log_depth = Grid<double>(w, h, 0.0);
  }

  // Geometry per pixel.
  const Eigen::Matrix3d& rot = pose.rotation();
  Grid<Eigen::Vector3d> qprime(w, h, Eigen::Vector3d::Zero());
  Grid<Eigen::Vector3d> rot_dir(w, h, Eigen::Vector3d::Zero());
  Grid<std::uint8_t> usable(w, h, 0);  // valid depth and sampleable footprint
  ImageBuffer xhat(w, h, ch);
  std::vector<double> dvdx(static_cast<std::size_t>(w) * h * ch, 0.0);
  std::vector<double> dvdy(dvdx.size(), 0.0);
  double val[3], gx[3], gy[3];
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      const Eigen::Vector3d dir((i - intr.cx) / intr.fx,
                                (j - intr.cy) / intr.fy, 1.0);
      const Eigen::Vector3d rd = rot * dir;
      const Eigen::Vector3d q = d.at(i, j) * rd + pose.translation();
      qprime.at(i, j) = q;
      rot_dir.at(i, j) = rd;
      if (q.z() <= kMinDepth) continue;
      const double px = q.x() / q.z() * intr.fx + intr.cx;
      const double py = q.y() / q.z() * intr.fy + intr.cy;
      if (!sample_with_grad(x_tm1, px, py, val, gx, gy)) continue;
      usable.at(i, j) = 1;
      for (int c = 0; c < ch; ++c) {
        xhat.at(i, j, c) = val[c];
        const std::size_t k = (static_cast<std::size_t>(j) * w + i) * ch + c;
        dvdx[k] = gx[c];
        dvdy[k] = gy[c];
      }
    }
  }

  Grid<std::uint8_t> counted(w, h, 0);
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      counted.at(i, j) =
          static_cast<std::uint8_t>(include.at(i, j) && usable.at(i, j));
      res.counted += counted.at(i, j);
    }
  }
  if (res.counted == 0) return res;
  const double inv_n = 1.0 / (static_cast<double>(res.counted) * ch);

  // dL/dxhat accumulator (all channels).
  std::vector<double> g_img;
  if (with_grad) g_img.assign(static_cast<std::size_t>(w) * h * ch, 0.0);

  double rec_sum = 0.0;
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      if (!counted.at(i, j)) continue;
      for (int c = 0; c < ch; ++c) {
        const double r = x_t.at(i, j, c) - xhat.at(i, j, c);
        if (norm == PhotometricNorm::kL1) {
          rec_sum += std::abs(r);
          if (with_grad) {
            g_img[(static_cast<std::size_t>(j) * w + i) * ch + c] -=
                alpha * inv_n * sign_of(r);
          }
        } else {
          rec_sum += r * r;
          if (with_grad) {
            g_img[(static_cast<std::size_t>(j) * w + i) * ch + c] -=
                alpha * inv_n * 2.0 * r;
          }
        }
      }
    }
  }

  // SSIM term: per counted pixel and channel, windows read everything.
  double ssim_sum = 0.0;
  for (int c = 0; c < ch; ++c) {
    for (int j = 0; j < h; ++j) {
      for (int i = 0; i < w; ++i) {
        if (!counted.at(i, j)) continue;
        double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
        int n = 0;
        for (int dj = -1; dj <= 1; ++dj) {
          for (int di = -1; di <= 1; ++di) {
            const int u = i + di, v = j + dj;
            if (u < 0 || u >= w || v < 0 || v >= h) continue;
            const double a = x_t.at(u, v, c), b = xhat.at(u, v, c);
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
        const double A = 2.0 * mx * my + kSsimC1;
        const double B = 2.0 * cxy + kSsimC2;
        const double C = mx * mx + my * my + kSsimC1;
        const double D = vx + vy + kSsimC2;
        const double ssim = (A * B) / (C * D);
        ssim_sum += 1.0 - std::clamp(ssim, -1.0, 1.0);
        if (!with_grad || ssim < -1.0 || ssim > 1.0) continue;
        const double dS_dA = B / (C * D);
        const double dS_dB = A / (C * D);
        const double dS_dC = -ssim / C;
        const double dS_dD = -ssim / D;
        const double dS_dmy =
            dS_dA * 2.0 * mx - dS_dB * 2.0 * mx + dS_dC * 2.0 * my -
            dS_dD * 2.0 * my;
        for (int dj = -1; dj <= 1; ++dj) {
          for (int di = -1; di <= 1; ++di) {
            const int u = i + di, v = j + dj;
            if (u < 0 || u >= w || v < 0 || v >= h) continue;
            const double a = x_t.at(u, v, c), b = xhat.at(u, v, c);
            // ∂S/∂y_q through the mean, second moment, and cross moment.
            const double dS_dyq =
                inv * (dS_dmy + dS_dD * 2.0 * b + dS_dB * 2.0 * a);
            g_img[(static_cast<std::size_t>(v) * w + u) * ch + c] -=
                gamma * inv_n * dS_dyq;
          }
        }
      }
    }
  }

  res.loss = alpha * rec_sum * inv_n + gamma * ssim_sum * inv_n;
  if (!with_grad) return res;

  // Chain dL/dxhat through the sampler and the projection to the target.
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      if (!usable.at(i, j)) continue;
      double dl_dpx = 0.0, dl_dpy = 0.0;
      for (int c = 0; c < ch; ++c) {
        const std::size_t k = (static_cast<std::size_t>(j) * w + i) * ch + c;
        dl_dpx += g_img[k] * dvdx[k];
        dl_dpy += g_img[k] * dvdy[k];
      }
      if (dl_dpx == 0.0 && dl_dpy == 0.0) continue;
      const Eigen::Vector3d& q = qprime.at(i, j);
      const double invz = 1.0 / q.z();
      const Eigen::Vector3d dpx_dq(intr.fx * invz, 0.0,
                                   -intr.fx * q.x() * invz * invz);
      const Eigen::Vector3d dpy_dq(0.0, intr.fy * invz,
                                   -intr.fy * q.y() * invz * invz);
      const Eigen::Vector3d g_q = dl_dpx * dpx_dq + dl_dpy * dpy_dq;
      if (target == RefineTarget::kDepth) {
        res.grad_log_depth.at(i, j) +=
            g_q.dot(rot_dir.at(i, j)) * d.at(i, j);
      } else {
        res.grad_twist.head<3>() += g_q;
        res.grad_twist.tail<3>() += q.cross(g_q);
      }
    }
  }
  return res;
}

/// Edge-aware smoothness value; optionally accumulates beta · d(smooth)/d(log
/// depth) into grad.
inline double smoothness_with_grad(const DepthMap& d, const ImageBuffer& x,
                                   double beta, Grid<double>* grad) {
  const int w = d.width(), h = d.height();
  const std::int64_t terms = static_cast<std::int64_t>(h) * (w - 1) +
                             static_cast<std::int64_t>(w) * (h - 1);
  if (terms == 0) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(terms);
  auto image_grad = [&](int i, int j, int di, int dj) {
    double g = 0.0;
    for (int c = 0; c < x.channels(); ++c) {
      g += std::abs(x.at(i + di, j + dj, c) - x.at(i, j, c));
    }
    return g / x.channels();
  };
  double sum = 0.0;
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i + 1 < w; ++i) {
      const double wgt = std::exp(-image_grad(i, j, 1, 0));
      const double r = d.at(i + 1, j) - d.at(i, j);
      sum += std::abs(r) * wgt;
      if (grad) {
        const double s = sign_of(r) * wgt * inv_n * beta;
        grad->at(i + 1, j) += s * d.at(i + 1, j);
        grad->at(i, j) -= s * d.at(i, j);
      }
    }
  }
  for (int j = 0; j + 1 < h; ++j) {
    for (int i = 0; i < w; ++i) {
      const double wgt = std::exp(-image_grad(i, j, 0, 1));
      const double r = d.at(i, j + 1) - d.at(i, j);
      sum += std::abs(r) * wgt;
      if (grad) {
        const double s = sign_of(r) * wgt * inv_n * beta;
        grad->at(i, j + 1) += s * d.at(i, j + 1);
        grad->at(i, j) -= s * d.at(i, j);
      }
    }
  }
  return sum * inv_n;
}

inline DepthMap depth_from_log(const Grid<double>& theta) {
  Grid<double> d = theta;
  for (double& v : d.values()) v = std::exp(v);
  return DepthMap(std::move(d));
}

}  // namespace refine_detail

// ---------------------------------------------------------------------------
// Public gradient entry points (masks held fixed).

struct DepthGradient {
  double loss = 0.0;
  Grid<double> grad_log_depth;
};

inline DepthGradient depth_loss_gradient(const ImageBuffer& x_t,
                                         const ImageBuffer& x_tm1,
                                         const DepthMap& d, const PoseSE3& pose,
                                         const Intrinsics& intr,
                                         const LossWeights& weights,
                                         const Mask& mask,
                                         PhotometricNorm norm =
                                             PhotometricNorm::kL1) {
  refine_detail::PhotoResult pr = refine_detail::photo_objective(
      x_t, x_tm1, d, pose, intr, mask, weights.alpha, weights.gamma, norm,
      RefineTarget::kDepth, true);
  const double smooth = refine_detail::smoothness_with_grad(
      d, x_t, weights.beta, &pr.grad_log_depth);
  return DepthGradient{pr.loss + weights.beta * smooth,
                       std::move(pr.grad_log_depth)};
}

struct PoseGradient {
  double loss = 0.0;
  Twist grad = Twist::Zero();
};

inline PoseGradient pose_loss_gradient(const ImageBuffer& x_t,
                                       const ImageBuffer& x_tm1,
                                       const DepthMap& d, const PoseSE3& pose,
                                       const Intrinsics& intr,
                                       const LossWeights& weights,
                                       const Mask& mask,
                                       PhotometricNorm norm =
                                           PhotometricNorm::kL1) {
  refine_detail::PhotoResult pr = refine_detail::photo_objective(
      x_t, x_tm1, d, pose, intr, mask, weights.alpha, weights.gamma, norm,
      RefineTarget::kPose, true);
  return PoseGradient{pr.loss, pr.grad_twist};
}

// ---------------------------------------------------------------------------
// Finite-difference oracle.

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  int checked = 0;
  int excluded_boundary = 0;  // coordinates straddling a bilinear cell edge
  int skipped_small = 0;      // |analytic| below the relative-error floor
};

/// Generic central-difference check of an externally supplied gradient.
inline double max_rel_error_fd(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, const std::vector<double>& grad, double h,
    const std::vector<int>& coords) {
  double worst = 0.0;
  for (int k : coords) {
    const double orig = x[static_cast<std::size_t>(k)];
    x[static_cast<std::size_t>(k)] = orig + h;
    const double fp = f(x);
    x[static_cast<std::size_t>(k)] = orig - h;
    const double fm = f(x);
    x[static_cast<std::size_t>(k)] = orig;
    const double fd = (fp - fm) / (2.0 * h);
    const double g = grad[static_cast<std::size_t>(k)];
    if (std::abs(g) > 1e-8) {
      worst = std::max(worst, std::abs(fd - g) / std::abs(g));
    }
  }
  return worst;
}

namespace refine_detail {

struct PixelState {
  long long fx = 0, fy = 0;    // footprint floors
  bool usable = false;
  std::array<std::int8_t, 3> rsign{0, 0, 0};  // sign of x_t − x̂ per channel
};

/// Footprint floors, sampleability, and L1 residual signs for one pixel
/// under the given geometry. Floors and signs are the objective's
/// non-differentiable sets; finite-difference probes must not cross them.
inline PixelState pixel_state(const ImageBuffer& x_t, const ImageBuffer& x_tm1,
                              double depth, int i, int j, const PoseSE3& pose,
                              const Intrinsics& intr) {
  PixelState st;
  const Eigen::Vector3d dir((i - intr.cx) / intr.fx, (j - intr.cy) / intr.fy,
                            1.0);
  const Eigen::Vector3d q = pose.rotation() * (depth * dir) + pose.translation();
  if (q.z() <= kMinDepth) return st;
  const double px = q.x() / q.z() * intr.fx + intr.cx;
  const double py = q.y() / q.z() * intr.fy + intr.cy;
  double val[3];
  if (!sample_with_grad(x_tm1, px, py, val)) return st;
  st.usable = true;
  st.fx = static_cast<long long>(std::floor(px));
  st.fy = static_cast<long long>(std::floor(py));
  for (int c = 0; c < x_t.channels(); ++c) {
    st.rsign[static_cast<std::size_t>(c)] =
        static_cast<std::int8_t>(sign_of(x_t.at(i, j, c) - val[c]));
  }
  return st;
}

inline Grid<PixelState> pixel_states(const ImageBuffer& x_t,
                                     const ImageBuffer& x_tm1,
                                     const DepthMap& d, const PoseSE3& pose,
                                     const Intrinsics& intr) {
  const int w = intr.width, h = intr.height;
  Grid<PixelState> out(w, h, PixelState{});
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      out.at(i, j) = pixel_state(x_t, x_tm1, d.at(i, j), i, j, pose, intr);
    }
  }
  return out;
}

inline bool same_state(const PixelState& a, const PixelState& b) {
  return a.usable == b.usable &&
         (!a.usable ||
          (a.fx == b.fx && a.fy == b.fy && a.rsign == b.rsign));
}

}  // namespace refine_detail

/// Central-difference validation of the depth gradient on a seeded random
/// subsample of pixels. Coordinates whose footprint floors move within ±h,
/// or whose smoothness terms change sign, are excluded and reported.
inline FiniteDiffReport finite_diff_check_depth(
    const ImageBuffer& x_t, const ImageBuffer& x_tm1, const DepthMap& d,
    const PoseSE3& pose, const Intrinsics& intr, const LossWeights& weights,
    const Mask& mask, double h, int sample_count = 100,
    std::uint64_t seed = 42, PhotometricNorm norm = PhotometricNorm::kL1) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_check: h > 0");
  const int w = intr.width;
  const int hh = intr.height;
  const DepthGradient analytic =
      depth_loss_gradient(x_t, x_tm1, d, pose, intr, weights, mask, norm);

  auto loss_at = [&](const DepthMap& dd) {
    refine_detail::PhotoResult pr = refine_detail::photo_objective(
        x_t, x_tm1, dd, pose, intr, mask, weights.alpha, weights.gamma, norm,
        RefineTarget::kDepth, false);
    return pr.loss + weights.beta * refine_detail::smoothness_with_grad(
                         dd, x_t, weights.beta, nullptr);
  };

  std::mt19937_64 rng(seed);
  FiniteDiffReport report;
  for (int s = 0; s < sample_count; ++s) {
    const int i = static_cast<int>(rng() % static_cast<std::uint64_t>(w));
    const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(hh));
    const double d0 = d.at(i, j);
    auto perturbed = [&](double factor) {
      Grid<double> g = d.grid();
      g.at(i, j) = d0 * factor;
      return DepthMap(std::move(g));
    };
    // Multiplicative probes d0·(1±h) estimate the same limit as central
    // differences in log-depth (dL/dθ = d·dL/dd) but stay symmetric in
    // d-space, so the |·| kinks of equal-depth neighbours cancel instead
    // of leaving an O(h) bias.
    const DepthMap dp = perturbed(1.0 + h);
    const DepthMap dm = perturbed(1.0 - h);

    // Stability of the pixel's own footprint cell and residual signs
    // across ±h (only this pixel's coordinates move).
    const refine_detail::PixelState st0 =
        refine_detail::pixel_state(x_t, x_tm1, d0, i, j, pose, intr);
    const refine_detail::PixelState stp = refine_detail::pixel_state(
        x_t, x_tm1, dp.at(i, j), i, j, pose, intr);
    const refine_detail::PixelState stm = refine_detail::pixel_state(
        x_t, x_tm1, dm.at(i, j), i, j, pose, intr);
    bool stable = refine_detail::same_state(st0, stp) &&
                  refine_detail::same_state(st0, stm);
    // Smoothness sign stability of the four adjacent differences. A
    // neighbour exactly equal to d0 crosses the |·| kink symmetrically and
    // central differences cancel there, so only unequal crossings exclude.
    auto diff_signs_stable = [&](int ni, int nj) {
      if (ni < 0 || ni >= w || nj < 0 || nj >= hh) return true;
      if (d.at(ni, nj) == d0) return true;
      const double r_p = d.at(ni, nj) - dp.at(i, j);
      const double r_m = d.at(ni, nj) - dm.at(i, j);
      return refine_detail::sign_of(r_p) == refine_detail::sign_of(r_m);
    };
    stable = stable && diff_signs_stable(i + 1, j) && diff_signs_stable(i - 1, j) &&
             diff_signs_stable(i, j + 1) && diff_signs_stable(i, j - 1);
    if (!stable) {
      ++report.excluded_boundary;
      continue;
    }

    const double fd = (loss_at(dp) - loss_at(dm)) / (2.0 * h);
    const double g = analytic.grad_log_depth.at(i, j);
    if (std::abs(g) <= 1e-8) {
      ++report.skipped_small;
      continue;
    }
    report.max_rel_error =
        std::max(report.max_rel_error, std::abs(fd - g) / std::abs(g));
    ++report.checked;
  }
  return report;
}

/// Central-difference validation of the pose gradient. A twist coordinate
/// moves every pixel, so each probe restricts the compared objective (both
/// sides) to pixels whose bilinear cells are stable across ±h, dilated by
/// one pixel so SSIM windows only read stable reconstructions.
inline FiniteDiffReport finite_diff_check_pose(
    const ImageBuffer& x_t, const ImageBuffer& x_tm1, const DepthMap& d,
    const PoseSE3& pose, const Intrinsics& intr, const LossWeights& weights,
    const Mask& mask, double h, PhotometricNorm norm = PhotometricNorm::kL1) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_check: h > 0");
  const int w = intr.width, hh = intr.height;
  FiniteDiffReport report;
  for (int k = 0; k < 6; ++k) {
    Twist step = Twist::Zero();
    step[k] = h;
    const PoseSE3 pose_p = pose_exp(step) * pose;
    const PoseSE3 pose_m = pose_exp(Twist(-step)) * pose;

    const Grid<refine_detail::PixelState> s0 =
        refine_detail::pixel_states(x_t, x_tm1, d, pose, intr);
    const Grid<refine_detail::PixelState> sp =
        refine_detail::pixel_states(x_t, x_tm1, d, pose_p, intr);
    const Grid<refine_detail::PixelState> sm =
        refine_detail::pixel_states(x_t, x_tm1, d, pose_m, intr);

    Mask stable = Mask::zeros(w, hh);
    for (int j = 0; j < hh; ++j) {
      for (int i = 0; i < w; ++i) {
        stable.set(i, j, refine_detail::same_state(s0.at(i, j), sp.at(i, j)) &&
                             refine_detail::same_state(s0.at(i, j),
                                                        sm.at(i, j)));
      }
    }
    Mask counted = Mask::zeros(w, hh);
    for (int j = 0; j < hh; ++j) {
      for (int i = 0; i < w; ++i) {
        if (!mask.at(i, j)) continue;
        bool ok = true;
        for (int dj = -1; dj <= 1 && ok; ++dj) {
          for (int di = -1; di <= 1 && ok; ++di) {
            const int u = i + di, v = j + dj;
            if (u < 0 || u >= w || v < 0 || v >= hh) continue;
            ok = stable.at(u, v);
          }
        }
        counted.set(i, j, ok);
      }
    }

    auto loss_at = [&](const PoseSE3& p) {
      return refine_detail::photo_objective(x_t, x_tm1, d, p, intr, counted,
                                            weights.alpha, weights.gamma, norm,
                                            RefineTarget::kPose, false)
          .loss;
    };
    refine_detail::PhotoResult pr = refine_detail::photo_objective(
        x_t, x_tm1, d, pose, intr, counted, weights.alpha, weights.gamma, norm,
        RefineTarget::kPose, true);
    const double fd = (loss_at(pose_p) - loss_at(pose_m)) / (2.0 * h);
    const double g = pr.grad_twist[k];
    if (std::abs(g) <= 1e-8) {
      ++report.skipped_small;
      continue;
    }
    report.max_rel_error =
        std::max(report.max_rel_error, std::abs(fd - g) / std::abs(g));
    ++report.checked;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Descent loops.

struct TraceRow {
  int iter = 0;
  double loss = 0.0;
  double step = 0.0;
};

struct RefineDepthResult {
  DepthMap depth;
  std::vector<TraceRow> trace;
  bool diverged = false;
};

struct RefinePoseResult {
  PoseSE3 pose;
  std::vector<TraceRow> trace;
  bool diverged = false;
};

namespace refine_detail {

inline Mask masks_for(const ImageBuffer& x_t, const ImageBuffer& x_tm1,
                      const DepthMap& d, const PoseSE3& pose,
                      const Intrinsics& intr, int rounds) {
  // The other frame's depth is not a parameter here; the current estimate
  // stands in for it when the records are built.
  return combine(
      repeated_masking(x_t, x_tm1, d, d, pose, intr, rounds).masks_t);
}

}  // namespace refine_detail

/// Gradient descent on per-pixel log-depth. Masks refresh every
/// mask_refresh_interval accepted steps; a step that raises the loss is
/// retried with half the step (up to 20 halvings, then the loop stops).
inline RefineDepthResult refine_depth(const DepthMap& initial,
                                      const ImageBuffer& x_t,
                                      const ImageBuffer& x_tm1,
                                      const PoseSE3& pose,
                                      const Intrinsics& intr,
                                      const RefineConfig& cfg) {
  cfg.validate();
  Grid<double> theta = initial.grid();
  for (double& v : theta.values()) v = std::log(v);

  DepthMap d = initial;
  Mask mask = refine_detail::masks_for(x_t, x_tm1, d, pose, intr, cfg.rounds);
  DepthGradient cur =
      depth_loss_gradient(x_t, x_tm1, d, pose, intr, cfg.weights, mask,
                          cfg.norm);
  RefineDepthResult result{d, {}, false};
  result.trace.push_back(TraceRow{0, cur.loss, cfg.step_size});
  if (!std::isfinite(cur.loss)) {
    result.diverged = true;
    return result;
  }

  int accepted = 0;
  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    double step = cfg.step_size;
    int halvings = 0;
    for (;;) {
      Grid<double> trial = theta;
      bool overflow = false;
      for (std::size_t k = 0; k < trial.size(); ++k) {
        trial[k] -= step * cur.grad_log_depth[k];
        overflow |= !(std::abs(trial[k]) < 700.0);  // exp() would leave ℝ
      }
      if (!overflow) {
        DepthMap d_trial = refine_detail::depth_from_log(trial);
        const double trial_loss =
            refine_detail::photo_objective(x_t, x_tm1, d_trial, pose, intr,
                                           mask, cfg.weights.alpha,
                                           cfg.weights.gamma, cfg.norm,
                                           RefineTarget::kDepth, false)
                .loss +
            cfg.weights.beta * refine_detail::smoothness_with_grad(
                                   d_trial, x_t, cfg.weights.beta, nullptr);
        if (!std::isfinite(trial_loss)) {
          result.depth = d;
          result.diverged = true;
          return result;
        }
        if (trial_loss <= cur.loss) {
          theta = std::move(trial);
          d = std::move(d_trial);
          cur = depth_loss_gradient(x_t, x_tm1, d, pose, intr, cfg.weights,
                                    mask, cfg.norm);
          cur.loss = trial_loss;
          ++accepted;
          result.trace.push_back(TraceRow{iter, cur.loss, step});
          break;
        }
      }
      step *= 0.5;
      if (++halvings >= 20) {
        result.depth = d;
        return result;
      }
    }
    if (accepted % cfg.mask_refresh_interval == 0) {
      // Refresh only when the new masks do not raise the current loss, so
      // the recorded trace stays non-increasing across refreshes.
      Mask fresh =
          refine_detail::masks_for(x_t, x_tm1, d, pose, intr, cfg.rounds);
      DepthGradient refreshed = depth_loss_gradient(
          x_t, x_tm1, d, pose, intr, cfg.weights, fresh, cfg.norm);
      if (refreshed.loss <= cur.loss) {
        mask = std::move(fresh);
        cur = std::move(refreshed);
      }
    }
  }
  result.depth = d;
  return result;
}

/// Gradient descent on a twist composed onto the current pose estimate;
/// same step-halving contract as refine_depth. true_depth is the fixed
/// depth of frame t.
inline RefinePoseResult refine_pose(const PoseSE3& initial,
                                    const DepthMap& true_depth,
                                    const ImageBuffer& x_t,
                                    const ImageBuffer& x_tm1,
                                    const Intrinsics& intr,
                                    const RefineConfig& cfg) {
  cfg.validate();
  PoseSE3 pose = initial;
  Mask mask = refine_detail::masks_for(x_t, x_tm1, true_depth, pose, intr,
                                       cfg.rounds);
  PoseGradient cur = pose_loss_gradient(x_t, x_tm1, true_depth, pose, intr,
                                        cfg.weights, mask, cfg.norm);
  RefinePoseResult result{pose, {}, false};
  result.trace.push_back(TraceRow{0, cur.loss, cfg.step_size});
  if (!std::isfinite(cur.loss)) {
    result.diverged = true;
    return result;
  }

  int accepted = 0;
  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    double step = cfg.step_size;
    int halvings = 0;
    for (;;) {
      const PoseSE3 trial = pose_exp(Twist(-step * cur.grad)) * pose;
      const double trial_loss =
          refine_detail::photo_objective(x_t, x_tm1, true_depth, trial, intr,
                                         mask, cfg.weights.alpha,
                                         cfg.weights.gamma, cfg.norm,
                                         RefineTarget::kPose, false)
              .loss;
      if (!std::isfinite(trial_loss)) {
        result.pose = pose;
        result.diverged = true;
        return result;
      }
      if (trial_loss <= cur.loss) {
        pose = trial;
        cur = pose_loss_gradient(x_t, x_tm1, true_depth, pose, intr,
                                 cfg.weights, mask, cfg.norm);
        cur.loss = trial_loss;
        ++accepted;
        result.trace.push_back(TraceRow{iter, cur.loss, step});
        break;
      }
      step *= 0.5;
      if (++halvings >= 20) {
        result.pose = pose;
        return result;
      }
    }
    if (accepted % cfg.mask_refresh_interval == 0) {
      Mask fresh = refine_detail::masks_for(x_t, x_tm1, true_depth, pose, intr,
                                            cfg.rounds);
      PoseGradient refreshed = pose_loss_gradient(
          x_t, x_tm1, true_depth, pose, intr, cfg.weights, fresh, cfg.norm);
      if (refreshed.loss <= cur.loss) {
        mask = std::move(fresh);
        cur = std::move(refreshed);
      }
    }
  }
  result.pose = pose;
  return result;
}

}  // namespace multimask

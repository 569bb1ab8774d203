#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <array>
#include <cmath>
#include <numbers>
#include <span>

#include "headgrow/errors.hpp"

namespace headgrow {

inline double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

// ---------------------------------------------------------------------------
// 2D similarity transform (uniform scale + rotation + translation)
// ---------------------------------------------------------------------------

struct Similarity2D {
    double scale = 1.0;
    double rotation = 0.0;  // radians, counter-clockwise in (x, y)
    Eigen::Vector2d translation = Eigen::Vector2d::Zero();

    Eigen::Vector2d apply(const Eigen::Vector2d& p) const {
        double c = std::cos(rotation), s = std::sin(rotation);
        return {scale * (c * p.x() - s * p.y()) + translation.x(),
                scale * (s * p.x() + c * p.y()) + translation.y()};
    }

    Similarity2D inverse() const {
        Similarity2D inv;
        inv.scale = 1.0 / scale;
        inv.rotation = -rotation;
        double c = std::cos(inv.rotation), s = std::sin(inv.rotation);
        Eigen::Vector2d t = -translation;
        inv.translation = {inv.scale * (c * t.x() - s * t.y()),
                           inv.scale * (s * t.x() + c * t.y())};
        return inv;
    }

    Eigen::Matrix3d matrix() const {
        double c = std::cos(rotation), s = std::sin(rotation);
        Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
        m(0, 0) = scale * c; m(0, 1) = -scale * s; m(0, 2) = translation.x();
        m(1, 0) = scale * s; m(1, 1) = scale * c;  m(1, 2) = translation.y();
        return m;
    }
};

/// Least-squares similarity mapping src onto dst (no reflection). Solved in
/// closed form via the complex-number parameterization w = a*z + b.
inline Similarity2D fit_similarity(std::span<const Eigen::Vector2d> src,
                                   std::span<const Eigen::Vector2d> dst) {
    if (src.size() != dst.size() || src.size() < 2)
        throw DegenerateFiducials("need at least 2 point pairs");
    const auto n = static_cast<double>(src.size());

    Eigen::Vector2d src_mean = Eigen::Vector2d::Zero();
    Eigen::Vector2d dst_mean = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < src.size(); ++i) {
        src_mean += src[i];
        dst_mean += dst[i];
    }
    src_mean /= n;
    dst_mean /= n;

    // Degeneracy check on the source layout: coincident points have zero
    // spread; collinear points drop the second singular value of the
    // demeaned 2xN matrix.
    Eigen::Matrix2d scatter = Eigen::Matrix2d::Zero();
    double spread = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) {
        Eigen::Vector2d d = src[i] - src_mean;
        scatter += d * d.transpose();
        spread += d.squaredNorm();
    }
    if (spread < 1e-12) throw DegenerateFiducials("source points coincident");
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(scatter);
    if (eig.eigenvalues()(0) < 1e-12 * eig.eigenvalues()(1))
        throw DegenerateFiducials("source points collinear");

    // a = sum(conj(z) * w) / sum(|z|^2) over demeaned complex points.
    double num_re = 0.0, num_im = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) {
        Eigen::Vector2d z = src[i] - src_mean;
        Eigen::Vector2d w = dst[i] - dst_mean;
        num_re += z.x() * w.x() + z.y() * w.y();
        num_im += z.x() * w.y() - z.y() * w.x();
    }
    num_re /= spread;
    num_im /= spread;

    Similarity2D t;
    t.scale = std::hypot(num_re, num_im);
    t.rotation = std::atan2(num_im, num_re);
    if (t.scale < 1e-12) throw DegenerateFiducials("degenerate scale in similarity fit");
    double c = std::cos(t.rotation), s = std::sin(t.rotation);
    t.translation = dst_mean - Eigen::Vector2d(
        t.scale * (c * src_mean.x() - s * src_mean.y()),
        t.scale * (s * src_mean.x() + c * src_mean.y()));
    return t;
}

// ---------------------------------------------------------------------------
// Camera model. World frame: x right, y up, z toward the viewer. Image frame:
// u right, v down, depth toward the viewer (larger depth = nearer). All three
// image quantities are in pixel units.
// ---------------------------------------------------------------------------

struct Camera {
    double scale = 1.0;
    Eigen::Vector2d center = Eigen::Vector2d::Zero();  // image point of world origin

    Eigen::Vector3d project(const Eigen::Vector3d& p_cam) const {
        return {scale * p_cam.x() + center.x(),
                -scale * p_cam.y() + center.y(),
                scale * p_cam.z()};
    }

    Eigen::Vector3d backproject(double u, double v, double depth) const {
        return {(u - center.x()) / scale, -(v - center.y()) / scale, depth / scale};
    }
};

/// Unit-scale camera centered on a width x height image; the frame the
/// reconstruction lives in.
inline Camera standard_camera(int width, int height) {
    Camera cam;
    cam.scale = 1.0;
    cam.center = {width / 2.0, height / 2.0};
    return cam;
}

/// Rotation by `degrees` of head yaw about the vertical (world y) axis.
inline Eigen::Affine3d azimuth_rotation(double degrees) {
    return Eigen::Affine3d(
        Eigen::AngleAxisd(deg_to_rad(degrees), Eigen::Vector3d::UnitY()));
}

}  // namespace headgrow

#pragma once

#include <Eigen/Dense>
#include <limits>
#include <string>

#include "headgrow/errors.hpp"
#include "headgrow/types.hpp"

namespace headgrow::ambiguity {

struct AmbiguityTransform {
    Eigen::Matrix4d a = Eigen::Matrix4d::Identity();
};

namespace detail {

inline double condition_number(const Eigen::Matrix4d& m) {
    Eigen::JacobiSVD<Eigen::Matrix4d> svd(m);
    const double smin = svd.singularValues()(3);
    if (smin <= 0.0) return std::numeric_limits<double>::infinity();
    return svd.singularValues()(0) / smin;
}

}  // namespace detail

/// Least-squares 4x4 transform taking the estimated harmonic vectors onto the
/// reference ones over the pixels valid in both fields (optionally further
/// restricted by `overlap`). Minimizes sum |ref - A*est|^2 in closed form.
inline AmbiguityTransform solve_linear_ambiguity(const NormalField& estimated,
                                                 const NormalField& reference,
                                                 const Mask* overlap = nullptr) {
    if (estimated.width != reference.width || estimated.height != reference.height)
        throw InsufficientOverlap("field sizes differ");

    Eigen::Matrix4d est_cov = Eigen::Matrix4d::Zero();   // sum est * est^T
    Eigen::Matrix4d cross_cov = Eigen::Matrix4d::Zero(); // sum ref * est^T
    long count = 0;
    for (int y = 0; y < estimated.height; ++y)
        for (int x = 0; x < estimated.width; ++x) {
            if (!estimated.valid(x, y) || !reference.valid(x, y)) continue;
            if (overlap && !(*overlap)(x, y)) continue;
            Eigen::Vector4d e = estimated.raw4(x, y);
            Eigen::Vector4d r = reference.raw4(x, y);
            est_cov += e * e.transpose();
            cross_cov += r * e.transpose();
            ++count;
        }
    if (count < 100)
        throw InsufficientOverlap("only " + std::to_string(count) +
                                  " overlapping valid pixels, need at least 100");

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(est_cov);
    const auto& ev = eig.eigenvalues();
    if (ev(0) < 1e-12 * ev(3))
        throw RankDeficientNormals("estimated harmonic vectors span fewer than 4 dimensions");

    AmbiguityTransform t;
    t.a = est_cov.ldlt().solve(cross_cov.transpose()).transpose();
    const double cond = detail::condition_number(t.a);
    if (!(cond < 1e8))
        throw SingularTransform("ambiguity transform condition number " + std::to_string(cond));
    return t;
}

/// Maps every valid pixel's harmonic vector through A and refreshes the
/// derived normal and albedo. Invalid pixels are untouched.
inline NormalField apply_ambiguity(const AmbiguityTransform& t, const NormalField& field) {
    const double cond = detail::condition_number(t.a);
    if (!(cond < 1e8))
        throw SingularTransform("ambiguity transform condition number " + std::to_string(cond));

    NormalField out(field.width, field.height);
    for (int y = 0; y < field.height; ++y)
        for (int x = 0; x < field.width; ++x) {
            if (!field.valid(x, y)) continue;
            out.set_from_raw4(x, y, t.a * field.raw4(x, y));
        }
    return out;
}

}  // namespace headgrow::ambiguity

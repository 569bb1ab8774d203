#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "headgrow/errors.hpp"
#include "headgrow/grid.hpp"
#include "headgrow/parallel.hpp"
#include "headgrow/types.hpp"

namespace headgrow::photometric {

/// Photo intensities for one cluster region, one row per photo and one
/// column per region pixel that at least one photo covers.
struct IntensityMatrix {
    Eigen::MatrixXd values;  // n photos x p pixels
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> covered;
    std::vector<std::pair<int, int>> pixel_index;  // column -> (x, y)
    std::vector<std::string> photo_index;          // row -> photo id
    std::string region;
};

struct LightingBasis {
    Eigen::MatrixXd coefficients;  // n x 4, harmonic order [ambient, x, y, z]
};

inline IntensityMatrix build_intensity_matrix(const PhotoCluster& cluster, const Mask& region_mask,
                                              std::string region_tag = "head") {
    const int n = static_cast<int>(cluster.photos.size());
    if (n < 4) throw TooFewPhotos("cluster has " + std::to_string(n) + " photos, need at least 4");
    if (!region_mask.same_size(cluster.photos.front().pixels))
        throw EmptyCluster("region mask size differs from cluster images");

    IntensityMatrix out;
    out.region = std::move(region_tag);
    for (int y = 0; y < region_mask.height(); ++y)
        for (int x = 0; x < region_mask.width(); ++x) {
            if (!region_mask(x, y)) continue;
            bool any = false;
            for (const auto& photo : cluster.photos)
                if (photo.mask(x, y)) {
                    any = true;
                    break;
                }
            if (any) out.pixel_index.emplace_back(x, y);
        }

    const int p = static_cast<int>(out.pixel_index.size());
    out.values.setZero(n, p);
    out.covered.setZero(n, p);
    out.photo_index.resize(n);
    for (int i = 0; i < n; ++i) {
        const Photo& photo = cluster.photos[i];
        out.photo_index[i] = photo.id;
        for (int j = 0; j < p; ++j) {
            auto [x, y] = out.pixel_index[j];
            if (!photo.mask(x, y)) continue;
            out.values(i, j) = photo.pixels(x, y);
            out.covered(i, j) = 1;
        }
    }
    return out;
}

/// Fills uncovered entries with the mean of the covered entries in the same
/// column (columns are guaranteed to have at least one covered entry).
inline Eigen::MatrixXd imputed_values(const IntensityMatrix& q) {
    Eigen::MatrixXd out = q.values;
    for (int j = 0; j < out.cols(); ++j) {
        double sum = 0.0;
        int count = 0;
        for (int i = 0; i < out.rows(); ++i)
            if (q.covered(i, j)) {
                sum += out(i, j);
                ++count;
            }
        const double mean = count > 0 ? sum / count : 0.0;
        for (int i = 0; i < out.rows(); ++i)
            if (!q.covered(i, j)) out(i, j) = mean;
    }
    return out;
}

struct FactorResult {
    LightingBasis lighting;
    Eigen::MatrixXd raw4;  // 4 x p, column j in the harmonic frame of column j of Q
    Eigen::VectorXd singular_values;
};

/// Best rank-4 approximation of the (imputed) intensity matrix, split as
/// Q ~= L * N with the singular values folded into L. Column signs are fixed
/// by correlation with per-photo mean brightness so repeated runs agree.
inline FactorResult factor_rank4(const IntensityMatrix& q) {
    const int n = static_cast<int>(q.values.rows());
    if (n < 4) throw TooFewPhotos("factorization needs at least 4 photos");
    Eigen::MatrixXd dense = imputed_values(q);

    Eigen::BDCSVD<Eigen::MatrixXd> svd(dense, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    if (sv.size() < 4 || sv(3) < 1e-8 * sv(0))
        throw DegenerateLighting("4th singular value " +
                                 std::to_string(sv.size() < 4 ? 0.0 : sv(3)) +
                                 " too small relative to " + std::to_string(sv(0)));

    FactorResult out;
    out.singular_values = sv;
    out.lighting.coefficients = svd.matrixU().leftCols(4) * sv.head(4).asDiagonal();
    out.raw4 = svd.matrixV().leftCols(4).transpose();

    Eigen::VectorXd brightness = dense.rowwise().mean();
    for (int k = 0; k < 4; ++k) {
        if (out.lighting.coefficients.col(k).dot(brightness) < 0.0) {
            out.lighting.coefficients.col(k) = -out.lighting.coefficients.col(k);
            out.raw4.row(k) = -out.raw4.row(k);
        }
    }
    return out;
}

struct NormalEstimationOptions {
    double residual_gate = 2.0;     // multiple of the median absolute residual
    bool min_photo_fraction = true; // require selected count >= n/3
    int workers = 0;
};

namespace detail {

inline double median_of(std::vector<double>& values) {
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + mid, values.end());
    double m = values[mid];
    if (values.size() % 2 == 0) {
        std::nth_element(values.begin(), values.begin() + mid - 1, values.begin() + mid);
        m = 0.5 * (m + values[mid - 1]);
    }
    return m;
}

}  // namespace detail

/// Per-pixel harmonic solve against the shared lighting basis. Each pixel
/// first solves over every photo whose mask covers it, then keeps only the
/// photos whose residual passes the gate and solves once more. Pixels with
/// fewer than four usable photos, or fewer than n/3 after gating, come back
/// invalid rather than raising.
inline NormalField estimate_pixel_normals(const PhotoCluster& cluster, const LightingBasis& lighting,
                                          const Mask& head_mask,
                                          const NormalEstimationOptions& opts = {}) {
    const int n = static_cast<int>(cluster.photos.size());
    const int w = head_mask.width(), h = head_mask.height();
    NormalField field(w, h);

    std::vector<std::pair<int, int>> pixels;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (head_mask(x, y)) pixels.emplace_back(x, y);

    parallel_for(static_cast<int>(pixels.size()), [&](int idx) {
        auto [x, y] = pixels[idx];
        std::vector<int> rows;
        rows.reserve(n);
        for (int i = 0; i < n; ++i)
            if (cluster.photos[i].mask(x, y)) rows.push_back(i);
        if (rows.size() < 4) return;

        Eigen::MatrixXd a(rows.size(), 4);
        Eigen::VectorXd b(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            a.row(r) = lighting.coefficients.row(rows[r]);
            b(r) = cluster.photos[rows[r]].pixels(x, y);
        }
        Eigen::Vector4d m0 = a.colPivHouseholderQr().solve(b);

        std::vector<double> residuals(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) residuals[r] = std::abs(b(r) - a.row(r).dot(m0));
        std::vector<double> scratch = residuals;
        const double gate = opts.residual_gate * detail::median_of(scratch) + 1e-9;

        std::vector<int> keep;
        keep.reserve(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r)
            if (residuals[r] < gate) keep.push_back(static_cast<int>(r));
        if (keep.size() < 4) return;
        if (opts.min_photo_fraction && static_cast<double>(keep.size()) < n / 3.0) return;

        Eigen::MatrixXd a2(keep.size(), 4);
        Eigen::VectorXd b2(keep.size());
        for (std::size_t r = 0; r < keep.size(); ++r) {
            a2.row(r) = a.row(keep[r]);
            b2(r) = b(keep[r]);
        }
        field.set_from_raw4(x, y, a2.colPivHouseholderQr().solve(b2));
    }, opts.workers);

    return field;
}

}  // namespace headgrow::photometric

#pragma once

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "headgrow/errors.hpp"
#include "headgrow/grid.hpp"
#include "headgrow/types.hpp"

namespace headgrow::integrate {

/// Sparse gradient constraints over the valid pixels of a normal field.
/// Finite-difference rows n_z*(z_right - z_here) = -n_x and
/// n_z*(z_below - z_here) = -n_y, falling back to the tangential form
/// n_y*(z_right - z_here) - n_x*(z_below - z_here) = 0 where the normal is
/// nearly in-plane. Rows are scaled by min(albedo, 1).
struct GradientSystem {
    Eigen::SparseMatrix<double> m;                  // rows x unknowns
    Eigen::VectorXd v;                              // right-hand side
    std::vector<std::pair<int, int>> unknown_pixel; // column -> (x, y)
    Grid<int> column_of;                            // (x, y) -> column, -1 if not an unknown
    int width = 0;
    int height = 0;
};

inline GradientSystem build_gradient_system(const NormalField& field,
                                            double nz_degenerate = 0.05) {
    GradientSystem sys;
    sys.width = field.width;
    sys.height = field.height;
    sys.column_of = Grid<int>(field.width, field.height, -1);
    for (int y = 0; y < field.height; ++y)
        for (int x = 0; x < field.width; ++x)
            if (field.valid(x, y)) {
                sys.column_of(x, y) = static_cast<int>(sys.unknown_pixel.size());
                sys.unknown_pixel.emplace_back(x, y);
            }
    if (sys.unknown_pixel.empty()) throw NoValidPixels("normal field has no valid pixels");

    std::vector<Eigen::Triplet<double>> trips;
    std::vector<double> rhs;
    auto add_row = [&](std::initializer_list<std::pair<int, double>> coeffs, double b) {
        const int row = static_cast<int>(rhs.size());
        for (const auto& [col, val] : coeffs) trips.emplace_back(row, col, val);
        rhs.push_back(b);
    };

    for (int col = 0; col < static_cast<int>(sys.unknown_pixel.size()); ++col) {
        auto [x, y] = sys.unknown_pixel[col];
        const Eigen::Vector3d& n = field.normal(x, y);
        const double w = std::min(field.albedo(x, y), 1.0);
        const int right = x + 1 < field.width ? sys.column_of(x + 1, y) : -1;
        const int below = y + 1 < field.height ? sys.column_of(x, y + 1) : -1;
        if (std::abs(n.z()) >= nz_degenerate) {
            if (right >= 0) add_row({{right, w * n.z()}, {col, -w * n.z()}}, -w * n.x());
            if (below >= 0) add_row({{below, w * n.z()}, {col, -w * n.z()}}, -w * n.y());
        } else if (right >= 0 && below >= 0) {
            add_row({{col, w * (n.x() - n.y())}, {right, w * n.y()}, {below, -w * n.x()}}, 0.0);
        }
    }

    sys.m.resize(static_cast<int>(rhs.size()), static_cast<int>(sys.unknown_pixel.size()));
    sys.m.setFromTriplets(trips.begin(), trips.end());
    sys.v = Eigen::Map<Eigen::VectorXd>(rhs.data(), static_cast<Eigen::Index>(rhs.size()));
    return sys;
}

/// Dirichlet term of the stitched solve: weighted soft constraints z = z0.
struct BoundaryConstraint {
    Grid<double> z0;
    Grid<double> weight;  // in [0, 1], nonzero only where z0 is meaningful

    BoundaryConstraint() = default;
    BoundaryConstraint(int w, int h) : z0(w, h, 0.0), weight(w, h, 0.0) {}
};

/// Blend weights rising linearly from 0 at the region boundary to 1 at
/// `band_width` pixels inside it (Euclidean distance; anything outside the
/// image frame counts as boundary). Zero outside the region. A zero band
/// yields the plain indicator.
inline Grid<double> make_blend_mask(const Mask& region, double band_width) {
    if (count_set(region) == 0) throw EmptyRegion("blend region is empty");
    const int w = region.width(), h = region.height();

    // Squared Euclidean distance transform (two-pass parabola method) on a
    // one-pixel padded grid so the image border acts as region boundary.
    const int pw = w + 2, ph = h + 2;
    const double kInf = 1e18;
    std::vector<double> dist(static_cast<std::size_t>(pw) * ph);
    for (int y = 0; y < ph; ++y)
        for (int x = 0; x < pw; ++x) {
            bool inside = x >= 1 && x <= w && y >= 1 && y <= h && region(x - 1, y - 1);
            dist[static_cast<std::size_t>(y) * pw + x] = inside ? kInf : 0.0;
        }

    auto dt_1d = [&](double* f, int n, int stride) {
        static thread_local std::vector<int> v_idx;
        static thread_local std::vector<double> z_bound, f_copy;
        v_idx.assign(n, 0);
        z_bound.assign(n + 1, 0.0);
        f_copy.resize(n);
        for (int i = 0; i < n; ++i) f_copy[i] = f[static_cast<std::size_t>(i) * stride];
        int k = 0;
        v_idx[0] = 0;
        z_bound[0] = -kInf;
        z_bound[1] = kInf;
        for (int i = 1; i < n; ++i) {
            double s;
            while (true) {
                int vk = v_idx[k];
                s = ((f_copy[i] + i * i) - (f_copy[vk] + vk * vk)) / (2.0 * i - 2.0 * vk);
                if (s > z_bound[k]) break;
                --k;
            }
            ++k;
            v_idx[k] = i;
            z_bound[k] = s;
            z_bound[k + 1] = kInf;
        }
        k = 0;
        for (int i = 0; i < n; ++i) {
            while (z_bound[k + 1] < i) ++k;
            int vk = v_idx[k];
            f[static_cast<std::size_t>(i) * stride] = (i - vk) * (i - vk) + f_copy[vk];
        }
    };

    for (int x = 0; x < pw; ++x) dt_1d(&dist[x], ph, pw);
    for (int y = 0; y < ph; ++y) dt_1d(&dist[static_cast<std::size_t>(y) * pw], pw, 1);

    Grid<double> out(w, h, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!region(x, y)) continue;
            double d = std::sqrt(dist[static_cast<std::size_t>(y + 1) * pw + (x + 1)]);
            out(x, y) = band_width <= 0.0 ? 1.0 : std::clamp(d / band_width, 0.0, 1.0);
        }
    return out;
}

struct IntegrateOptions {
    double nz_degenerate = 0.05;
    double tolerance = 1e-8;
    int workers = 0;  // accepted for interface symmetry; the solve is one task
};

namespace detail {

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int i) {
        while (parent[i] != i) {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        return i;
    }
    void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace detail

/// Least-squares depth from a gradient system, optionally stitched to
/// reference depths via weighted Dirichlet rows. Components untouched by any
/// Dirichlet row are gauged to mean depth zero. Solves the normal equations
/// directly and falls back to conjugate gradients when the factorization is
/// unusable; raises SolverDivergence if neither reaches the tolerance.
inline DepthMap integrate_system(const GradientSystem& sys,
                                 const BoundaryConstraint* bc = nullptr,
                                 const IntegrateOptions& opts = {},
                                 const DepthMap* initial = nullptr) {
    const int p = static_cast<int>(sys.unknown_pixel.size());

    // Connected components of the unknowns under shared gradient rows; each
    // bc-free component keeps the all-ones gauge freedom.
    detail::UnionFind uf(p);
    {
        Eigen::SparseMatrix<double, Eigen::RowMajor> rows = sys.m;
        for (int r = 0; r < rows.outerSize(); ++r) {
            int first = -1;
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(rows, r); it; ++it) {
                if (first < 0)
                    first = static_cast<int>(it.col());
                else
                    uf.unite(first, static_cast<int>(it.col()));
            }
        }
    }

    std::vector<Eigen::Triplet<double>> extra;
    std::vector<double> extra_rhs;
    std::vector<char> component_has_bc(p, 0);
    if (bc) {
        for (int col = 0; col < p; ++col) {
            auto [x, y] = sys.unknown_pixel[col];
            const double w = bc->weight(x, y);
            if (w <= 0.0) continue;
            extra.emplace_back(static_cast<int>(extra_rhs.size()), col, w);
            extra_rhs.push_back(w * bc->z0(x, y));
            component_has_bc[uf.find(col)] = 1;
        }
    }
    std::vector<int> anchored_roots;
    for (int col = 0; col < p; ++col) {
        int root = uf.find(col);
        if (component_has_bc[root]) continue;
        // Anchor the first unknown of each floating component; the all-ones
        // nullspace lets the solver zero this row at no cost to the gradient
        // residual, so it only picks the representative, never biases it.
        component_has_bc[root] = 2;
        anchored_roots.push_back(root);
        extra.emplace_back(static_cast<int>(extra_rhs.size()), col, 1.0);
        extra_rhs.push_back(0.0);
    }

    Eigen::SparseMatrix<double> a(sys.m.rows() + static_cast<Eigen::Index>(extra_rhs.size()), p);
    {
        std::vector<Eigen::Triplet<double>> all;
        all.reserve(sys.m.nonZeros() + extra.size());
        for (int k = 0; k < sys.m.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(sys.m, k); it; ++it)
                all.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
        for (const auto& t : extra)
            all.emplace_back(static_cast<int>(sys.m.rows()) + t.row(), t.col(), t.value());
        a.setFromTriplets(all.begin(), all.end());
    }
    Eigen::VectorXd b(a.rows());
    b.head(sys.m.rows()) = sys.v;
    for (std::size_t i = 0; i < extra_rhs.size(); ++i) b(sys.m.rows() + static_cast<Eigen::Index>(i)) = extra_rhs[i];

    Eigen::VectorXd atb = a.transpose() * b;
    const double atb_norm = std::max(atb.norm(), 1e-30);
    auto rel_residual = [&](const Eigen::VectorXd& z) {
        return (a.transpose() * (a * z - b)).norm() / atb_norm;
    };

    Eigen::VectorXd z;
    bool solved = false;
    {
        Eigen::SparseMatrix<double> ata = (a.transpose() * a).pruned();
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(ata);
        if (ldlt.info() == Eigen::Success) {
            z = ldlt.solve(atb);
            solved = z.allFinite() && rel_residual(z) <= opts.tolerance;
        }
    }
    if (!solved) {
        Eigen::LeastSquaresConjugateGradient<Eigen::SparseMatrix<double>> cg(a);
        cg.setTolerance(opts.tolerance);
        cg.setMaxIterations(10 * static_cast<Eigen::Index>(p));
        if (initial) {
            Eigen::VectorXd guess(p);
            for (int col = 0; col < p; ++col) {
                auto [x, y] = sys.unknown_pixel[col];
                guess(col) = initial->valid(x, y) ? initial->depth(x, y) : 0.0;
            }
            z = cg.solveWithGuess(b, guess);
        } else {
            z = cg.solve(b);
        }
        if (!z.allFinite() || rel_residual(z) > opts.tolerance)
            throw SolverDivergence("depth solve stalled at relative residual " +
                                   std::to_string(z.allFinite() ? rel_residual(z) : std::numeric_limits<double>::quiet_NaN()));
    }

    // Gauge: shift every anchored component to mean depth zero.
    if (!anchored_roots.empty()) {
        std::vector<double> comp_sum(p, 0.0);
        std::vector<int> comp_count(p, 0);
        for (int col = 0; col < p; ++col) {
            int root = uf.find(col);
            comp_sum[root] += z(col);
            comp_count[root] += 1;
        }
        for (int col = 0; col < p; ++col) {
            int root = uf.find(col);
            if (component_has_bc[root] == 2) z(col) -= comp_sum[root] / comp_count[root];
        }
    }

    DepthMap out(sys.width, sys.height);
    for (int col = 0; col < p; ++col) {
        auto [x, y] = sys.unknown_pixel[col];
        out.depth(x, y) = z(col);
        out.valid(x, y) = 255;
    }
    return out;
}

inline DepthMap integrate_normals(const NormalField& field, const BoundaryConstraint* bc = nullptr,
                                  const IntegrateOptions& opts = {},
                                  const DepthMap* initial = nullptr) {
    GradientSystem sys = build_gradient_system(field, opts.nz_degenerate);
    return integrate_system(sys, bc, opts, initial);
}

/// Objective of the stitched solve, for convergence checks:
/// |Mz - v|^2 + |W z - W z0|^2 over the system's unknowns.
inline double stitch_objective(const GradientSystem& sys, const BoundaryConstraint* bc,
                               const DepthMap& depth) {
    Eigen::VectorXd z(static_cast<Eigen::Index>(sys.unknown_pixel.size()));
    for (std::size_t col = 0; col < sys.unknown_pixel.size(); ++col) {
        auto [x, y] = sys.unknown_pixel[col];
        z(static_cast<Eigen::Index>(col)) = depth.depth(x, y);
    }
    double obj = (sys.m * z - sys.v).squaredNorm();
    if (bc)
        for (std::size_t col = 0; col < sys.unknown_pixel.size(); ++col) {
            auto [x, y] = sys.unknown_pixel[col];
            const double w = bc->weight(x, y);
            if (w > 0.0) obj += std::pow(w * z(static_cast<Eigen::Index>(col)) - w * bc->z0(x, y), 2);
        }
    return obj;
}

}  // namespace headgrow::integrate

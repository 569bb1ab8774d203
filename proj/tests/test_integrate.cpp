#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <vector>

#include "headgrow/integrate.hpp"
#include "headgrow/types.hpp"

using namespace headgrow;
using integrate::BoundaryConstraint;
using integrate::GradientSystem;
using integrate::IntegrateOptions;

namespace {

NormalField field_from_depth_function(int w, int h,
                                      const std::function<double(int, int)>& z) {
    // Encodes the discrete forward differences of z directly, so the gradient
    // system is exactly consistent and the integral must reproduce z.
    NormalField f(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double gx = z(x + 1, y) - z(x, y);
            double gy = z(x, y + 1) - z(x, y);
            Eigen::Vector3d n(-gx, -gy, 1.0);
            n.normalize();
            f.set_from_raw4(x, y, Eigen::Vector4d(1.0, n.x(), n.y(), n.z()));
        }
    return f;
}

double demeaned_max_error(const DepthMap& est,
                          const std::function<double(int, int)>& z) {
    double est_mean = 0.0, ref_mean = 0.0;
    long n = 0;
    for (int y = 0; y < est.height(); ++y)
        for (int x = 0; x < est.width(); ++x) {
            if (!est.valid(x, y)) continue;
            est_mean += est.depth(x, y);
            ref_mean += z(x, y);
            ++n;
        }
    est_mean /= n;
    ref_mean /= n;
    double worst = 0.0;
    for (int y = 0; y < est.height(); ++y)
        for (int x = 0; x < est.width(); ++x) {
            if (!est.valid(x, y)) continue;
            worst = std::max(worst, std::abs((est.depth(x, y) - est_mean) -
                                             (z(x, y) - ref_mean)));
        }
    return worst;
}

Grid<double> brute_force_blend(const Mask& region, double band) {
    const int w = region.width(), h = region.height();
    // Padded complement: everything outside the image frame is boundary too.
    std::vector<std::pair<int, int>> zeros;
    for (int y = -1; y <= h; ++y)
        for (int x = -1; x <= w; ++x)
            if (!region.in_bounds(x, y) || !region(x, y)) zeros.emplace_back(x, y);

    Grid<double> out(w, h, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!region(x, y)) continue;
            double best = 1e18;
            for (auto [zx, zy] : zeros) {
                double dx = x - zx, dy = y - zy;
                best = std::min(best, dx * dx + dy * dy);
            }
            double d = std::sqrt(best);
            out(x, y) = band <= 0.0 ? 1.0 : std::clamp(d / band, 0.0, 1.0);
        }
    return out;
}

}  // namespace

TEST_CASE("a flat field integrates to a constant surface", "[integrate]") {
    NormalField flat(16, 12);
    for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 16; ++x)
            flat.set_from_raw4(x, y, {1.0, 0.0, 0.0, 1.0});

    GradientSystem sys = integrate::build_gradient_system(flat);
    REQUIRE(sys.v.cwiseAbs().maxCoeff() == 0.0);

    DepthMap depth = integrate::integrate_normals(flat);
    for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 16; ++x) {
            REQUIRE(depth.valid(x, y) != 0);
            // Free components are gauged to mean zero.
            REQUIRE(std::abs(depth.depth(x, y)) < 1e-10);
        }
}

TEST_CASE("a tilted plane integrates back to itself", "[integrate]") {
    const double a = 0.3, b = -0.2;
    auto plane = [&](int x, int y) { return a * x + b * y; };
    NormalField f(20, 16);
    Eigen::Vector3d n(-a, -b, 1.0);
    n.normalize();
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 20; ++x)
            f.set_from_raw4(x, y, Eigen::Vector4d(1.0, n.x(), n.y(), n.z()));

    DepthMap depth = integrate::integrate_normals(f);
    REQUIRE(demeaned_max_error(depth, plane) < 1e-8);
}

TEST_CASE("any discretely consistent surface is reproduced exactly",
          "[integrate]") {
    auto z = [](int x, int y) {
        return 3.0 * std::sin(x / 3.0) + 2.0 * std::cos(y / 4.0) + 0.02 * x * y;
    };
    NormalField f = field_from_depth_function(24, 18, z);
    DepthMap depth = integrate::integrate_normals(f);
    REQUIRE(demeaned_max_error(depth, z) < 1e-6);
}

TEST_CASE("a hemisphere integrates to the analytic dome away from the rim",
          "[integrate]") {
    const int size = 128;
    const double r = 50.0, c = size / 2.0;
    NormalField f(size, size);
    auto height = [&](int x, int y) {
        double rho2 = (x - c) * (x - c) + (y - c) * (y - c);
        return rho2 < r * r ? std::sqrt(r * r - rho2) : 0.0;
    };
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            if (height(x, y) < 0.05 * r) continue;  // grazing normals stay out
            // The row for pixel (x, y) constrains the step to (x+1, y), so the
            // faithful sample of the analytic surface sits half a pixel over.
            double sx = x + 0.5 - c, sy = y + 0.5 - c;
            double zz = r * r - sx * sx - sy * sy;
            if (zz <= 0.0) continue;
            f.set_from_raw4(x, y,
                            Eigen::Vector4d(1.0, sx / r, sy / r, std::sqrt(zz) / r));
        }

    DepthMap depth = integrate::integrate_normals(f);
    double sq = 0.0;
    long n = 0;
    double est_mean = 0.0, ref_mean = 0.0;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            if (!depth.valid(x, y)) continue;
            est_mean += depth.depth(x, y);
            ref_mean += height(x, y);
            ++n;
        }
    est_mean /= n;
    ref_mean /= n;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            if (!depth.valid(x, y)) continue;
            double diff = (depth.depth(x, y) - est_mean) - (height(x, y) - ref_mean);
            sq += diff * diff;
        }
    REQUIRE(n > 5000);
    REQUIRE(std::sqrt(sq / n) < 0.01 * r);
}

TEST_CASE("nearly in-plane normals emit a tangential row instead of slopes",
          "[integrate]") {
    NormalField f(3, 3);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x)
            f.set_from_raw4(x, y, {1.0, 0.0, 0.0, 2.0});  // albedo 2 clamps to weight 1
    // Center pixel: unit normal with z below the 0.05 floor.
    Eigen::Vector3d low(1.6, 1.18, 0.06);
    f.set_from_raw4(1, 1, Eigen::Vector4d(1.0, low.x(), low.y(), low.z()));
    Eigen::Vector3d nu = low.normalized();
    REQUIRE(std::abs(nu.z()) < 0.05);

    GradientSystem sys = integrate::build_gradient_system(f);
    const int col = sys.column_of(1, 1);
    const int right = sys.column_of(2, 1);
    const int below = sys.column_of(1, 2);

    // Collect the rows that touch the low-normal pixel's column.
    Eigen::SparseMatrix<double, Eigen::RowMajor> rows = sys.m;
    int tangential_rows = 0;
    for (int rIdx = 0; rIdx < rows.outerSize(); ++rIdx) {
        std::map<int, double> coeffs;
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(rows, rIdx);
             it; ++it)
            coeffs[static_cast<int>(it.col())] = it.value();
        if (!coeffs.count(col) || coeffs.size() != 3) continue;
        if (!coeffs.count(right) || !coeffs.count(below)) continue;
        ++tangential_rows;
        // Weight 1: coefficients are nx - ny on the pixel, ny right, -nx below.
        REQUIRE(coeffs[col] == Catch::Approx(nu.x() - nu.y()).margin(1e-12));
        REQUIRE(coeffs[right] == Catch::Approx(nu.y()).margin(1e-12));
        REQUIRE(coeffs[below] == Catch::Approx(-nu.x()).margin(1e-12));
        REQUIRE(sys.v(rIdx) == 0.0);
    }
    REQUIRE(tangential_rows == 1);
}

TEST_CASE("a fully invalid field cannot be integrated", "[integrate]") {
    NormalField empty(8, 8);
    REQUIRE_THROWS_AS(integrate::build_gradient_system(empty), NoValidPixels);
}

TEST_CASE("boundary rows pin a flat surface to the reference depth",
          "[integrate]") {
    NormalField flat(12, 9);
    for (int y = 0; y < 9; ++y)
        for (int x = 0; x < 12; ++x) flat.set_from_raw4(x, y, {1.0, 0.0, 0.0, 1.0});

    BoundaryConstraint bc(12, 9);
    for (int y = 0; y < 9; ++y) {
        bc.z0(0, y) = 5.0;
        bc.weight(0, y) = 1.0;
    }
    DepthMap depth = integrate::integrate_normals(flat, &bc);
    for (int y = 0; y < 9; ++y)
        for (int x = 0; x < 12; ++x)
            REQUIRE(depth.depth(x, y) == Catch::Approx(5.0).margin(1e-8));
}

TEST_CASE("stronger boundary weights pull harder against conflicts",
          "[integrate]") {
    NormalField flat(15, 5);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 15; ++x) flat.set_from_raw4(x, y, {1.0, 0.0, 0.0, 1.0});

    BoundaryConstraint bc(15, 5);
    bc.z0(0, 2) = 0.0;
    bc.weight(0, 2) = 1.0;   // firm anchor at depth 0
    bc.z0(14, 2) = 10.0;
    bc.weight(14, 2) = 0.01; // faint pull toward depth 10

    DepthMap depth = integrate::integrate_normals(flat, &bc);
    REQUIRE(std::abs(depth.depth(0, 2)) < 0.5);
    REQUIRE(std::abs(depth.depth(14, 2) - 10.0) > 5.0);

    // With matching weights the conflict splits symmetrically instead.
    bc.weight(14, 2) = 1.0;
    DepthMap even = integrate::integrate_normals(flat, &bc);
    REQUIRE(even.depth(7, 2) == Catch::Approx(5.0).margin(0.5));
}

TEST_CASE("adding a constant never changes the gradient residual",
          "[integrate]") {
    auto z = [](int x, int y) { return 0.5 * x - 0.25 * y + std::sin(0.3 * x * y); };
    NormalField f = field_from_depth_function(10, 8, z);
    GradientSystem sys = integrate::build_gradient_system(f);
    DepthMap depth = integrate::integrate_normals(f);

    double base = integrate::stitch_objective(sys, nullptr, depth);
    DepthMap shifted = depth;
    for (auto& v : shifted.depth) v += 3.7;
    double moved = integrate::stitch_objective(sys, nullptr, shifted);
    REQUIRE(moved == Catch::Approx(base).margin(1e-9));
}

TEST_CASE("the stitched solution is a local optimum of its objective",
          "[integrate]") {
    auto z = [](int x, int y) { return 0.2 * x * x - 0.1 * y * x; };
    NormalField f = field_from_depth_function(9, 7, z);
    GradientSystem sys = integrate::build_gradient_system(f);

    BoundaryConstraint bc(9, 7);
    bc.z0(4, 3) = 2.0;
    bc.weight(4, 3) = 0.7;
    bc.z0(8, 6) = -1.0;
    bc.weight(8, 6) = 0.3;

    DepthMap depth = integrate::integrate_system(sys, &bc);
    double best = integrate::stitch_objective(sys, &bc, depth);

    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    std::uniform_int_distribution<int> px(0, 8), py(0, 6);
    for (int trial = 0; trial < 8; ++trial) {
        DepthMap nudged = depth;
        nudged.depth(px(rng), py(rng)) += u(rng);
        REQUIRE(integrate::stitch_objective(sys, &bc, nudged) >= best - 1e-12);
    }
}

TEST_CASE("an impossible tolerance reports divergence instead of lying",
          "[integrate]") {
    NormalField flat(10, 10);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) flat.set_from_raw4(x, y, {1.0, 0.1, 0.1, 1.0});
    IntegrateOptions opts;
    opts.tolerance = 1e-300;
    REQUIRE_THROWS_AS(integrate::integrate_normals(flat, nullptr, opts),
                      SolverDivergence);
}

TEST_CASE("disconnected islands are each gauged to mean zero", "[integrate]") {
    NormalField f(9, 6);
    auto zleft = [](int x, int y) { return 0.4 * x + 0.1 * y; };
    auto zright = [](int x, int y) { return -0.3 * x + 100.0; };
    for (int y = 0; y < 6; ++y) {
        for (int x = 0; x < 4; ++x) {
            double gx = zleft(x + 1, y) - zleft(x, y);
            double gy = zleft(x, y + 1) - zleft(x, y);
            Eigen::Vector3d n = Eigen::Vector3d(-gx, -gy, 1.0).normalized();
            f.set_from_raw4(x, y, Eigen::Vector4d(1.0, n.x(), n.y(), n.z()));
        }
        for (int x = 5; x < 9; ++x) {
            double gx = zright(x + 1, y) - zright(x, y);
            Eigen::Vector3d n = Eigen::Vector3d(-gx, 0.0, 1.0).normalized();
            f.set_from_raw4(x, y, Eigen::Vector4d(1.0, n.x(), n.y(), n.z()));
        }
    }

    DepthMap depth = integrate::integrate_normals(f);
    double left_mean = 0.0, right_mean = 0.0;
    for (int y = 0; y < 6; ++y) {
        for (int x = 0; x < 4; ++x) left_mean += depth.depth(x, y);
        for (int x = 5; x < 9; ++x) right_mean += depth.depth(x, y);
    }
    REQUIRE(std::abs(left_mean / 24.0) < 1e-9);
    REQUIRE(std::abs(right_mean / 24.0) < 1e-9);
    // Shape is still right within each island.
    for (int y = 0; y < 6; ++y)
        for (int x = 5; x < 8; ++x)
            REQUIRE(depth.depth(x + 1, y) - depth.depth(x, y) ==
                    Catch::Approx(-0.3).margin(1e-8));

    // Anchoring one island leaves the other's gauge untouched.
    BoundaryConstraint bc(9, 6);
    bc.z0(1, 1) = 50.0;
    bc.weight(1, 1) = 1.0;
    DepthMap pinned = integrate::integrate_normals(f, &bc);
    REQUIRE(pinned.depth(1, 1) == Catch::Approx(50.0).margin(1e-6));
    double right_mean2 = 0.0;
    for (int y = 0; y < 6; ++y)
        for (int x = 5; x < 9; ++x) right_mean2 += pinned.depth(x, y);
    REQUIRE(std::abs(right_mean2 / 24.0) < 1e-9);
}

TEST_CASE("blend weights match a brute-force distance transform", "[blend]") {
    SECTION("half plane") {
        Mask region(20, 10, 0);
        for (int y = 0; y < 10; ++y)
            for (int x = 5; x < 20; ++x) region(x, y) = 255;
        Grid<double> w = integrate::make_blend_mask(region, 10.0);
        Grid<double> oracle = brute_force_blend(region, 10.0);
        for (int y = 0; y < 10; ++y)
            for (int x = 0; x < 20; ++x)
                REQUIRE(w(x, y) == Catch::Approx(oracle(x, y)).margin(1e-9));
    }

    SECTION("random blobs") {
        std::mt19937_64 rng(88);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        Mask region(18, 13, 0);
        for (auto& v : region.data()) v = u(rng) < 0.6 ? 255 : 0;
        if (count_set(region) == 0) region(9, 6) = 255;
        Grid<double> w = integrate::make_blend_mask(region, 4.0);
        Grid<double> oracle = brute_force_blend(region, 4.0);
        for (int y = 0; y < 13; ++y)
            for (int x = 0; x < 18; ++x)
                REQUIRE(w(x, y) == Catch::Approx(oracle(x, y)).margin(1e-9));
    }

    SECTION("full frame still fades at the image border") {
        Mask region(20, 10, 255);
        Grid<double> w = integrate::make_blend_mask(region, 3.0);
        Grid<double> oracle = brute_force_blend(region, 3.0);
        for (int y = 0; y < 10; ++y)
            for (int x = 0; x < 20; ++x)
                REQUIRE(w(x, y) == Catch::Approx(oracle(x, y)).margin(1e-9));
        REQUIRE(w(0, 0) == Catch::Approx(1.0 / 3.0));
        REQUIRE(w(10, 5) == 1.0);
    }
}

TEST_CASE("blend weights live in [0,1] and shrink as the band widens",
          "[blend]") {
    Mask region(16, 16, 0);
    for (int y = 2; y < 14; ++y)
        for (int x = 3; x < 13; ++x) region(x, y) = 255;

    Grid<double> zero = integrate::make_blend_mask(region, 0.0);
    Grid<double> narrow = integrate::make_blend_mask(region, 2.0);
    Grid<double> wide = integrate::make_blend_mask(region, 8.0);

    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            if (!region(x, y)) {
                REQUIRE(zero(x, y) == 0.0);
                REQUIRE(narrow(x, y) == 0.0);
                REQUIRE(wide(x, y) == 0.0);
                continue;
            }
            REQUIRE(zero(x, y) == 1.0);  // zero band is the plain indicator
            REQUIRE(narrow(x, y) > 0.0);
            REQUIRE(narrow(x, y) <= 1.0);
            REQUIRE(wide(x, y) <= narrow(x, y));
        }
    // Deep interior saturates once the band is fully inside.
    REQUIRE(narrow(8, 8) == 1.0);
}

TEST_CASE("an empty region has no blend weights to offer", "[blend]") {
    Mask region(8, 8, 0);
    REQUIRE_THROWS_AS(integrate::make_blend_mask(region, 5.0), EmptyRegion);
}

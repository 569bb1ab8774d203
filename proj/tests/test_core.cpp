#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "headgrow/geometry.hpp"
#include "headgrow/grid.hpp"
#include "headgrow/image_io.hpp"
#include "headgrow/manifest.hpp"
#include "headgrow/mesh_io.hpp"
#include "headgrow/parallel.hpp"
#include "headgrow/types.hpp"

namespace fs = std::filesystem;
using namespace headgrow;

namespace {

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("grid stores and retrieves by column-row index", "[grid]") {
    Grid<int> g(4, 3, 7);
    REQUIRE(g.width() == 4);
    REQUIRE(g.height() == 3);
    REQUIRE(g.size() == 12);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 4; ++x) REQUIRE(g(x, y) == 7);

    g(2, 1) = 42;
    REQUIRE(g(2, 1) == 42);
    // Row-major layout: linear index y * width + x.
    REQUIRE(g[1 * 4 + 2] == 42);

    g.fill(0);
    REQUIRE(g(2, 1) == 0);

    REQUIRE(g.in_bounds(0, 0));
    REQUIRE(g.in_bounds(3, 2));
    REQUIRE_FALSE(g.in_bounds(4, 0));
    REQUIRE_FALSE(g.in_bounds(0, 3));
    REQUIRE_FALSE(g.in_bounds(-1, 0));

    Grid<double> same(4, 3), other(3, 4);
    REQUIRE(g.same_size(same));
    REQUIRE_FALSE(g.same_size(other));
}

TEST_CASE("mask helpers count and intersect", "[grid]") {
    Mask a(3, 2, 0), b(3, 2, 0);
    a(0, 0) = 255;
    a(1, 1) = 1;  // any nonzero counts
    b(1, 1) = 255;
    b(2, 0) = 255;
    REQUIRE(count_set(a) == 2);
    Mask both = mask_and(a, b);
    REQUIRE(count_set(both) == 1);
    REQUIRE(both(1, 1) == 255);
    REQUIRE(both(0, 0) == 0);
}

TEST_CASE("parallel_for visits every index exactly once for any worker count",
          "[parallel]") {
    const int n = 1003;
    for (int workers : {1, 2, 7, 64}) {
        std::vector<std::atomic<int>> visits(n);
        for (auto& v : visits) v.store(0);
        parallel_for(n, [&](int i) { visits[i].fetch_add(1); }, workers);
        for (int i = 0; i < n; ++i) REQUIRE(visits[i].load() == 1);
    }
}

TEST_CASE("parallel_for produces identical per-slot results across worker counts",
          "[parallel]") {
    const int n = 500;
    auto compute = [](int i) { return std::sin(0.01 * i) * i; };
    std::vector<double> ref(n);
    parallel_for(n, [&](int i) { ref[i] = compute(i); }, 1);
    for (int workers : {2, 3, 7}) {
        std::vector<double> out(n, 0.0);
        parallel_for(n, [&](int i) { out[i] = compute(i); }, workers);
        REQUIRE(out == ref);
    }
}

TEST_CASE("worker resolution prefers explicit request over environment",
          "[parallel]") {
    REQUIRE(resolve_workers(5) == 5);

    ::setenv("HEADGROW_THREADS", "3", 1);
    REQUIRE(resolve_workers(0) == 3);
    REQUIRE(resolve_workers(9) == 9);  // explicit still wins

    ::setenv("HEADGROW_THREADS", "not-a-number", 1);
    REQUIRE(resolve_workers(0) >= 1);  // falls through to hardware

    ::unsetenv("HEADGROW_THREADS");
    REQUIRE(resolve_workers(0) >= 1);
}

TEST_CASE("pgm writer rounds to nearest and clamps to the byte range", "[io]") {
    fs::path dir = fresh_dir("hg_core_pgm");
    ImageGrid img(4, 1, 0.0f);
    img(0, 0) = 3.4f;
    img(1, 0) = 3.6f;
    img(2, 0) = -2.0f;
    img(3, 0) = 300.0f;
    write_pgm(dir / "a.pgm", img);
    ImageGrid back = read_pgm(dir / "a.pgm");
    REQUIRE(back.width() == 4);
    REQUIRE(back.height() == 1);
    REQUIRE(back(0, 0) == 3.0f);
    REQUIRE(back(1, 0) == 4.0f);
    REQUIRE(back(2, 0) == 0.0f);
    REQUIRE(back(3, 0) == 255.0f);
    fs::remove_all(dir);
}

TEST_CASE("integer-valued images survive a pgm round trip exactly", "[io]") {
    fs::path dir = fresh_dir("hg_core_pgm_rt");
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> byte(0, 255);
    ImageGrid img(13, 9);
    for (auto& v : img) v = static_cast<float>(byte(rng));
    write_pgm(dir / "rt.pgm", img);
    ImageGrid back = read_pgm(dir / "rt.pgm");
    REQUIRE(back.data() == img.data());
    fs::remove_all(dir);
}

TEST_CASE("mask pgm round trip thresholds at half intensity", "[io]") {
    fs::path dir = fresh_dir("hg_core_mask");
    Mask m(3, 2, 0);
    m(0, 0) = 255;
    m(2, 1) = 255;
    write_mask_pgm(dir / "m.pgm", m);
    Mask back = read_mask_pgm(dir / "m.pgm");
    REQUIRE(back.data() == m.data());

    // Gray values below 128 read as unset, at or above as set.
    ImageGrid gray(2, 1);
    gray(0, 0) = 127.0f;
    gray(1, 0) = 128.0f;
    write_pgm(dir / "g.pgm", gray);
    Mask thresh = read_mask_pgm(dir / "g.pgm");
    REQUIRE(thresh(0, 0) == 0);
    REQUIRE(thresh(1, 0) != 0);
    fs::remove_all(dir);
}

TEST_CASE("float image files round trip bit-exactly", "[io]") {
    fs::path dir = fresh_dir("hg_core_float");
    FloatImage img;
    img.width = 5;
    img.height = 4;
    img.channels = 3;
    img.data.resize(5 * 4 * 3);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<float> u(-10.0f, 10.0f);
    for (auto& v : img.data) v = u(rng);
    img.at(1, 2, 0) = std::numeric_limits<float>::quiet_NaN();

    write_float_image(dir / "f.hgfi", img);
    FloatImage back = read_float_image(dir / "f.hgfi");
    REQUIRE(back.width == img.width);
    REQUIRE(back.height == img.height);
    REQUIRE(back.channels == img.channels);
    REQUIRE(back.data.size() == img.data.size());
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        if (std::isnan(img.data[i]))
            REQUIRE(std::isnan(back.data[i]));
        else
            REQUIRE(back.data[i] == img.data[i]);
    }
    fs::remove_all(dir);
}

TEST_CASE("float image reader rejects missing and corrupt files", "[io]") {
    fs::path dir = fresh_dir("hg_core_float_err");
    REQUIRE_THROWS_AS(read_float_image(dir / "absent.hgfi"), MissingImage);

    {
        std::ofstream out(dir / "bad.hgfi", std::ios::binary);
        out << "JUNKxxxxxxxxxxxxxxxx";
    }
    REQUIRE_THROWS_AS(read_float_image(dir / "bad.hgfi"), IoError);
    fs::remove_all(dir);
}

TEST_CASE("depth maps round trip through one-channel float images", "[io]") {
    DepthMap map(4, 3);
    map.depth(1, 1) = 2.5;
    map.valid(1, 1) = 255;
    map.depth(3, 2) = -7.25;
    map.valid(3, 2) = 255;

    FloatImage img = depth_to_image(map);
    REQUIRE(img.channels == 1);
    REQUIRE(std::isnan(img.at(0, 0, 0)));  // invalid pixels encode as NaN
    DepthMap back = depth_from_image(img);
    REQUIRE(back.valid.data() == map.valid.data());
    REQUIRE(back.depth(1, 1) == 2.5);
    REQUIRE(back.depth(3, 2) == -7.25);
    REQUIRE(back.valid(0, 0) == 0);
}

TEST_CASE("normal fields round trip through three-channel float images", "[io]") {
    NormalField field(3, 3);
    field.set_from_raw4(0, 0, {1.0, 0.0, 0.0, 1.0});
    field.set_from_raw4(2, 1, {1.0, 0.6, 0.0, 0.8});

    FloatImage img = normals_to_image(field);
    NormalField back = normals_from_image(img);
    REQUIRE(back.valid(0, 0) != 0);
    REQUIRE(back.valid(2, 1) != 0);
    REQUIRE(back.valid(1, 1) == 0);
    REQUIRE(back.normal(2, 1).x() == Catch::Approx(0.6).margin(1e-6));
    REQUIRE(back.normal(2, 1).z() == Catch::Approx(0.8).margin(1e-6));
    REQUIRE(back.normal(0, 0).z() == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("normal fields derive unit normals and albedo from raw vectors",
          "[types]") {
    NormalField f(2, 1);
    f.set_from_raw4(0, 0, {0.3, 3.0, 0.0, 4.0});
    REQUIRE(f.valid(0, 0) != 0);
    REQUIRE(f.albedo(0, 0) == Catch::Approx(5.0));
    REQUIRE(f.normal(0, 0).norm() == Catch::Approx(1.0));
    REQUIRE(f.normal(0, 0).x() == Catch::Approx(0.6));

    // A vanishing orientation part invalidates the pixel.
    f.set_from_raw4(1, 0, {1.0, 0.0, 0.0, 0.0});
    REQUIRE(f.valid(1, 0) == 0);
    REQUIRE(f.valid_count() == 1);
}

TEST_CASE("similarity fit recovers a known transform", "[geometry]") {
    Similarity2D truth;
    truth.scale = 1.7;
    truth.rotation = 0.42;
    truth.translation = {3.0, -2.0};

    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    std::vector<Eigen::Vector2d> src, dst;
    for (int i = 0; i < 9; ++i) {
        Eigen::Vector2d p(u(rng), u(rng));
        src.push_back(p);
        dst.push_back(truth.apply(p));
    }

    Similarity2D fit = fit_similarity(src, dst);
    REQUIRE(fit.scale == Catch::Approx(truth.scale).epsilon(1e-12));
    REQUIRE(fit.rotation == Catch::Approx(truth.rotation).epsilon(1e-12));
    REQUIRE(fit.translation.x() == Catch::Approx(truth.translation.x()).margin(1e-10));
    REQUIRE(fit.translation.y() == Catch::Approx(truth.translation.y()).margin(1e-10));

    // inverse() undoes apply(), and matrix() agrees with apply().
    for (const auto& p : src) {
        Eigen::Vector2d q = fit.apply(p);
        Eigen::Vector2d back = fit.inverse().apply(q);
        REQUIRE((back - p).norm() < 1e-10);
        Eigen::Vector3d hom = fit.matrix() * Eigen::Vector3d(p.x(), p.y(), 1.0);
        REQUIRE((hom.head<2>() - q).norm() < 1e-10);
    }
}

TEST_CASE("similarity fit rejects degenerate source layouts", "[geometry]") {
    std::vector<Eigen::Vector2d> one = {{0.0, 0.0}};
    std::vector<Eigen::Vector2d> dst1 = {{1.0, 1.0}};
    REQUIRE_THROWS_AS(fit_similarity(one, dst1), DegenerateFiducials);

    std::vector<Eigen::Vector2d> coincident = {{2.0, 2.0}, {2.0, 2.0}, {2.0, 2.0}};
    std::vector<Eigen::Vector2d> dst3 = {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
    REQUIRE_THROWS_AS(fit_similarity(coincident, dst3), DegenerateFiducials);

    std::vector<Eigen::Vector2d> collinear = {{0.0, 0.0}, {1.0, 1.0}, {2.0, 2.0}};
    REQUIRE_THROWS_AS(fit_similarity(collinear, dst3), DegenerateFiducials);
}

TEST_CASE("camera projection flips y and scales depth", "[geometry]") {
    Camera cam = standard_camera(100, 80);
    Eigen::Vector3d img = cam.project({0.0, 0.0, 5.0});
    REQUIRE(img.x() == Catch::Approx(50.0));
    REQUIRE(img.y() == Catch::Approx(40.0));
    REQUIRE(img.z() == Catch::Approx(5.0));

    // World +y plots upward, i.e. toward smaller row numbers.
    Eigen::Vector3d up = cam.project({0.0, 10.0, 0.0});
    REQUIRE(up.y() == Catch::Approx(30.0));

    Camera scaled;
    scaled.scale = 2.5;
    scaled.center = {12.0, 7.0};
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-20.0, 20.0);
    for (int i = 0; i < 20; ++i) {
        Eigen::Vector3d p(u(rng), u(rng), u(rng));
        Eigen::Vector3d proj = scaled.project(p);
        Eigen::Vector3d back = scaled.backproject(proj.x(), proj.y(), proj.z());
        REQUIRE((back - p).norm() < 1e-12);
    }
}

TEST_CASE("azimuth rotation turns the optical axis toward positive x",
          "[geometry]") {
    Eigen::Vector3d turned = azimuth_rotation(90.0) * Eigen::Vector3d::UnitZ();
    REQUIRE(turned.x() == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(turned.y() == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(turned.z() == Catch::Approx(0.0).margin(1e-12));

    // The vertical axis is fixed.
    Eigen::Vector3d vert = azimuth_rotation(-60.0) * Eigen::Vector3d::UnitY();
    REQUIRE((vert - Eigen::Vector3d::UnitY()).norm() < 1e-12);
}

namespace {

HeadMesh sample_mesh() {
    HeadMesh mesh;
    mesh.vertices = {{0.0, 0.0, 0.0},
                     {1.0, 0.125, -0.25},
                     {0.5, 1.0, 0.75},
                     {-0.333333333, 0.25, 1.0}};
    mesh.faces = {{0, 1, 2}, {0, 2, 3}};
    mesh.provenance = {0, 30, 60, -30};
    mesh.fiducial_vertices = {};
    return mesh;
}

}  // namespace

TEST_CASE("ply files preserve geometry, faces, and per-vertex cluster ids",
          "[io][mesh]") {
    fs::path dir = fresh_dir("hg_core_ply");
    HeadMesh mesh = sample_mesh();
    save_ply(dir / "m.ply", mesh);
    HeadMesh back = load_ply(dir / "m.ply");

    REQUIRE(back.vertex_count() == mesh.vertex_count());
    REQUIRE(back.faces == mesh.faces);
    REQUIRE(back.provenance == mesh.provenance);
    for (int i = 0; i < mesh.vertex_count(); ++i)
        REQUIRE((back.vertices[i] - mesh.vertices[i]).norm() < 1e-7);

    // The writer tags each vertex with its source cluster.
    std::ifstream in(dir / "m.ply");
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    REQUIRE(text.find("property int cluster") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("obj files round trip geometry; cluster ids default to zero",
          "[io][mesh]") {
    fs::path dir = fresh_dir("hg_core_obj");
    HeadMesh mesh = sample_mesh();
    save_obj(dir / "m.obj", mesh);
    HeadMesh back = load_obj(dir / "m.obj");

    REQUIRE(back.vertex_count() == mesh.vertex_count());
    REQUIRE(back.faces == mesh.faces);
    REQUIRE(back.provenance == std::vector<int>(mesh.vertices.size(), 0));
    for (int i = 0; i < mesh.vertex_count(); ++i)
        REQUIRE((back.vertices[i] - mesh.vertices[i]).norm() < 1e-7);

    // load_mesh dispatches on the extension.
    HeadMesh via_dispatch = load_mesh(dir / "m.obj");
    REQUIRE(via_dispatch.vertex_count() == mesh.vertex_count());
    fs::remove_all(dir);
}

TEST_CASE("quad faces in obj files triangulate as a fan", "[io][mesh]") {
    fs::path dir = fresh_dir("hg_core_obj_quad");
    {
        std::ofstream out(dir / "q.obj");
        out << "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n";
        out << "f 1 2 3 4\n";
    }
    HeadMesh mesh = load_obj(dir / "q.obj");
    REQUIRE(mesh.vertex_count() == 4);
    REQUIRE(mesh.face_count() == 2);
    REQUIRE(mesh.faces[0] == std::array<int, 3>{0, 1, 2});
    REQUIRE(mesh.faces[1] == std::array<int, 3>{0, 2, 3});
    fs::remove_all(dir);
}

TEST_CASE("manifests round trip photos, template, and frozen fiducial layouts",
          "[io][manifest]") {
    fs::path dir = fresh_dir("hg_core_manifest");

    Manifest m;
    ManifestPhoto p;
    p.file = "images/p0.pgm";
    p.azimuth = 30.0;
    p.mask = "masks/p0.pgm";
    p.gt_normals = "gt/n0.hgfi";
    p.gt_depth = "gt/d0.hgfi";
    p.id = "p0";
    for (int k = 0; k < kFiducialCount; ++k)
        p.fiducials[k] = {10.0 + k, 20.0 + 0.5 * k};
    m.photos.push_back(p);

    ManifestPhoto bare;
    bare.file = "images/p1.pgm";
    bare.azimuth = -60.0;
    for (int k = 0; k < kFiducialCount; ++k) bare.fiducials[k] = {1.0 * k, 2.0 * k};
    m.photos.push_back(bare);

    m.template_normals_file = "template.hgfi";
    Fiducials ref{};
    for (int k = 0; k < kFiducialCount; ++k) ref[k] = {5.0 * k, 3.0 * k};
    m.reference_fiducials[0] = ref;

    write_manifest(dir / "manifest.json", m);
    Manifest back = read_manifest(dir / "manifest.json");

    REQUIRE(back.photos.size() == 2);
    REQUIRE(back.photos[0].file == p.file);
    REQUIRE(back.photos[0].azimuth == p.azimuth);
    REQUIRE(back.photos[0].mask == p.mask);
    REQUIRE(back.photos[0].gt_normals == p.gt_normals);
    REQUIRE(back.photos[0].gt_depth == p.gt_depth);
    REQUIRE(back.photos[0].id == p.id);
    for (int k = 0; k < kFiducialCount; ++k)
        REQUIRE((back.photos[0].fiducials[k] - p.fiducials[k]).norm() < 1e-12);

    REQUIRE(back.photos[1].mask.empty());
    REQUIRE(back.photos[1].gt_normals.empty());
    REQUIRE(back.photos[1].id == "p1");  // missing ids fall back to the file stem

    REQUIRE(back.template_normals_file == "template.hgfi");
    REQUIRE(back.reference_fiducials.count(0) == 1);
    for (int k = 0; k < kFiducialCount; ++k)
        REQUIRE((back.reference_fiducials[0][k] - ref[k]).norm() < 1e-12);
    fs::remove_all(dir);
}

TEST_CASE("manifest reader rejects malformed documents", "[io][manifest]") {
    fs::path dir = fresh_dir("hg_core_manifest_err");
    {
        std::ofstream out(dir / "bad.json");
        out << "{ not json";
    }
    REQUIRE_THROWS_AS(read_manifest(dir / "bad.json"), ManifestParseError);
    REQUIRE_THROWS_AS(read_manifest(dir / "absent.json"), ManifestParseError);

    {
        std::ofstream out(dir / "shortfids.json");
        out << R"({"photos": [{"file": "a.pgm", "azimuth": 0.0,)"
            << R"( "fiducials": [[0,0],[1,1]]}]})";
    }
    REQUIRE_THROWS_AS(read_manifest(dir / "shortfids.json"), ManifestParseError);
    fs::remove_all(dir);
}

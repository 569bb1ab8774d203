#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "headgrow/errors.hpp"
#include "headgrow/manifest.hpp"
#include "headgrow/mesh_io.hpp"
#include "headgrow/parallel.hpp"
#include "headgrow/render.hpp"
#include "headgrow/types.hpp"

namespace headgrow::synth {

struct Light {
    Eigen::Vector3d direction = Eigen::Vector3d::UnitZ();  // unit, camera frame
    double intensity = 204.0;  // direct term, 0..255 intensity units
    double ambient = 51.0;     // ambient term, 0..255 intensity units
};

struct SyntheticScene {
    HeadMesh mesh;                     // ground truth
    double albedo = 1.0;               // reflectance in [0, 1]
    std::vector<double> vertex_albedo; // optional per-vertex override
    std::vector<Light> lights;
    std::vector<double> poses;         // azimuth degrees, subset of the 7 bins
    int width = 128;
    int height = 128;
    std::array<int, kFiducialCount> fiducial_vertices{};
    std::optional<HeadMesh> template_mesh;  // GBR reference; mesh itself if absent
};

/// Uniformly sampled unit directions on the front-facing cap z > min_z.
inline std::vector<Light> sample_lights(int count, std::uint64_t seed,
                                        double ambient = 51.0, double intensity = 204.0,
                                        double min_z = 0.2) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uz(min_z, 1.0);
    std::uniform_real_distribution<double> uphi(0.0, 2.0 * std::numbers::pi);
    std::vector<Light> lights;
    lights.reserve(count);
    for (int i = 0; i < count; ++i) {
        double z = uz(rng);
        double phi = uphi(rng);
        double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        Light light;
        light.direction = {r * std::cos(phi), r * std::sin(phi), z};
        light.intensity = intensity;
        light.ambient = ambient;
        lights.push_back(light);
    }
    return lights;
}

struct RenderedView {
    Photo photo;
    NormalField gt_normals;
    DepthMap gt_depth;
};

namespace detail {

inline void check_scene(const SyntheticScene& scene) {
    for (const auto& light : scene.lights)
        if (std::abs(light.direction.norm() - 1.0) > 1e-9)
            throw IoError("light direction must be unit length");
    for (double pose : scene.poses) {
        bool canonical = false;
        for (int bin : kClusterBins) canonical |= (std::abs(pose - bin) < 1e-9);
        if (!canonical) throw IoError("pose must be one of the 7 canonical azimuths");
    }
}

inline Fiducials project_fiducials(const SyntheticScene& scene, const FittedView& view,
                                   const Eigen::Affine3d& camera_from_world) {
    Fiducials fids;
    for (int i = 0; i < kFiducialCount; ++i) {
        int v = scene.fiducial_vertices[i];
        if (v < 0 || v >= scene.mesh.vertex_count())
            throw IoError("fiducial vertex index out of range");
        Eigen::Vector3d p = view.camera.project(camera_from_world * scene.mesh.vertices[v]);
        fids[i] = {p.x(), p.y()};
    }
    return fids;
}

inline double pixel_albedo(const SyntheticScene& scene, const Raster& raster, int x, int y) {
    if (scene.vertex_albedo.empty()) return scene.albedo;
    int v = raster.vertex_id(x, y);
    return v >= 0 ? scene.vertex_albedo[v] : scene.albedo;
}

inline ImageGrid shade(const SyntheticScene& scene, const Raster& raster, const Light& light) {
    ImageGrid img(raster.width(), raster.height(), 0.0f);
    for (int y = 0; y < raster.height(); ++y)
        for (int x = 0; x < raster.width(); ++x) {
            if (!raster.coverage(x, y)) continue;
            double ndotl = std::max(0.0, raster.normal(x, y).dot(light.direction));
            double value = pixel_albedo(scene, raster, x, y) *
                           (light.ambient + light.intensity * ndotl);
            img(x, y) = static_cast<float>(std::clamp(value, 0.0, 255.0));
        }
    return img;
}

}  // namespace detail

/// Renders one (pose, light) pair with ground truth. The camera is fitted
/// once from the mesh bounding sphere so all poses share it.
inline RenderedView render_lambertian(const SyntheticScene& scene, double pose_deg,
                                      int light_index) {
    detail::check_scene(scene);
    if (light_index < 0 || light_index >= static_cast<int>(scene.lights.size()))
        throw IoError("light index out of range");
    bool canonical = false;
    for (int bin : kClusterBins) canonical |= (std::abs(pose_deg - bin) < 1e-9);
    if (!canonical) throw IoError("pose must be one of the 7 canonical azimuths");
    FittedView view = fit_camera(scene.mesh, scene.width, scene.height);
    Eigen::Affine3d camera_from_world = view_transform(view, pose_deg);

    RasterOptions opts;
    opts.normals = true;
    opts.vertex_ids = !scene.vertex_albedo.empty();
    Raster raster = rasterize(scene.mesh, camera_from_world, view.camera,
                              scene.width, scene.height, opts);

    RenderedView out;
    out.photo.pixels = detail::shade(scene, raster, scene.lights[light_index]);
    out.photo.mask = raster.coverage;
    out.photo.azimuth = pose_deg;
    out.photo.fiducials = detail::project_fiducials(scene, view, camera_from_world);
    out.gt_normals = raster_to_normal_field(raster);
    out.gt_depth = raster_to_depth_map(raster, camera_from_world.inverse());
    return out;
}

/// Writes the full (pose x light) dataset plus ground truth and an
/// ingest-compatible manifest. Returns the manifest path. Ground-truth
/// normals/depth depend only on the pose and are shared across lights.
inline std::filesystem::path make_dataset(const SyntheticScene& scene,
                                          const std::filesystem::path& out_dir) {
    detail::check_scene(scene);
    if (scene.lights.empty() || scene.poses.empty())
        throw IoError("scene needs at least one light and one pose");
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "gt", ec);
    if (ec) throw IoError("cannot create " + out_dir.string());

    FittedView view = fit_camera(scene.mesh, scene.width, scene.height);

    Manifest manifest;
    char name[128];
    for (double pose : scene.poses) {
        Eigen::Affine3d camera_from_world = view_transform(view, pose);
        RasterOptions opts;
        opts.normals = true;
        opts.vertex_ids = !scene.vertex_albedo.empty();
        Raster raster = rasterize(scene.mesh, camera_from_world, view.camera,
                                  scene.width, scene.height, opts);
        int pose_i = static_cast<int>(std::lround(pose));
        Fiducials fids = detail::project_fiducials(scene, view, camera_from_world);
        manifest.reference_fiducials[pose_i] = fids;

        std::snprintf(name, sizeof(name), "gt/pose_%d_normals.hgfi", pose_i);
        std::string gt_normals_file = name;
        write_float_image(out_dir / gt_normals_file,
                          normals_to_image(raster_to_normal_field(raster)));
        std::snprintf(name, sizeof(name), "gt/pose_%d_depth.hgfi", pose_i);
        std::string gt_depth_file = name;
        write_float_image(out_dir / gt_depth_file,
                          depth_to_image(raster_to_depth_map(raster, camera_from_world.inverse())));
        std::snprintf(name, sizeof(name), "mask_pose_%d.pgm", pose_i);
        std::string mask_file = name;
        write_mask_pgm(out_dir / mask_file, raster.coverage);

        // Shading is cheap relative to rasterization; photos of one pose
        // share the raster and are written in light order.
        std::vector<ImageGrid> shaded(scene.lights.size());
        parallel_for(static_cast<int>(scene.lights.size()), [&](int li) {
            shaded[li] = detail::shade(scene, raster, scene.lights[li]);
        });
        for (std::size_t li = 0; li < scene.lights.size(); ++li) {
            std::snprintf(name, sizeof(name), "pose_%d_light_%04zu.pgm", pose_i, li);
            write_pgm(out_dir / name, shaded[li]);
            ManifestPhoto entry;
            entry.file = name;
            entry.azimuth = pose;
            entry.fiducials = fids;
            entry.mask = mask_file;
            entry.gt_normals = gt_normals_file;
            entry.gt_depth = gt_depth_file;
            entry.id = std::filesystem::path(name).stem().string();
            manifest.photos.push_back(std::move(entry));
        }
    }

    // GBR reference: frontal normals of the template mesh (the scene mesh
    // when no separate template is supplied), rendered with its own fit.
    const HeadMesh& tmpl = scene.template_mesh ? *scene.template_mesh : scene.mesh;
    FittedView tmpl_view = fit_camera(tmpl, scene.width, scene.height);
    RasterOptions tmpl_opts;
    tmpl_opts.normals = true;
    Raster tmpl_raster = rasterize(tmpl, view_transform(tmpl_view, 0.0), tmpl_view.camera,
                                   scene.width, scene.height, tmpl_opts);
    write_float_image(out_dir / "template_normals.hgfi",
                      normals_to_image(raster_to_normal_field(tmpl_raster)));
    manifest.template_normals_file = "template_normals.hgfi";

    // Reference geometry for offline scoring.
    HeadMesh gt_mesh = scene.mesh;
    gt_mesh.fiducial_vertices.assign(scene.fiducial_vertices.begin(),
                                     scene.fiducial_vertices.end());
    save_ply(out_dir / "gt" / "mesh.ply", gt_mesh);
    {
        nlohmann::json info;
        info["fiducial_vertices"] = gt_mesh.fiducial_vertices;
        std::ofstream out(out_dir / "gt" / "info.json");
        if (!out) throw IoError("cannot write gt/info.json");
        out << info.dump(2) << "\n";
    }

    std::filesystem::path manifest_path = out_dir / "manifest.json";
    write_manifest(manifest_path, manifest);
    return manifest_path;
}

// ---------------------------------------------------------------------------
// Procedural head: an ellipsoid with nose, ear, chin and brow bumps. Used by
// the CLI when no mesh is supplied and by the test suites as ground truth.
// ---------------------------------------------------------------------------

namespace detail {

struct RadialBump {
    Eigen::Vector3d direction;  // unit
    double amplitude;
    double sigma;  // radians
};

inline double bump_factor(const Eigen::Vector3d& u, const std::vector<RadialBump>& bumps) {
    double f = 1.0;
    for (const auto& b : bumps) {
        double angle = std::acos(std::clamp(u.dot(b.direction), -1.0, 1.0));
        f += b.amplitude * std::exp(-angle * angle / (2.0 * b.sigma * b.sigma));
    }
    return f;
}

}  // namespace detail

/// `rings` controls tessellation (rings x 2*rings sphere grid). The returned
/// mesh is wound outward and carries the 7 fiducial vertices.
inline HeadMesh make_procedural_head(int rings = 48) {
    const int cols = 2 * rings;
    const Eigen::Vector3d radii(0.78, 1.0, 0.85);
    std::vector<detail::RadialBump> bumps = {
        {Eigen::Vector3d(0.0, -0.12, 1.0).normalized(), 0.22, 0.22},   // nose
        {Eigen::Vector3d(-1.0, 0.02, -0.05).normalized(), 0.12, 0.28}, // left ear
        {Eigen::Vector3d(1.0, 0.02, -0.05).normalized(), 0.12, 0.28},  // right ear
        {Eigen::Vector3d(0.0, -0.85, 0.55).normalized(), 0.10, 0.35},  // chin
        {Eigen::Vector3d(0.0, 0.45, 0.90).normalized(), 0.06, 0.40},   // brow
        {Eigen::Vector3d(0.0, 0.30, -1.0).normalized(), 0.08, 0.50},   // back of skull
    };

    HeadMesh mesh;
    auto place = [&](double theta, double phi) {
        Eigen::Vector3d u(std::sin(theta) * std::cos(phi), std::cos(theta),
                          std::sin(theta) * std::sin(phi));
        Eigen::Vector3d p = radii.cwiseProduct(u) * detail::bump_factor(u, bumps);
        mesh.vertices.push_back(p);
    };

    place(0.0, 0.0);  // top pole
    for (int i = 1; i < rings; ++i)
        for (int j = 0; j < cols; ++j)
            place(std::numbers::pi * i / rings, 2.0 * std::numbers::pi * j / cols);
    place(std::numbers::pi, 0.0);  // bottom pole

    auto ring_vertex = [&](int i, int j) { return 1 + (i - 1) * cols + (j % cols); };
    const int bottom = mesh.vertex_count() - 1;
    for (int j = 0; j < cols; ++j)
        mesh.faces.push_back({0, ring_vertex(1, j + 1), ring_vertex(1, j)});
    for (int i = 1; i + 1 < rings; ++i)
        for (int j = 0; j < cols; ++j) {
            int a = ring_vertex(i, j), b = ring_vertex(i, j + 1);
            int c = ring_vertex(i + 1, j), d = ring_vertex(i + 1, j + 1);
            mesh.faces.push_back({a, b, d});
            mesh.faces.push_back({a, d, c});
        }
    for (int j = 0; j < cols; ++j)
        mesh.faces.push_back({bottom, ring_vertex(rings - 1, j), ring_vertex(rings - 1, j + 1)});
    mesh.provenance.assign(mesh.vertices.size(), 0);

    // Landmark order: eye corners (outer/inner left, inner/outer right),
    // nose tip, mouth corners.
    const std::array<Eigen::Vector3d, kFiducialCount> landmark_dirs = {
        Eigen::Vector3d(-0.45, 0.26, 0.85), Eigen::Vector3d(-0.17, 0.26, 0.95),
        Eigen::Vector3d(0.17, 0.26, 0.95),  Eigen::Vector3d(0.45, 0.26, 0.85),
        Eigen::Vector3d(0.0, -0.12, 1.0),   Eigen::Vector3d(-0.30, -0.52, 0.80),
        Eigen::Vector3d(0.30, -0.52, 0.80)};
    mesh.fiducial_vertices.resize(kFiducialCount);
    for (int k = 0; k < kFiducialCount; ++k) {
        Eigen::Vector3d dir = landmark_dirs[k].normalized();
        double best = -2.0;
        int best_v = 0;
        for (int v = 0; v < mesh.vertex_count(); ++v) {
            double d = mesh.vertices[v].normalized().dot(dir);
            if (d > best) {
                best = d;
                best_v = v;
            }
        }
        mesh.fiducial_vertices[k] = best_v;
    }
    return mesh;
}

}  // namespace headgrow::synth

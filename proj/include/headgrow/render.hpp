#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "headgrow/errors.hpp"
#include "headgrow/geometry.hpp"
#include "headgrow/types.hpp"

namespace headgrow {

/// Area-weighted per-vertex normals. Assumes consistent outward winding.
inline std::vector<Eigen::Vector3d> vertex_normals(const HeadMesh& mesh) {
    std::vector<Eigen::Vector3d> normals(mesh.vertices.size(), Eigen::Vector3d::Zero());
    for (const auto& f : mesh.faces) {
        const Eigen::Vector3d& a = mesh.vertices[f[0]];
        const Eigen::Vector3d& b = mesh.vertices[f[1]];
        const Eigen::Vector3d& c = mesh.vertices[f[2]];
        Eigen::Vector3d fn = (b - a).cross(c - a);  // magnitude = 2 * area
        normals[f[0]] += fn;
        normals[f[1]] += fn;
        normals[f[2]] += fn;
    }
    for (auto& n : normals) {
        double len = n.norm();
        if (len > 1e-15) n /= len;
    }
    return normals;
}

// ---------------------------------------------------------------------------
// Orthographic z-buffer rasterizer. Depth is sampled at integer pixel
// coordinates; larger depth wins (nearer to the camera).
// ---------------------------------------------------------------------------

struct RasterOptions {
    bool normals = false;     // fill the interpolated camera-frame normal buffer
    bool vertex_ids = false;  // fill nearest-vertex indices
    bool allow_empty = false; // suppress the EmptyProjection check
};

struct Raster {
    Grid<double> depth;
    Mask coverage;
    Grid<Eigen::Vector3d> normal;  // camera frame (x right, y up, z toward viewer)
    Grid<int> vertex_id;

    int width() const { return depth.width(); }
    int height() const { return depth.height(); }
};

inline Raster rasterize(const HeadMesh& mesh, const Eigen::Affine3d& camera_from_world,
                        const Camera& camera, int width, int height,
                        const RasterOptions& opts = {}) {
    Raster out;
    out.depth = Grid<double>(width, height, -std::numeric_limits<double>::infinity());
    out.coverage = Mask(width, height, 0);
    if (opts.normals) out.normal = Grid<Eigen::Vector3d>(width, height, Eigen::Vector3d::Zero());
    if (opts.vertex_ids) out.vertex_id = Grid<int>(width, height, -1);

    const int nv = mesh.vertex_count();
    std::vector<Eigen::Vector3d> proj(nv);      // (u, v, depth)
    for (int i = 0; i < nv; ++i)
        proj[i] = camera.project(camera_from_world * mesh.vertices[i]);

    std::vector<Eigen::Vector3d> cam_normals;
    if (opts.normals) {
        cam_normals = vertex_normals(mesh);
        Eigen::Matrix3d rot = camera_from_world.rotation();
        for (auto& n : cam_normals) n = rot * n;
    }

    bool covered_any = false;
    for (const auto& f : mesh.faces) {
        const Eigen::Vector3d& a = proj[f[0]];
        const Eigen::Vector3d& b = proj[f[1]];
        const Eigen::Vector3d& c = proj[f[2]];
        double area = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
        if (std::abs(area) < 1e-12) continue;

        int x0 = std::max(0, static_cast<int>(std::ceil(std::min({a.x(), b.x(), c.x()}))));
        int x1 = std::min(width - 1, static_cast<int>(std::floor(std::max({a.x(), b.x(), c.x()}))));
        int y0 = std::max(0, static_cast<int>(std::ceil(std::min({a.y(), b.y(), c.y()}))));
        int y1 = std::min(height - 1, static_cast<int>(std::floor(std::max({a.y(), b.y(), c.y()}))));
        if (x0 > x1 || y0 > y1) continue;

        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                double w0 = (b.x() - x) * (c.y() - y) - (b.y() - y) * (c.x() - x);
                double w1 = (c.x() - x) * (a.y() - y) - (c.y() - y) * (a.x() - x);
                double w2 = (a.x() - x) * (b.y() - y) - (a.y() - y) * (b.x() - x);
                w0 /= area; w1 /= area; w2 /= area;
                if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
                double depth = w0 * a.z() + w1 * b.z() + w2 * c.z();
                if (depth <= out.depth(x, y)) continue;
                out.depth(x, y) = depth;
                out.coverage(x, y) = 255;
                covered_any = true;
                if (opts.normals) {
                    Eigen::Vector3d n = w0 * cam_normals[f[0]] + w1 * cam_normals[f[1]] +
                                        w2 * cam_normals[f[2]];
                    double len = n.norm();
                    if (len < 1e-12) {
                        // grazing interpolation; fall back to the face plane
                        n = (camera_from_world.rotation() *
                             (mesh.vertices[f[1]] - mesh.vertices[f[0]]))
                                .cross(camera_from_world.rotation() *
                                       (mesh.vertices[f[2]] - mesh.vertices[f[0]]));
                        len = n.norm();
                    }
                    out.normal(x, y) = len > 1e-15 ? Eigen::Vector3d(n / len) : Eigen::Vector3d::UnitZ();
                }
                if (opts.vertex_ids) {
                    int corner = 0;
                    if (w1 > w0 && w1 >= w2) corner = 1;
                    else if (w2 > w0 && w2 > w1) corner = 2;
                    out.vertex_id(x, y) = f[corner];
                }
            }
        }
    }
    for (auto& d : out.depth)
        if (!std::isfinite(d)) d = 0.0;
    if (!covered_any && !opts.allow_empty)
        throw EmptyProjection("no triangle covers any pixel");
    return out;
}

/// Camera-frame normal -> image frame (x = +col, y = +row, z toward camera).
inline Eigen::Vector3d to_image_frame(const Eigen::Vector3d& n_cam) {
    return {n_cam.x(), -n_cam.y(), n_cam.z()};
}

inline NormalField raster_to_normal_field(const Raster& raster) {
    Grid<Eigen::Vector3d> normals(raster.width(), raster.height(), Eigen::Vector3d::Zero());
    for (int y = 0; y < raster.height(); ++y)
        for (int x = 0; x < raster.width(); ++x)
            if (raster.coverage(x, y)) normals(x, y) = to_image_frame(raster.normal(x, y));
    return field_from_normals(normals, raster.coverage);
}

inline DepthMap raster_to_depth_map(const Raster& raster,
                                    const Eigen::Affine3d& world_from_camera) {
    DepthMap map(raster.width(), raster.height());
    map.depth = raster.depth;
    map.valid = raster.coverage;
    map.world_from_camera = world_from_camera;
    return map;
}

// ---------------------------------------------------------------------------
// View fitting: one camera shared by every azimuth pose of a scene, scaled so
// the mesh's bounding sphere (about the bounding-box center) fills the frame.
// ---------------------------------------------------------------------------

struct FittedView {
    Camera camera;
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
};

inline FittedView fit_camera(const HeadMesh& mesh, int width, int height, double fill = 0.9) {
    if (mesh.vertices.empty()) throw EmptyProjection("cannot fit camera to empty mesh");
    Eigen::Vector3d lo = mesh.vertices.front(), hi = mesh.vertices.front();
    for (const auto& v : mesh.vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    FittedView view;
    view.center = 0.5 * (lo + hi);
    double radius = 0.0;
    for (const auto& v : mesh.vertices) radius = std::max(radius, (v - view.center).norm());
    if (radius < 1e-12) throw EmptyProjection("mesh collapses to a point");
    view.camera.scale = fill * 0.5 * std::min(width, height) / radius;
    view.camera.center = {width / 2.0, height / 2.0};
    return view;
}

/// camera_from_world for a head-yaw pose: rotate about the vertical axis
/// through the fitted center.
inline Eigen::Affine3d view_transform(const FittedView& view, double azimuth_deg) {
    return azimuth_rotation(azimuth_deg) * Eigen::Translation3d(-view.center);
}

}  // namespace headgrow

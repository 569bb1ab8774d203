#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <map>
#include <utility>
#include <vector>

#include "headgrow/ambiguity.hpp"
#include "headgrow/errors.hpp"
#include "headgrow/geometry.hpp"
#include "headgrow/integrate.hpp"
#include "headgrow/photometric.hpp"
#include "headgrow/render.hpp"
#include "headgrow/types.hpp"

namespace headgrow::grow {

struct GrowOptions {
    photometric::NormalEstimationOptions normals;
    integrate::IntegrateOptions depth;
    double blend_band = 10.0;  // pixels
    // Optional gate on vertex reuse during merging, as a fraction of the
    // cluster depth range; <= 0 merges any grid-coincident surface point.
    double merge_depth_tolerance = 0.0;
    double edge_filter_factor = 5.0;  // times the median candidate edge
    // Rendered reference pixels whose normal faces away from the camera (or
    // tilts beyond this view-direction component) take no part in the
    // harmonic alignment fit; back-facing rim normals off a rasterized mesh
    // are meaningless as references.
    double reference_min_nz = 0.0;
    int workers = 0;
};

/// One cluster's finished products, all in its own image frame.
struct ClusterRecon {
    int cluster_id = 0;
    NormalField normals;
    DepthMap depth;
    Grid<double> blend;  // weight toward the already-built mesh (0 where free)
    Eigen::Affine3d camera_from_world = Eigen::Affine3d::Identity();
    Camera camera;
    bool pose_refined = false;
};

struct GrowState {
    HeadMesh mesh;
    std::map<int, ClusterRecon> recon;
    std::vector<int> completed;  // growing order, frontal first
};

inline int neighbor_toward_zero(int cluster_id) {
    if (cluster_id == 0) return 0;
    return cluster_id > 0 ? cluster_id - 30 : cluster_id + 30;
}

inline bool is_completed(const GrowState& state, int cluster_id) {
    return std::find(state.completed.begin(), state.completed.end(), cluster_id) !=
           state.completed.end();
}

/// Shared photometric front half: rank-4 lighting then gated per-pixel solves,
/// over the cluster's consensus coverage mask.
inline NormalField photometric_normals(const PhotoCluster& cluster, const GrowOptions& opts) {
    photometric::IntensityMatrix q =
        photometric::build_intensity_matrix(cluster, cluster.average_valid);
    photometric::FactorResult fact = photometric::factor_rank4(q);
    photometric::NormalEstimationOptions nopts = opts.normals;
    nopts.workers = opts.workers;
    return photometric::estimate_pixel_normals(cluster, fact.lighting, cluster.average_valid, nopts);
}

namespace detail {

struct Lift {
    HeadMesh mesh;
    Grid<int> vertex_at;  // pixel -> vertex index, -1 where invalid
};

inline double median_edge_length(const std::vector<Eigen::Vector3d>& verts,
                                 const std::vector<std::array<int, 3>>& faces) {
    std::vector<double> lengths;
    lengths.reserve(faces.size() * 3);
    for (const auto& f : faces)
        for (int e = 0; e < 3; ++e)
            lengths.push_back((verts[f[e]] - verts[f[(e + 1) % 3]]).norm());
    if (lengths.empty()) return 0.0;
    const std::size_t mid = lengths.size() / 2;
    std::nth_element(lengths.begin(), lengths.begin() + mid, lengths.end());
    return lengths[mid];
}

inline bool edge_ok(const std::vector<Eigen::Vector3d>& verts, const std::array<int, 3>& f,
                    double limit) {
    for (int e = 0; e < 3; ++e)
        if ((verts[f[e]] - verts[f[(e + 1) % 3]]).norm() > limit) return false;
    return true;
}

/// Pixel-grid triangulation of a depth map: one vertex per valid pixel, two
/// triangles per fully valid quad, skipping triangles whose 3D edges exceed
/// the median by edge_filter_factor (they would bridge depth discontinuities).
inline Lift lift_depth(const DepthMap& map, const Camera& camera,
                       const Eigen::Affine3d& world_from_camera, int provenance,
                       double edge_filter_factor) {
    Lift out;
    out.vertex_at = Grid<int>(map.width(), map.height(), -1);
    for (int y = 0; y < map.height(); ++y)
        for (int x = 0; x < map.width(); ++x) {
            if (!map.valid(x, y)) continue;
            out.vertex_at(x, y) = out.mesh.vertex_count();
            out.mesh.vertices.push_back(
                world_from_camera * camera.backproject(x, y, map.depth(x, y)));
            out.mesh.provenance.push_back(provenance);
        }

    std::vector<std::array<int, 3>> candidates;
    for (int y = 0; y + 1 < map.height(); ++y)
        for (int x = 0; x + 1 < map.width(); ++x) {
            int v00 = out.vertex_at(x, y), v10 = out.vertex_at(x + 1, y);
            int v01 = out.vertex_at(x, y + 1), v11 = out.vertex_at(x + 1, y + 1);
            if (v00 < 0 || v10 < 0 || v01 < 0 || v11 < 0) continue;
            candidates.push_back({v00, v01, v11});
            candidates.push_back({v00, v11, v10});
        }
    const double limit = edge_filter_factor * median_edge_length(out.mesh.vertices, candidates);
    for (const auto& f : candidates)
        if (edge_ok(out.mesh.vertices, f, limit)) out.mesh.faces.push_back(f);
    return out;
}

inline std::vector<int> fiducial_vertices_from_grid(const Grid<int>& vertex_at,
                                                    const Fiducials& fiducials) {
    std::vector<int> out(kFiducialCount, -1);
    for (int k = 0; k < kFiducialCount; ++k) {
        double best = std::numeric_limits<double>::infinity();
        for (int y = 0; y < vertex_at.height(); ++y)
            for (int x = 0; x < vertex_at.width(); ++x) {
                if (vertex_at(x, y) < 0) continue;
                double d = (Eigen::Vector2d(x, y) - fiducials[k]).squaredNorm();
                if (d < best) {
                    best = d;
                    out[k] = vertex_at(x, y);
                }
            }
    }
    return out;
}

}  // namespace detail

/// Rebuilds the merged mesh from the per-cluster depth maps in completion
/// order. Each later cluster reuses an existing vertex where its depth agrees
/// with the rendered mesh at that pixel (blending the position toward the
/// existing one by the cluster's stitch weight) and appends fresh vertices
/// elsewhere; only triangles touching at least one fresh vertex are added.
inline HeadMesh merge_to_mesh(const GrowState& state, const GrowOptions& opts = {}) {
    if (state.completed.empty()) throw EmptyCluster("nothing reconstructed yet");

    const ClusterRecon& first = state.recon.at(state.completed.front());
    detail::Lift base = detail::lift_depth(first.depth, first.camera,
                                           first.camera_from_world.inverse(), first.cluster_id,
                                           opts.edge_filter_factor);
    HeadMesh mesh = std::move(base.mesh);

    for (std::size_t ci = 1; ci < state.completed.size(); ++ci) {
        const ClusterRecon& rc = state.recon.at(state.completed[ci]);
        const int w = rc.depth.width(), h = rc.depth.height();

        RasterOptions ro;
        ro.vertex_ids = true;
        ro.normals = true;
        ro.allow_empty = true;
        Raster raster = rasterize(mesh, rc.camera_from_world, rc.camera, w, h, ro);

        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (rc.depth.valid(x, y)) {
                    lo = std::min(lo, rc.depth.depth(x, y));
                    hi = std::max(hi, rc.depth.depth(x, y));
                }
        const double range = hi > lo ? hi - lo : 1.0;
        const double tol = opts.merge_depth_tolerance > 0
                               ? opts.merge_depth_tolerance * range
                               : std::numeric_limits<double>::infinity();

        const int base_count = mesh.vertex_count();
        const Eigen::Affine3d world_from_camera = rc.camera_from_world.inverse();
        Grid<int> vert_at(w, h, -1);
        std::vector<char> touched(base_count, 0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (!rc.depth.valid(x, y)) continue;
                Eigen::Vector3d pos =
                    world_from_camera * rc.camera.backproject(x, y, rc.depth.depth(x, y));
                const int old_id = raster.vertex_id(x, y);
                // A pixel showing the back of the existing sheet does not
                // already represent this surface point; give it a fresh vertex.
                if (raster.coverage(x, y) && old_id >= 0 && old_id < base_count &&
                    raster.normal(x, y).z() > 0.0 &&
                    std::abs(raster.depth(x, y) - rc.depth.depth(x, y)) <= tol) {
                    vert_at(x, y) = old_id;
                    if (!touched[old_id]) {
                        touched[old_id] = 1;
                        const double wgt = rc.blend.in_bounds(x, y) ? rc.blend(x, y) : 0.0;
                        mesh.vertices[old_id] = wgt * mesh.vertices[old_id] + (1.0 - wgt) * pos;
                    }
                } else {
                    vert_at(x, y) = mesh.vertex_count();
                    mesh.vertices.push_back(pos);
                    mesh.provenance.push_back(rc.cluster_id);
                }
            }

        std::vector<std::array<int, 3>> candidates;
        for (int y = 0; y + 1 < h; ++y)
            for (int x = 0; x + 1 < w; ++x) {
                int v00 = vert_at(x, y), v10 = vert_at(x + 1, y);
                int v01 = vert_at(x, y + 1), v11 = vert_at(x + 1, y + 1);
                if (v00 < 0 || v10 < 0 || v01 < 0 || v11 < 0) continue;
                for (const auto& f :
                     {std::array<int, 3>{v00, v01, v11}, std::array<int, 3>{v00, v11, v10}}) {
                    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) continue;
                    if (f[0] < base_count && f[1] < base_count && f[2] < base_count) continue;
                    candidates.push_back(f);
                }
            }
        const double limit =
            opts.edge_filter_factor * detail::median_edge_length(mesh.vertices, candidates);
        for (const auto& f : candidates)
            if (detail::edge_ok(mesh.vertices, f, limit)) mesh.faces.push_back(f);
    }

    // The first lift's vertices keep their indices through every rebuild, so
    // fiducial ids assigned at the frontal stage stay valid.
    mesh.fiducial_vertices = state.mesh.fiducial_vertices;
    return mesh;
}

/// Frontal bootstrap: photometric solve on the frontal cluster, harmonic
/// alignment against the template normals, unconstrained integration, then a
/// pixel-grid lift. The frontal camera frame becomes the mesh frame.
inline GrowState reconstruct_frontal(const ClusterSet& set, const GrowOptions& opts = {}) {
    auto it = set.clusters.find(0);
    if (it == set.clusters.end())
        throw MissingFrontalCluster("collection has no frontal (azimuth 0) cluster");
    const PhotoCluster& cluster = it->second;
    if (set.template_normals.valid_count() == 0)
        throw InsufficientOverlap("template normals unavailable for the frontal solve");

    NormalField est = photometric_normals(cluster, opts);
    ambiguity::AmbiguityTransform a =
        ambiguity::solve_linear_ambiguity(est, set.template_normals);
    NormalField corrected = ambiguity::apply_ambiguity(a, est);
    integrate::IntegrateOptions iopts = opts.depth;
    iopts.workers = opts.workers;
    DepthMap depth = integrate::integrate_normals(corrected, nullptr, iopts);

    GrowState state;
    ClusterRecon rc;
    rc.cluster_id = 0;
    rc.normals = std::move(corrected);
    rc.depth = std::move(depth);
    rc.blend = Grid<double>(cluster.width(), cluster.height(), 0.0);
    rc.camera_from_world = Eigen::Affine3d::Identity();
    rc.camera = standard_camera(cluster.width(), cluster.height());
    rc.pose_refined = true;

    detail::Lift lift = detail::lift_depth(rc.depth, rc.camera, Eigen::Affine3d::Identity(), 0,
                                           opts.edge_filter_factor);
    state.mesh = std::move(lift.mesh);
    state.mesh.fiducial_vertices =
        detail::fiducial_vertices_from_grid(lift.vertex_at, cluster.reference_fiducials);
    state.recon.emplace(0, std::move(rc));
    state.completed.push_back(0);
    return state;
}

struct PoseEstimate {
    Eigen::Affine3d camera_from_world = Eigen::Affine3d::Identity();
    bool refined = false;
};

/// Nominal yaw rotation about the mesh's vertical axis, refined by a 2D
/// similarity fit of the projected mesh fiducials onto the target cluster's
/// reference layout. Falls back to the nominal pose (refined = false) when
/// fiducials are missing or degenerate.
inline PoseEstimate estimate_pose_to_cluster(const GrowState& state, const PhotoCluster& target) {
    PoseEstimate pose;
    if (target.cluster_id == 0) {
        pose.refined = true;
        return pose;
    }
    if (!is_completed(state, neighbor_toward_zero(target.cluster_id)))
        throw NeighborNotCompleted("cluster " + std::to_string(target.cluster_id) +
                                   " needs cluster " +
                                   std::to_string(neighbor_toward_zero(target.cluster_id)) +
                                   " first");
    if (state.mesh.vertices.empty()) throw EmptyProjection("growing from an empty mesh");

    Eigen::Vector3d lo = state.mesh.vertices.front(), hi = lo;
    for (const auto& v : state.mesh.vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    const Eigen::Vector3d center = 0.5 * (lo + hi);
    Eigen::Affine3d nominal = azimuth_rotation(target.cluster_id) *
                              Eigen::Translation3d(-center);
    // Keep the head at the frame center after rotating about its own middle.
    const Camera camera = standard_camera(target.width(), target.height());
    pose.camera_from_world = nominal;

    if (state.mesh.fiducial_vertices.size() == static_cast<std::size_t>(kFiducialCount)) {
        std::array<Eigen::Vector2d, kFiducialCount> projected;
        for (int k = 0; k < kFiducialCount; ++k) {
            Eigen::Vector3d p =
                camera.project(nominal * state.mesh.vertices[state.mesh.fiducial_vertices[k]]);
            projected[k] = p.head<2>();
        }
        try {
            Similarity2D s2 = fit_similarity(projected, target.reference_fiducials);
            Eigen::Affine3d img_from_cam = Eigen::Affine3d::Identity();
            img_from_cam.linear() =
                Eigen::Vector3d(camera.scale, -camera.scale, camera.scale).asDiagonal();
            img_from_cam.translation() =
                Eigen::Vector3d(camera.center.x(), camera.center.y(), 0.0);
            Eigen::Affine3d lift2d = Eigen::Affine3d::Identity();
            const double c = std::cos(s2.rotation), s = std::sin(s2.rotation);
            lift2d.linear() << s2.scale * c, -s2.scale * s, 0.0,
                               s2.scale * s,  s2.scale * c, 0.0,
                               0.0, 0.0, s2.scale;
            lift2d.translation() =
                Eigen::Vector3d(s2.translation.x(), s2.translation.y(), 0.0);
            pose.camera_from_world = img_from_cam.inverse() * lift2d * img_from_cam * nominal;
            pose.refined = true;
        } catch (const DegenerateFiducials&) {
            pose.refined = false;
        }
    }
    return pose;
}

/// Z-buffered render of the current mesh into a target view: the reference
/// depth map and reference normals for that view's ambiguity and stitching.
inline std::pair<DepthMap, NormalField> render_reference(const GrowState& state,
                                                         const Eigen::Affine3d& camera_from_world,
                                                         const Camera& camera, int width,
                                                         int height) {
    if (state.mesh.vertices.empty()) throw EmptyProjection("growing from an empty mesh");
    RasterOptions ro;
    ro.normals = true;
    Raster raster = rasterize(state.mesh, camera_from_world, camera, width, height, ro);
    return {raster_to_depth_map(raster, camera_from_world.inverse()),
            raster_to_normal_field(raster)};
}

/// One growing step: photometric solve on the target cluster, ambiguity
/// against the rendered neighbor reference, integration stitched to the
/// reference depth, then a merged-mesh rebuild.
inline void grow_cluster(GrowState& state, const ClusterSet& set, int target,
                         const GrowOptions& opts = {}) {
    auto it = set.clusters.find(target);
    if (it == set.clusters.end())
        throw TooFewPhotos("cluster " + std::to_string(target) + " is empty");
    const PhotoCluster& cluster = it->second;
    const int w = cluster.width(), h = cluster.height();

    PoseEstimate pose = estimate_pose_to_cluster(state, cluster);
    NormalField est = photometric_normals(cluster, opts);
    const Camera camera = standard_camera(w, h);
    auto [d_ref, n_ref] = render_reference(state, pose.camera_from_world, camera, w, h);

    int overlap = 0, fit_count = 0;
    Mask fit_mask(w, h, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (d_ref.valid(x, y) && est.valid(x, y)) {
                ++overlap;
                if (n_ref.normal(x, y).z() >= opts.reference_min_nz) {
                    fit_mask(x, y) = 255;
                    ++fit_count;
                }
            }
    if (overlap < 100)
        throw InsufficientOverlap("rendered reference covers only " + std::to_string(overlap) +
                                  " target pixels");
    if (fit_count < 100)  // grazing filter left too little; fit on the full overlap
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                fit_mask(x, y) = d_ref.valid(x, y) && est.valid(x, y) ? 255 : 0;

    ambiguity::AmbiguityTransform a = ambiguity::solve_linear_ambiguity(est, n_ref, &fit_mask);
    NormalField corrected = ambiguity::apply_ambiguity(a, est);

    // Back-facing reference pixels are z-buffer leak-through from the far
    // side of the sheet; they cannot anchor depth seen from this view.
    Mask region(w, h, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (d_ref.valid(x, y) && corrected.valid(x, y) && n_ref.normal(x, y).z() > 0.0)
                region(x, y) = 255;
    integrate::BoundaryConstraint bc(w, h);
    bc.weight = integrate::make_blend_mask(region, opts.blend_band);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (region(x, y)) bc.z0(x, y) = d_ref.depth(x, y);

    integrate::IntegrateOptions iopts = opts.depth;
    iopts.workers = opts.workers;
    DepthMap depth = integrate::integrate_normals(corrected, &bc, iopts);

    ClusterRecon rc;
    rc.cluster_id = target;
    rc.normals = std::move(corrected);
    rc.depth = std::move(depth);
    rc.blend = bc.weight;
    rc.camera_from_world = pose.camera_from_world;
    rc.camera = camera;
    rc.pose_refined = pose.refined;
    state.recon[target] = std::move(rc);
    state.completed.push_back(target);

    std::vector<int> fiducials = state.mesh.fiducial_vertices;
    state.mesh = merge_to_mesh(state, opts);
    state.mesh.fiducial_vertices = std::move(fiducials);
}

/// Full pipeline: frontal bootstrap, then the two side chains in the fixed
/// growing order, skipping clusters that are absent from the collection.
inline GrowState run_growing(const ClusterSet& set, const GrowOptions& opts = {},
                             const std::vector<int>* cluster_filter = nullptr) {
    auto wanted = [&](int id) {
        return !cluster_filter ||
               std::find(cluster_filter->begin(), cluster_filter->end(), id) !=
                   cluster_filter->end();
    };
    GrowState state = reconstruct_frontal(set, opts);
    for (int target : kClusterBins) {
        if (target == 0 || !wanted(target)) continue;
        if (!set.clusters.count(target)) continue;
        if (!is_completed(state, neighbor_toward_zero(target))) continue;
        grow_cluster(state, set, target, opts);
    }
    return state;
}

}  // namespace headgrow::grow

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "headgrow/errors.hpp"
#include "headgrow/grow.hpp"
#include "headgrow/ingest.hpp"
#include "headgrow/parallel.hpp"
#include "headgrow/render.hpp"
#include "headgrow/types.hpp"

namespace headgrow::eval {

// ---------------------------------------------------------------------------
// Reprojection error: re-render the mesh per photo under fitted lighting and
// compare intensities. Per-photo error is the root-mean-square intensity
// difference over pixels visible in both the photo and the render.
// ---------------------------------------------------------------------------

struct PhotoScore {
    std::string photo_id;
    int cluster_id = 0;
    double rms = 0.0;
    long pixel_count = 0;
};

struct ReprojectionResult {
    double mean = 0.0;
    double stddev = 0.0;
    std::vector<PhotoScore> per_photo;
};

enum class AlbedoSource {
    // Per-pixel albedo recovered by the cluster's photometric solve; its
    // arbitrary global scale is absorbed by the per-photo lighting fit.
    estimated,
    // The cluster's pixelwise average image.
    cluster_average,
    // A single constant.
    constant,
};

struct ReprojectionOptions {
    AlbedoSource albedo_source = AlbedoSource::estimated;
    double constant_albedo = 1.0;
    const std::map<int, Grid<double>>* albedo_override = nullptr;
    // Fixed lighting per photo id in place of the least-squares fit.
    const std::map<std::string, Eigen::Vector4d>* lighting_override = nullptr;
    int workers = 0;
};

namespace detail {

/// Least-squares [ambient, x, y, z] lighting for one photo against rendered
/// normals and a per-pixel albedo. The render model clamps the directional
/// term at zero, so after a linear seed the fit runs a few Gauss-Newton
/// passes that re-solve with the shadowed pixels contributing only to the
/// ambient coefficient. The model is piecewise linear in the lighting, so
/// each pass is an exact least-squares solve on the current lit set.
inline Eigen::Vector4d fit_photo_lighting(const Photo& photo, const NormalField& rendered,
                                          const Grid<double>& albedo) {
    std::vector<Eigen::Vector3d> normals;
    std::vector<double> rhos, intensities;
    for (int y = 0; y < rendered.height; ++y)
        for (int x = 0; x < rendered.width; ++x) {
            if (!rendered.valid(x, y) || !photo.mask(x, y)) continue;
            const double rho = albedo(x, y);
            if (rho <= 0.0) continue;
            normals.push_back(rendered.normal(x, y));
            rhos.push_back(rho);
            intensities.push_back(photo.pixels(x, y));
        }
    if (normals.size() < 4)
        throw NoValidOverlap("photo " + photo.id + " shares too few pixels with the render");

    Eigen::Vector4d lighting = Eigen::Vector4d::Zero();
    std::vector<char> lit(normals.size(), 1);
    for (int pass = 0; pass < 9; ++pass) {
        Eigen::Matrix4d ata = Eigen::Matrix4d::Zero();
        Eigen::Vector4d atb = Eigen::Vector4d::Zero();
        long lit_count = 0;
        for (std::size_t i = 0; i < normals.size(); ++i) {
            Eigen::Vector4d basis(rhos[i], 0.0, 0.0, 0.0);
            if (lit[i]) {
                basis.tail<3>() = rhos[i] * normals[i];
                ++lit_count;
            }
            ata += basis * basis.transpose();
            atb += basis * intensities[i];
        }
        if (lit_count < 4) break;
        Eigen::Vector4d next = ata.ldlt().solve(atb);
        bool changed = pass == 0;
        for (std::size_t i = 0; i < normals.size(); ++i) {
            char now = next.tail<3>().dot(normals[i]) > 0.0 ? 1 : 0;
            if (now != lit[i]) {
                lit[i] = now;
                changed = true;
            }
        }
        lighting = next;
        if (!changed) break;
    }
    return lighting;
}

inline double photo_rms(const Photo& photo, const NormalField& rendered,
                        const Grid<double>& albedo, const Eigen::Vector4d& lighting,
                        long* pixels_out) {
    double sq_sum = 0.0;
    long count = 0;
    for (int y = 0; y < rendered.height; ++y)
        for (int x = 0; x < rendered.width; ++x) {
            if (!rendered.valid(x, y) || !photo.mask(x, y)) continue;
            const double rho = albedo(x, y);
            if (rho <= 0.0) continue;
            const Eigen::Vector3d& n = rendered.normal(x, y);
            double shade = lighting(0) + std::max(0.0, lighting.tail<3>().dot(n));
            double value = std::clamp(rho * shade, 0.0, 255.0);
            double diff = photo.pixels(x, y) - value;
            sq_sum += diff * diff;
            ++count;
        }
    if (pixels_out) *pixels_out = count;
    return count > 0 ? std::sqrt(sq_sum / count) : 0.0;
}

}  // namespace detail

inline ReprojectionResult reprojection_error(const grow::GrowState& state, const ClusterSet& set,
                                             const ReprojectionOptions& opts = {}) {
    ReprojectionResult result;
    for (int cluster_id : state.completed) {
        auto cit = set.clusters.find(cluster_id);
        if (cit == set.clusters.end()) continue;
        const PhotoCluster& cluster = cit->second;
        const grow::ClusterRecon& rc = state.recon.at(cluster_id);
        const int w = cluster.width(), h = cluster.height();

        RasterOptions ro;
        ro.normals = true;
        ro.allow_empty = true;
        Raster raster = rasterize(state.mesh, rc.camera_from_world, rc.camera, w, h, ro);
        NormalField rendered = raster_to_normal_field(raster);

        Grid<double> albedo(w, h, opts.constant_albedo);
        if (opts.albedo_override && opts.albedo_override->count(cluster_id)) {
            albedo = opts.albedo_override->at(cluster_id);
        } else if (opts.albedo_source == AlbedoSource::estimated) {
            double mean = 0.0;
            long n = 0;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    if (rc.normals.valid(x, y)) {
                        mean += rc.normals.albedo(x, y);
                        ++n;
                    }
            mean = n > 0 ? mean / n : opts.constant_albedo;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    albedo(x, y) = rc.normals.valid(x, y) ? rc.normals.albedo(x, y) : mean;
        } else if (opts.albedo_source == AlbedoSource::cluster_average) {
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    albedo(x, y) = cluster.average_valid(x, y) ? cluster.average_image(x, y) : 0.0;
        }

        std::vector<PhotoScore> scores(cluster.photos.size());
        std::vector<char> usable(cluster.photos.size(), 0);
        parallel_for(static_cast<int>(cluster.photos.size()), [&](int i) {
            const Photo& photo = cluster.photos[i];
            Eigen::Vector4d lighting;
            if (opts.lighting_override && opts.lighting_override->count(photo.id)) {
                lighting = opts.lighting_override->at(photo.id);
            } else {
                try {
                    lighting = detail::fit_photo_lighting(photo, rendered, albedo);
                } catch (const NoValidOverlap&) {
                    return;
                }
            }
            PhotoScore s;
            s.photo_id = photo.id;
            s.cluster_id = cluster_id;
            s.rms = detail::photo_rms(photo, rendered, albedo, lighting, &s.pixel_count);
            if (s.pixel_count == 0) return;
            scores[i] = std::move(s);
            usable[i] = 1;
        }, opts.workers);
        for (std::size_t i = 0; i < scores.size(); ++i)
            if (usable[i]) result.per_photo.push_back(std::move(scores[i]));
    }

    if (result.per_photo.empty())
        throw NoValidOverlap("no photo overlaps the rendered reconstruction");
    double sum = 0.0;
    for (const auto& s : result.per_photo) sum += s.rms;
    result.mean = sum / static_cast<double>(result.per_photo.size());
    double sq = 0.0;
    for (const auto& s : result.per_photo) sq += (s.rms - result.mean) * (s.rms - result.mean);
    result.stddev = result.per_photo.size() > 1
                        ? std::sqrt(sq / static_cast<double>(result.per_photo.size() - 1))
                        : 0.0;
    return result;
}

// ---------------------------------------------------------------------------
// Geometry metrics against ground truth.
// ---------------------------------------------------------------------------

struct AngularStats {
    double median_deg = 0.0;
    double mean_deg = 0.0;
    long pixel_count = 0;
};

inline AngularStats normal_angular_error(const NormalField& est, const NormalField& gt) {
    if (est.width != gt.width || est.height != gt.height)
        throw NoValidOverlap("normal field sizes differ");
    std::vector<double> angles;
    for (int y = 0; y < est.height; ++y)
        for (int x = 0; x < est.width; ++x) {
            if (!est.valid(x, y) || !gt.valid(x, y)) continue;
            double d = std::clamp(est.normal(x, y).dot(gt.normal(x, y)), -1.0, 1.0);
            angles.push_back(rad_to_deg(std::acos(d)));
        }
    if (angles.empty()) throw NoValidOverlap("no mutually valid pixels");

    AngularStats stats;
    stats.pixel_count = static_cast<long>(angles.size());
    stats.mean_deg =
        std::accumulate(angles.begin(), angles.end(), 0.0) / static_cast<double>(angles.size());
    const std::size_t mid = angles.size() / 2;
    std::nth_element(angles.begin(), angles.begin() + mid, angles.end());
    stats.median_deg = angles[mid];
    if (angles.size() % 2 == 0) {
        std::nth_element(angles.begin(), angles.begin() + mid - 1, angles.begin() + mid);
        stats.median_deg = 0.5 * (stats.median_deg + angles[mid - 1]);
    }
    return stats;
}

/// RMSE after the best scale+offset fit of the estimate onto the ground
/// truth, which absorbs the reconstruction's global depth gauge.
inline double depth_rmse(const DepthMap& est, const DepthMap& gt) {
    if (est.width() != gt.width() || est.height() != gt.height())
        throw NoValidOverlap("depth map sizes differ");
    double se = 0.0, sg = 0.0, see = 0.0, seg = 0.0;
    long n = 0;
    for (int y = 0; y < est.height(); ++y)
        for (int x = 0; x < est.width(); ++x) {
            if (!est.valid(x, y) || !gt.valid(x, y)) continue;
            const double e = est.depth(x, y), g = gt.depth(x, y);
            se += e;
            sg += g;
            see += e * e;
            seg += e * g;
            ++n;
        }
    if (n < 2) throw NoValidOverlap("fewer than 2 mutually valid pixels");
    const double var = see - se * se / n;
    const double mean_sq = see / n;
    if (var <= 1e-12 * std::max(mean_sq, 1.0)) throw DegenerateFit("estimate depth is constant");
    const double s = (seg - se * sg / n) / var;
    const double c = (sg - s * se) / n;

    double sq_sum = 0.0;
    for (int y = 0; y < est.height(); ++y)
        for (int x = 0; x < est.width(); ++x) {
            if (!est.valid(x, y) || !gt.valid(x, y)) continue;
            const double r = s * est.depth(x, y) + c - gt.depth(x, y);
            sq_sum += r * r;
        }
    return std::sqrt(sq_sum / n);
}

// ---------------------------------------------------------------------------
// Whole-mesh comparisons: rendered-view coverage and seam continuity.
// ---------------------------------------------------------------------------

/// Rigidly aligns (with scale) the estimated mesh onto the reference using
/// their fiducial vertices.
inline HeadMesh align_by_fiducials(const HeadMesh& est, const std::vector<Eigen::Vector3d>& ref_points) {
    if (est.fiducial_vertices.size() != ref_points.size() || ref_points.size() < 3)
        throw DegenerateFiducials("fiducial correspondences unavailable for alignment");
    Eigen::MatrixXd src(3, ref_points.size()), dst(3, ref_points.size());
    for (std::size_t k = 0; k < ref_points.size(); ++k) {
        src.col(k) = est.vertices[est.fiducial_vertices[k]];
        dst.col(k) = ref_points[k];
    }
    Eigen::Matrix4d t = Eigen::umeyama(src, dst, true);
    Eigen::Affine3d a(t);
    HeadMesh out = est;
    for (auto& v : out.vertices) v = a * v;
    return out;
}

/// Fraction of the reference mesh's rendered pixels that the estimated mesh
/// also covers, per azimuth view (both meshes in the same frame).
inline std::vector<double> view_coverage(const HeadMesh& est, const HeadMesh& ref,
                                         const std::vector<double>& azimuths, int width,
                                         int height) {
    FittedView view = fit_camera(ref, width, height);
    std::vector<double> out;
    RasterOptions ro;
    ro.allow_empty = true;
    for (double az : azimuths) {
        Eigen::Affine3d pose = view_transform(view, az);
        Raster rr = rasterize(ref, pose, view.camera, width, height, ro);
        Raster re = rasterize(est, pose, view.camera, width, height, ro);
        long ref_count = 0, both = 0;
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                if (!rr.coverage(x, y)) continue;
                ++ref_count;
                if (re.coverage(x, y)) ++both;
            }
        out.push_back(ref_count > 0 ? static_cast<double>(both) / ref_count : 0.0);
    }
    return out;
}

struct SeamStats {
    double mean_gap = 0.0;
    double p95_gap = 0.0;
    long edge_count = 0;
};

/// Depth steps across provenance-crossing mesh edges, measured along the
/// viewing direction of the later of the two source clusters and normalized
/// by the mesh's own depth extent in the frontal frame. A steep but smooth
/// surface is not a discontinuity, so the depth change the later cluster's
/// own depth map predicts between the two pixels is subtracted first; what
/// remains is the actual step the stitch left behind.
inline SeamStats seam_discontinuity(const grow::GrowState& state) {
    const HeadMesh& mesh = state.mesh;
    auto order_of = [&](int cluster_id) {
        auto it = std::find(state.completed.begin(), state.completed.end(), cluster_id);
        return it == state.completed.end() ? -1
                                           : static_cast<int>(it - state.completed.begin());
    };

    double z_lo = std::numeric_limits<double>::infinity(), z_hi = -z_lo;
    for (const auto& v : mesh.vertices) {
        z_lo = std::min(z_lo, v.z());
        z_hi = std::max(z_hi, v.z());
    }
    const double range = z_hi > z_lo ? z_hi - z_lo : 1.0;

    std::vector<double> gaps;
    std::set<std::pair<int, int>> seen;
    for (const auto& f : mesh.faces)
        for (int e = 0; e < 3; ++e) {
            int a = f[e], b = f[(e + 1) % 3];
            if (mesh.provenance[a] == mesh.provenance[b]) continue;
            auto key = std::minmax(a, b);
            if (!seen.insert(key).second) continue;
            int ca = order_of(mesh.provenance[a]), cb = order_of(mesh.provenance[b]);
            int later = ca >= cb ? mesh.provenance[a] : mesh.provenance[b];
            const grow::ClusterRecon& rc = state.recon.at(later);
            const Eigen::Vector3d ia = rc.camera.project(rc.camera_from_world * mesh.vertices[a]);
            const Eigen::Vector3d ib = rc.camera.project(rc.camera_from_world * mesh.vertices[b]);
            double gap = ia.z() - ib.z();
            const int xa = static_cast<int>(std::lround(ia.x()));
            const int ya = static_cast<int>(std::lround(ia.y()));
            const int xb = static_cast<int>(std::lround(ib.x()));
            const int yb = static_cast<int>(std::lround(ib.y()));
            if (rc.depth.valid.in_bounds(xa, ya) && rc.depth.valid.in_bounds(xb, yb) &&
                rc.depth.valid(xa, ya) && rc.depth.valid(xb, yb))
                gap -= rc.depth.depth(xa, ya) - rc.depth.depth(xb, yb);
            gaps.push_back(std::abs(gap) / range);
        }

    SeamStats stats;
    stats.edge_count = static_cast<long>(gaps.size());
    if (gaps.empty()) return stats;
    stats.mean_gap = std::accumulate(gaps.begin(), gaps.end(), 0.0) / gaps.size();
    std::sort(gaps.begin(), gaps.end());
    stats.p95_gap = gaps[static_cast<std::size_t>(0.95 * (gaps.size() - 1))];
    return stats;
}

// ---------------------------------------------------------------------------
// Photo-count ablation.
// ---------------------------------------------------------------------------

struct AblationRow {
    double fraction = 1.0;
    int photos_used = 0;
    bool ok = false;
    std::string status;  // "ok" or the failure name
    double reprojection_mean = 0.0;
    double reprojection_std = 0.0;
};

/// Deterministic uniform subsample of each cluster: shuffle with a seed
/// derived from (seed, cluster_id), keep the first round(fraction * n), and
/// restore manifest order among the kept photos.
inline ClusterSet subsample_clusters(const ClusterSet& set, double fraction, std::uint64_t seed,
                                     double average_min_coverage = 0.25) {
    ClusterSet out;
    out.template_normals = set.template_normals;
    for (const auto& [id, cluster] : set.clusters) {
        const std::size_t n = cluster.photos.size();
        auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
        k = std::min(k, n);
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::seed_seq seq{seed, static_cast<std::uint64_t>(id + 1000)};
        std::mt19937_64 rng(seq);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(k);
        std::sort(idx.begin(), idx.end());

        PhotoCluster sub;
        sub.cluster_id = id;
        sub.reference_fiducials = cluster.reference_fiducials;
        for (std::size_t i : idx) sub.photos.push_back(cluster.photos[i]);
        if (!sub.photos.empty()) {
            ingest::AverageResult avg = ingest::cluster_average(sub, average_min_coverage);
            sub.average_image = std::move(avg.image);
            sub.average_valid = std::move(avg.valid);
        }
        out.clusters.emplace(id, std::move(sub));
    }
    return out;
}

/// Reruns the whole pipeline per fraction and scores reprojection against the
/// FULL photo set, so rows are comparable; failures become table rows rather
/// than exceptions.
inline std::vector<AblationRow> ablate_photo_count(const ClusterSet& set,
                                                   const std::vector<double>& fractions,
                                                   std::uint64_t seed,
                                                   const grow::GrowOptions& gopts = {},
                                                   const ReprojectionOptions& ropts = {},
                                                   double average_min_coverage = 0.25) {
    std::vector<AblationRow> rows;
    for (double fraction : fractions) {
        AblationRow row;
        row.fraction = fraction;
        ClusterSet sub = subsample_clusters(set, fraction, seed, average_min_coverage);
        row.photos_used = sub.total_photo_count();
        try {
            grow::GrowState state = grow::run_growing(sub, gopts);
            ReprojectionResult r = reprojection_error(state, set, ropts);
            row.ok = true;
            row.status = "ok";
            row.reprojection_mean = r.mean;
            row.reprojection_std = r.stddev;
        } catch (const Error& e) {
            row.ok = false;
            row.status = e.name();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace headgrow::eval

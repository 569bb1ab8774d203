#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "headgrow/errors.hpp"
#include "headgrow/geometry.hpp"
#include "headgrow/manifest.hpp"
#include "headgrow/parallel.hpp"
#include "headgrow/types.hpp"

namespace headgrow::ingest {

/// Nearest azimuth bin in {0, +-30, +-60, +-90}; ties break toward the
/// smaller absolute bin; azimuths beyond +-105 clamp to +-90.
inline int assign_cluster(double azimuth) {
    if (azimuth > 105.0) return 90;
    if (azimuth < -105.0) return -90;
    static constexpr std::array<int, 7> by_abs = {0, -30, 30, -60, 60, -90, 90};
    int best = 0;
    double best_dist = std::abs(azimuth - 0.0);
    for (int bin : by_abs) {
        double dist = std::abs(azimuth - bin);
        if (dist < best_dist) {
            best_dist = dist;
            best = bin;
        }
    }
    return best;
}

namespace detail {

inline float sample_bilinear(const ImageGrid& img, double x, double y) {
    int x0 = static_cast<int>(std::floor(x));
    int y0 = static_cast<int>(std::floor(y));
    double fx = x - x0, fy = y - y0;
    auto at = [&](int xi, int yi) -> double {
        xi = std::clamp(xi, 0, img.width() - 1);
        yi = std::clamp(yi, 0, img.height() - 1);
        return img(xi, yi);
    };
    return static_cast<float>((1 - fx) * (1 - fy) * at(x0, y0) + fx * (1 - fy) * at(x0 + 1, y0) +
                              (1 - fx) * fy * at(x0, y0 + 1) + fx * fy * at(x0 + 1, y0 + 1));
}

inline double sample_mask_bilinear(const Mask& mask, double x, double y) {
    int x0 = static_cast<int>(std::floor(x));
    int y0 = static_cast<int>(std::floor(y));
    double fx = x - x0, fy = y - y0;
    auto at = [&](int xi, int yi) -> double {
        if (xi < 0 || xi >= mask.width() || yi < 0 || yi >= mask.height()) return 0.0;
        return mask(xi, yi) ? 1.0 : 0.0;
    };
    return (1 - fx) * (1 - fy) * at(x0, y0) + fx * (1 - fy) * at(x0 + 1, y0) +
           (1 - fx) * fy * at(x0, y0 + 1) + fx * fy * at(x0 + 1, y0 + 1);
}

}  // namespace detail

/// Warps the photo by the least-squares similarity mapping its fiducials
/// onto the reference layout. Pixels pulled from outside the source frame
/// are masked out.
inline Photo rigid_align(const Photo& photo, const Fiducials& reference) {
    Similarity2D t = fit_similarity(photo.fiducials, reference);
    Similarity2D inv = t.inverse();

    Photo out;
    out.azimuth = photo.azimuth;
    out.id = photo.id;
    out.pixels = ImageGrid(photo.pixels.width(), photo.pixels.height(), 0.0f);
    out.mask = Mask(photo.mask.width(), photo.mask.height(), 0);
    for (int y = 0; y < out.pixels.height(); ++y)
        for (int x = 0; x < out.pixels.width(); ++x) {
            Eigen::Vector2d src = inv.apply({static_cast<double>(x), static_cast<double>(y)});
            if (src.x() < 0.0 || src.x() > photo.pixels.width() - 1.0 || src.y() < 0.0 ||
                src.y() > photo.pixels.height() - 1.0)
                continue;
            out.pixels(x, y) = detail::sample_bilinear(photo.pixels, src.x(), src.y());
            out.mask(x, y) = detail::sample_mask_bilinear(photo.mask, src.x(), src.y()) >= 0.5 ? 255 : 0;
        }
    for (int i = 0; i < kFiducialCount; ++i) out.fiducials[i] = t.apply(photo.fiducials[i]);
    return out;
}

struct AverageResult {
    ImageGrid image;
    Mask valid;
};

/// Per-pixel mean over unmasked photos; pixels unmasked in fewer than
/// `min_coverage` of the photos are flagged invalid.
inline AverageResult cluster_average(const PhotoCluster& cluster, double min_coverage = 0.25) {
    if (cluster.photos.empty()) throw EmptyCluster("cluster has no photos");
    const int w = cluster.width(), h = cluster.height();
    AverageResult out;
    out.image = ImageGrid(w, h, 0.0f);
    out.valid = Mask(w, h, 0);
    Grid<int> count(w, h, 0);
    Grid<double> sum(w, h, 0.0);
    for (const auto& photo : cluster.photos)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (photo.mask(x, y)) {
                    sum(x, y) += photo.pixels(x, y);
                    count(x, y) += 1;
                }
    const double n = static_cast<double>(cluster.photos.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (count(x, y) > 0) {
                out.image(x, y) = static_cast<float>(sum(x, y) / count(x, y));
                if (count(x, y) >= min_coverage * n) out.valid(x, y) = 255;
            }
    return out;
}

struct LoadOptions {
    double average_min_coverage = 0.25;
    int workers = 0;
};

/// Loads a manifest, assigns photos to azimuth clusters, aligns each cluster
/// to its reference fiducials and computes cluster averages.
inline ClusterSet load_collection(const std::filesystem::path& manifest_path,
                                  const LoadOptions& opts = {}) {
    Manifest manifest = read_manifest(manifest_path);
    std::filesystem::path base = manifest_path.parent_path();

    std::vector<Photo> photos(manifest.photos.size());
    std::vector<int> bins(manifest.photos.size());
    // Image decoding is the bulk of the work; do it in parallel and surface
    // the first error afterwards.
    std::vector<std::string> errors(manifest.photos.size());
    parallel_for(static_cast<int>(manifest.photos.size()), [&](int i) {
        const ManifestPhoto& entry = manifest.photos[i];
        try {
            Photo photo;
            photo.pixels = read_pgm(base / entry.file);
            photo.mask = entry.mask.empty()
                             ? Mask(photo.pixels.width(), photo.pixels.height(), 255)
                             : read_mask_pgm(base / entry.mask);
            if (!photo.mask.same_size(photo.pixels))
                throw ManifestParseError(entry.file + ": mask size differs from image");
            if (entry.azimuth < -180.0 || entry.azimuth >= 180.0)
                throw ManifestParseError(entry.file + ": azimuth outside [-180, 180)");
            for (const auto& f : entry.fiducials)
                if (f.x() < 0 || f.x() > photo.pixels.width() - 1 || f.y() < 0 ||
                    f.y() > photo.pixels.height() - 1)
                    throw ManifestParseError(entry.file + ": fiducial outside image bounds");
            photo.fiducials = entry.fiducials;
            photo.azimuth = entry.azimuth;
            photo.id = entry.id;
            photos[i] = std::move(photo);
            bins[i] = assign_cluster(entry.azimuth);
        } catch (const Error& e) {
            errors[i] = e.what();
            if (dynamic_cast<const MissingImage*>(&e)) errors[i] = "MissingImage|" + std::string(e.what());
        }
    }, opts.workers);
    for (const auto& err : errors) {
        if (err.empty()) continue;
        if (err.rfind("MissingImage|", 0) == 0) throw MissingImage(err.substr(13));
        throw ManifestParseError(err);
    }

    ClusterSet set;
    for (std::size_t i = 0; i < photos.size(); ++i) {
        PhotoCluster& cluster = set.clusters[bins[i]];
        cluster.cluster_id = bins[i];
        cluster.photos.push_back(std::move(photos[i]));
    }
    if (!set.clusters.count(0))
        throw MissingFrontalCluster("collection has no frontal (azimuth 0) cluster");

    for (auto& [id, cluster] : set.clusters) {
        // Reference layout: frozen in the manifest when present, otherwise the
        // per-cluster mean of the raw annotations.
        auto it = manifest.reference_fiducials.find(id);
        if (it != manifest.reference_fiducials.end()) {
            cluster.reference_fiducials = it->second;
        } else {
            Fiducials mean{};
            for (auto& f : mean) f.setZero();
            for (const auto& photo : cluster.photos)
                for (int k = 0; k < kFiducialCount; ++k) mean[k] += photo.fiducials[k];
            for (auto& f : mean) f /= static_cast<double>(cluster.photos.size());
            cluster.reference_fiducials = mean;
        }
        std::vector<std::string> align_errors(cluster.photos.size());
        parallel_for(static_cast<int>(cluster.photos.size()), [&](int i) {
            try {
                cluster.photos[i] = rigid_align(cluster.photos[i], cluster.reference_fiducials);
            } catch (const Error& e) {
                align_errors[i] = e.what();
            }
        }, opts.workers);
        for (std::size_t i = 0; i < align_errors.size(); ++i)
            if (!align_errors[i].empty())
                throw DegenerateFiducials(cluster.photos[i].id + ": " + align_errors[i]);
        AverageResult avg = cluster_average(cluster, opts.average_min_coverage);
        cluster.average_image = std::move(avg.image);
        cluster.average_valid = std::move(avg.valid);
    }

    if (!manifest.template_normals_file.empty())
        set.template_normals =
            normals_from_image(read_float_image(base / manifest.template_normals_file));
    return set;
}

}  // namespace headgrow::ingest

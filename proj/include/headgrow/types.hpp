#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "headgrow/geometry.hpp"
#include "headgrow/grid.hpp"
#include "headgrow/image_io.hpp"

namespace headgrow {

inline constexpr int kFiducialCount = 7;
using Fiducials = std::array<Eigen::Vector2d, kFiducialCount>;

/// The canonical azimuth bins, in growing order from the frontal cluster.
inline constexpr std::array<int, 7> kClusterBins = {0, 30, 60, 90, -30, -60, -90};

struct Photo {
    ImageGrid pixels;    // grayscale, 0..255
    Mask mask;           // head/neck segmentation
    Fiducials fiducials; // image coordinates, fixed landmark order
    double azimuth = 0.0;
    std::string id;
};

struct PhotoCluster {
    int cluster_id = 0;
    std::vector<Photo> photos;       // warped to the cluster reference frame
    Fiducials reference_fiducials{};
    ImageGrid average_image;
    Mask average_valid;              // pixels unmasked in enough photos

    int width() const { return photos.empty() ? average_image.width() : photos.front().pixels.width(); }
    int height() const { return photos.empty() ? average_image.height() : photos.front().pixels.height(); }
};

/// Per-pixel surface orientation. Normals live in the image frame (x = +col,
/// y = +row, z toward the camera); raw4 is the unnormalized 4-vector from the
/// factorization, kept for ambiguity solving, with layout
/// [ambient, x, y, z].
struct NormalField {
    int width = 0;
    int height = 0;
    Grid<Eigen::Vector3d> normal;
    Grid<double> albedo;
    Mask valid;
    Grid<Eigen::Vector4d> raw4;

    NormalField() = default;
    NormalField(int w, int h)
        : width(w), height(h),
          normal(w, h, Eigen::Vector3d::Zero()),
          albedo(w, h, 0.0),
          valid(w, h, 0),
          raw4(w, h, Eigen::Vector4d::Zero()) {}

    /// Stores m as the pixel's raw4 and derives normal/albedo from its last
    /// three components. Marks the pixel invalid when they vanish.
    void set_from_raw4(int x, int y, const Eigen::Vector4d& m) {
        raw4(x, y) = m;
        Eigen::Vector3d n = m.tail<3>();
        double len = n.norm();
        if (len < 1e-12 || !std::isfinite(len)) {
            valid(x, y) = 0;
            normal(x, y).setZero();
            albedo(x, y) = 0.0;
            return;
        }
        normal(x, y) = n / len;
        albedo(x, y) = len;
        valid(x, y) = 255;
    }

    int valid_count() const { return count_set(valid); }
};

/// Builds a geometry-only field from unit normals: albedo 1, ambient
/// component 1, so raw4 = [1, n]. The convention for ambiguity references.
inline NormalField field_from_normals(const Grid<Eigen::Vector3d>& normals, const Mask& valid) {
    NormalField f(normals.width(), normals.height());
    for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x) {
            if (!valid(x, y)) continue;
            Eigen::Vector3d n = normals(x, y).normalized();
            f.set_from_raw4(x, y, Eigen::Vector4d(1.0, n.x(), n.y(), n.z()));
        }
    return f;
}

struct DepthMap {
    Grid<double> depth;  // image-frame z, pixel units, larger = nearer
    Mask valid;
    Eigen::Affine3d world_from_camera = Eigen::Affine3d::Identity();

    DepthMap() = default;
    DepthMap(int w, int h)
        : depth(w, h, 0.0), valid(w, h, 0) {}

    int width() const { return depth.width(); }
    int height() const { return depth.height(); }
};

struct HeadMesh {
    std::vector<Eigen::Vector3d> vertices;
    std::vector<std::array<int, 3>> faces;
    std::vector<int> provenance;          // source cluster id per vertex
    std::vector<int> fiducial_vertices;   // empty or exactly kFiducialCount

    int vertex_count() const { return static_cast<int>(vertices.size()); }
    int face_count() const { return static_cast<int>(faces.size()); }
};

struct ClusterSet {
    std::map<int, PhotoCluster> clusters;
    NormalField template_normals;  // frontal GBR reference

    int total_photo_count() const {
        int n = 0;
        for (const auto& [id, c] : clusters) n += static_cast<int>(c.photos.size());
        return n;
    }
};

// ---------------------------------------------------------------------------
// NormalField / DepthMap <-> HGFI float images
// ---------------------------------------------------------------------------

inline FloatImage normals_to_image(const NormalField& field) {
    FloatImage img;
    img.width = field.width;
    img.height = field.height;
    img.channels = 3;
    img.data.assign(static_cast<std::size_t>(img.width) * img.height * 3, 0.0f);
    for (int y = 0; y < field.height; ++y)
        for (int x = 0; x < field.width; ++x) {
            if (!field.valid(x, y)) continue;
            const Eigen::Vector3d& n = field.normal(x, y);
            img.at(x, y, 0) = static_cast<float>(n.x());
            img.at(x, y, 1) = static_cast<float>(n.y());
            img.at(x, y, 2) = static_cast<float>(n.z());
        }
    return img;
}

inline NormalField normals_from_image(const FloatImage& img) {
    if (img.channels != 3) throw IoError("normal image must have 3 channels");
    NormalField field(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            Eigen::Vector3d n(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
            if (n.squaredNorm() < 1e-12) continue;
            n.normalize();
            field.set_from_raw4(x, y, Eigen::Vector4d(1.0, n.x(), n.y(), n.z()));
        }
    return field;
}

inline FloatImage depth_to_image(const DepthMap& map) {
    FloatImage img;
    img.width = map.width();
    img.height = map.height();
    img.channels = 1;
    img.data.assign(static_cast<std::size_t>(img.width) * img.height, 0.0f);
    const float nan = std::numeric_limits<float>::quiet_NaN();
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            img.at(x, y, 0) = map.valid(x, y) ? static_cast<float>(map.depth(x, y)) : nan;
    return img;
}

inline DepthMap depth_from_image(const FloatImage& img) {
    if (img.channels != 1) throw IoError("depth image must have 1 channel");
    DepthMap map(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            float v = img.at(x, y, 0);
            if (std::isnan(v)) continue;
            map.depth(x, y) = v;
            map.valid(x, y) = 255;
        }
    return map;
}

}  // namespace headgrow

#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "headgrow/errors.hpp"
#include "headgrow/types.hpp"

namespace headgrow {

/// One photo entry. `file`, `azimuth` and `fiducials` are required; the rest
/// are optional extensions (synthetic datasets carry ground-truth references).
struct ManifestPhoto {
    std::string file;
    double azimuth = 0.0;
    Fiducials fiducials{};
    std::string mask;        // empty -> full-frame mask
    std::string gt_normals;  // HGFI, 3 channels
    std::string gt_depth;    // HGFI, 1 channel
    std::string id;          // empty -> file stem
};

struct Manifest {
    std::vector<ManifestPhoto> photos;
    std::string template_normals_file;
    std::map<int, Fiducials> reference_fiducials;  // per cluster, frozen on write
};

inline Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ManifestParseError("cannot open " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ManifestParseError(path.string() + ": " + e.what());
    }
    Manifest m;
    try {
        for (const auto& p : doc.at("photos")) {
            ManifestPhoto photo;
            photo.file = p.at("file").get<std::string>();
            photo.azimuth = p.at("azimuth").get<double>();
            const auto& fids = p.at("fiducials");
            if (fids.size() != kFiducialCount)
                throw ManifestParseError(path.string() + ": expected " +
                                         std::to_string(kFiducialCount) + " fiducials");
            for (int i = 0; i < kFiducialCount; ++i)
                photo.fiducials[i] = {fids[i][0].get<double>(), fids[i][1].get<double>()};
            photo.mask = p.value("mask", "");
            photo.gt_normals = p.value("gt_normals", "");
            photo.gt_depth = p.value("gt_depth", "");
            photo.id = p.value("id", "");
            if (photo.id.empty())
                photo.id = std::filesystem::path(photo.file).stem().string();
            m.photos.push_back(std::move(photo));
        }
        m.template_normals_file = doc.value("template_normals_file", "");
        if (doc.contains("reference_fiducials")) {
            for (const auto& [key, value] : doc.at("reference_fiducials").items()) {
                Fiducials f;
                for (int i = 0; i < kFiducialCount; ++i)
                    f[i] = {value[i][0].get<double>(), value[i][1].get<double>()};
                m.reference_fiducials[std::stoi(key)] = f;
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ManifestParseError(path.string() + ": " + e.what());
    }
    return m;
}

inline void write_manifest(const std::filesystem::path& path, const Manifest& m) {
    nlohmann::json doc;
    doc["photos"] = nlohmann::json::array();
    for (const auto& p : m.photos) {
        nlohmann::json entry;
        entry["file"] = p.file;
        entry["azimuth"] = p.azimuth;
        auto fids = nlohmann::json::array();
        for (const auto& f : p.fiducials) fids.push_back({f.x(), f.y()});
        entry["fiducials"] = fids;
        if (!p.mask.empty()) entry["mask"] = p.mask;
        if (!p.gt_normals.empty()) entry["gt_normals"] = p.gt_normals;
        if (!p.gt_depth.empty()) entry["gt_depth"] = p.gt_depth;
        if (!p.id.empty()) entry["id"] = p.id;
        doc["photos"].push_back(std::move(entry));
    }
    if (!m.template_normals_file.empty())
        doc["template_normals_file"] = m.template_normals_file;
    if (!m.reference_fiducials.empty()) {
        nlohmann::json refs;
        for (const auto& [cluster, fids] : m.reference_fiducials) {
            auto arr = nlohmann::json::array();
            for (const auto& f : fids) arr.push_back({f.x(), f.y()});
            refs[std::to_string(cluster)] = arr;
        }
        doc["reference_fiducials"] = refs;
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << doc.dump(2) << "\n";
    if (!out) throw IoError("short write on " + path.string());
}

}  // namespace headgrow

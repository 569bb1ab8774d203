#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "headgrow/errors.hpp"
#include "headgrow/grow.hpp"

namespace headgrow {

/// Every tunable of a reconstruction run, serializable so each run can record
/// the exact configuration it used.
struct RunConfig {
    std::uint64_t seed = 1234567;
    int workers = 0;  // 0 = resolve from HEADGROW_THREADS / hardware

    double nz_degenerate = 0.05;       // in-plane normal threshold
    double blend_band = 10.0;          // stitch band width, pixels
    double residual_gate = 2.0;        // photo-subset gate, multiples of the median
    bool min_photo_fraction = true;    // require >= n/3 photos per pixel
    double average_min_coverage = 0.25;
    double merge_depth_tolerance = 0.0;  // <= 0 disables the merge depth gate
    double edge_filter_factor = 5.0;
    double solver_tolerance = 1e-8;

    std::vector<int> clusters;  // empty = every cluster in the dataset
    std::vector<double> fractions = {1.0, 0.5, 0.25, 0.125, 0.0625};

    void validate() const {
        if (nz_degenerate <= 0 || blend_band < 0 || residual_gate <= 0 ||
            average_min_coverage <= 0 ||
            edge_filter_factor <= 0 || solver_tolerance <= 0)
            throw ManifestParseError("config thresholds must be positive");
        for (double f : fractions)
            if (f <= 0.0 || f > 1.0)
                throw ManifestParseError("ablation fractions must lie in (0, 1]");
    }
};

inline void to_json(nlohmann::json& j, const RunConfig& c) {
    j = nlohmann::json{{"seed", c.seed},
                       {"workers", c.workers},
                       {"nz_degenerate", c.nz_degenerate},
                       {"blend_band", c.blend_band},
                       {"residual_gate", c.residual_gate},
                       {"min_photo_fraction", c.min_photo_fraction},
                       {"average_min_coverage", c.average_min_coverage},
                       {"merge_depth_tolerance", c.merge_depth_tolerance},
                       {"edge_filter_factor", c.edge_filter_factor},
                       {"solver_tolerance", c.solver_tolerance},
                       {"clusters", c.clusters},
                       {"fractions", c.fractions}};
}

inline void from_json(const nlohmann::json& j, RunConfig& c) {
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
    c.nz_degenerate = j.value("nz_degenerate", c.nz_degenerate);
    c.blend_band = j.value("blend_band", c.blend_band);
    c.residual_gate = j.value("residual_gate", c.residual_gate);
    c.min_photo_fraction = j.value("min_photo_fraction", c.min_photo_fraction);
    c.average_min_coverage = j.value("average_min_coverage", c.average_min_coverage);
    c.merge_depth_tolerance = j.value("merge_depth_tolerance", c.merge_depth_tolerance);
    c.edge_filter_factor = j.value("edge_filter_factor", c.edge_filter_factor);
    c.solver_tolerance = j.value("solver_tolerance", c.solver_tolerance);
    c.clusters = j.value("clusters", c.clusters);
    c.fractions = j.value("fractions", c.fractions);
}

/// Defaults overlaid with the fields present in a JSON file.
inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ManifestParseError("config " + path.string() + ": " + e.what());
    }
    RunConfig c = j.get<RunConfig>();
    c.validate();
    return c;
}

inline grow::GrowOptions grow_options(const RunConfig& c) {
    grow::GrowOptions g;
    g.normals.residual_gate = c.residual_gate;
    g.normals.min_photo_fraction = c.min_photo_fraction;
    g.depth.nz_degenerate = c.nz_degenerate;
    g.depth.tolerance = c.solver_tolerance;
    g.blend_band = c.blend_band;
    g.merge_depth_tolerance = c.merge_depth_tolerance;
    g.edge_filter_factor = c.edge_filter_factor;
    g.workers = c.workers;
    return g;
}

}  // namespace headgrow

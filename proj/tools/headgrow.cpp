#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "headgrow/config.hpp"
#include "headgrow/eval.hpp"
#include "headgrow/grow.hpp"
#include "headgrow/ingest.hpp"
#include "headgrow/mesh_io.hpp"
#include "headgrow/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since)
        .count();
}

void write_json(const fs::path& path, const json& doc) {
    std::ofstream out(path);
    if (!out) throw headgrow::IoError("cannot write " + path.string());
    out << doc.dump(2) << "\n";
}

struct SynthArgs {
    std::string out_dir;
    int lights = 100;
    std::vector<double> poses = {0, 30, 60, 90, -30, -60, -90};
    int size = 128;
    int rings = 48;
    std::uint64_t seed = 1234567;
    double ambient = 0.2;    // fraction of full intensity scale
    double intensity = 0.8;  // fraction of full intensity scale
    double albedo = 1.0;
};

int cmd_synth(const SynthArgs& args) {
    headgrow::synth::SyntheticScene scene;
    scene.mesh = headgrow::synth::make_procedural_head(args.rings);
    for (int k = 0; k < headgrow::kFiducialCount; ++k)
        scene.fiducial_vertices[k] = scene.mesh.fiducial_vertices[k];
    scene.albedo = args.albedo;
    scene.lights = headgrow::synth::sample_lights(args.lights, args.seed, 255.0 * args.ambient,
                                                  255.0 * args.intensity);
    scene.poses = args.poses;
    scene.width = args.size;
    scene.height = args.size;

    fs::path manifest = headgrow::synth::make_dataset(scene, args.out_dir);

    json run;
    run["command"] = "synth";
    run["seed"] = args.seed;
    run["lights"] = args.lights;
    run["poses"] = args.poses;
    run["size"] = args.size;
    run["rings"] = args.rings;
    run["ambient"] = args.ambient;
    run["intensity"] = args.intensity;
    run["albedo"] = args.albedo;
    write_json(fs::path(args.out_dir) / "synth_run.json", run);

    std::cout << manifest.string() << "\n";
    return 0;
}

json pose_to_json(const Eigen::Affine3d& t) {
    json rows = json::array();
    for (int r = 0; r < 4; ++r) {
        json row = json::array();
        for (int c = 0; c < 4; ++c) row.push_back(t.matrix()(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

struct PipelineRun {
    headgrow::ClusterSet set;
    headgrow::grow::GrowState state;
    double load_ms = 0.0;
    double grow_ms = 0.0;
};

PipelineRun run_pipeline(const fs::path& manifest, const headgrow::RunConfig& config) {
    PipelineRun run;
    auto t0 = std::chrono::steady_clock::now();
    headgrow::ingest::LoadOptions lopts;
    lopts.average_min_coverage = config.average_min_coverage;
    lopts.workers = config.workers;
    run.set = headgrow::ingest::load_collection(manifest, lopts);
    run.load_ms = elapsed_ms(t0);

    auto t1 = std::chrono::steady_clock::now();
    const std::vector<int>* filter = config.clusters.empty() ? nullptr : &config.clusters;
    run.state = headgrow::grow::run_growing(run.set, headgrow::grow_options(config), filter);
    run.grow_ms = elapsed_ms(t1);
    return run;
}

int cmd_reconstruct(const fs::path& manifest, const fs::path& out_dir,
                    const headgrow::RunConfig& config) {
    fs::create_directories(out_dir);
    PipelineRun run = run_pipeline(manifest, config);

    headgrow::save_ply(out_dir / "mesh.ply", run.state.mesh);
    headgrow::save_obj(out_dir / "mesh.obj", run.state.mesh);

    json clusters = json::array();
    for (int id : run.state.completed) {
        const auto& rc = run.state.recon.at(id);
        headgrow::write_float_image(out_dir / ("depth_" + std::to_string(id) + ".hgfi"),
                                    headgrow::depth_to_image(rc.depth));
        headgrow::write_float_image(out_dir / ("normals_" + std::to_string(id) + ".hgfi"),
                                    headgrow::normals_to_image(rc.normals));
        json c;
        c["cluster"] = id;
        c["photos"] = run.set.clusters.at(id).photos.size();
        c["valid_pixels"] = rc.normals.valid_count();
        c["pose_refined"] = rc.pose_refined;
        c["camera_from_world"] = pose_to_json(rc.camera_from_world);
        clusters.push_back(std::move(c));
    }

    json log;
    log["command"] = "reconstruct";
    log["manifest"] = manifest.string();
    log["config"] = config;
    log["completed"] = run.state.completed;
    log["vertices"] = run.state.mesh.vertex_count();
    log["faces"] = run.state.mesh.face_count();
    log["clusters"] = std::move(clusters);
    log["timings_ms"] = {{"load", run.load_ms}, {"grow", run.grow_ms}};
    write_json(out_dir / "run.json", log);

    std::cout << "mesh: " << (out_dir / "mesh.ply").string() << " (" << run.state.mesh.vertex_count()
              << " vertices, " << run.state.mesh.face_count() << " faces)\n";
    return 0;
}

int cmd_eval(const fs::path& manifest_path, const fs::path& out_dir,
             const headgrow::RunConfig& config, bool ablate) {
    fs::create_directories(out_dir);
    headgrow::Manifest manifest = headgrow::read_manifest(manifest_path);
    PipelineRun run = run_pipeline(manifest_path, config);
    const fs::path base = manifest_path.parent_path();

    headgrow::eval::ReprojectionOptions ropts;
    ropts.workers = config.workers;
    headgrow::eval::ReprojectionResult reproj =
        headgrow::eval::reprojection_error(run.state, run.set, ropts);

    std::ofstream csv(out_dir / "eval.csv");
    csv << "photo_id,cluster,rms,pixels\n";
    for (const auto& s : reproj.per_photo)
        csv << s.photo_id << "," << s.cluster_id << "," << s.rms << "," << s.pixel_count << "\n";

    json report;
    report["command"] = "eval";
    report["manifest"] = manifest_path.string();
    report["config"] = config;
    report["reprojection"] = {{"mean", reproj.mean},
                              {"stddev", reproj.stddev},
                              {"photos", reproj.per_photo.size()}};

    // Ground-truth comparisons wherever the manifest provides them.
    json per_cluster = json::array();
    for (int id : run.state.completed) {
        const auto& rc = run.state.recon.at(id);
        json c;
        c["cluster"] = id;
        c["photos"] = run.set.clusters.at(id).photos.size();
        double cluster_sum = 0.0;
        long cluster_n = 0;
        for (const auto& s : reproj.per_photo)
            if (s.cluster_id == id) {
                cluster_sum += s.rms;
                ++cluster_n;
            }
        if (cluster_n > 0) c["reprojection_mean"] = cluster_sum / cluster_n;

        for (const auto& entry : manifest.photos) {
            if (headgrow::ingest::assign_cluster(entry.azimuth) != id || entry.gt_normals.empty())
                continue;
            headgrow::NormalField gt_normals =
                headgrow::normals_from_image(headgrow::read_float_image(base / entry.gt_normals));
            headgrow::eval::AngularStats ang =
                headgrow::eval::normal_angular_error(rc.normals, gt_normals);
            c["angular_median_deg"] = ang.median_deg;
            c["angular_mean_deg"] = ang.mean_deg;
            c["angular_pixels"] = ang.pixel_count;
            if (!entry.gt_depth.empty()) {
                headgrow::DepthMap gt_depth =
                    headgrow::depth_from_image(headgrow::read_float_image(base / entry.gt_depth));
                c["depth_rmse"] = headgrow::eval::depth_rmse(rc.depth, gt_depth);
            }
            break;
        }
        per_cluster.push_back(std::move(c));
    }
    report["per_cluster"] = std::move(per_cluster);

    headgrow::eval::SeamStats seams = headgrow::eval::seam_discontinuity(run.state);
    report["seam"] = {{"mean_gap", seams.mean_gap},
                      {"p95_gap", seams.p95_gap},
                      {"edges", seams.edge_count}};

    // View coverage against the exported ground-truth mesh, when present.
    const fs::path gt_mesh_path = base / "gt" / "mesh.ply";
    const fs::path gt_info_path = base / "gt" / "info.json";
    if (fs::exists(gt_mesh_path) && fs::exists(gt_info_path)) {
        headgrow::HeadMesh gt_mesh = headgrow::load_mesh(gt_mesh_path);
        std::ifstream in(gt_info_path);
        json info;
        in >> info;
        std::vector<int> fid_ids = info.at("fiducial_vertices").get<std::vector<int>>();
        std::vector<Eigen::Vector3d> ref_points;
        for (int v : fid_ids) ref_points.push_back(gt_mesh.vertices.at(v));
        headgrow::HeadMesh aligned = headgrow::eval::align_by_fiducials(run.state.mesh, ref_points);
        std::vector<double> azimuths;
        for (int b : headgrow::kClusterBins) azimuths.push_back(b);
        std::vector<double> cov = headgrow::eval::view_coverage(
            aligned, gt_mesh, azimuths, run.set.clusters.at(0).width(),
            run.set.clusters.at(0).height());
        json cov_json = json::object();
        for (std::size_t i = 0; i < azimuths.size(); ++i)
            cov_json[std::to_string(static_cast<int>(azimuths[i]))] = cov[i];
        report["view_coverage"] = std::move(cov_json);
    }

    if (ablate) {
        auto rows = headgrow::eval::ablate_photo_count(run.set, config.fractions, config.seed,
                                                       headgrow::grow_options(config), ropts,
                                                       config.average_min_coverage);
        std::ofstream acsv(out_dir / "ablation.csv");
        acsv << "fraction,photos,status,reprojection_mean,reprojection_std\n";
        json arr = json::array();
        for (const auto& r : rows) {
            acsv << r.fraction << "," << r.photos_used << "," << r.status << ",";
            if (r.ok)
                acsv << r.reprojection_mean << "," << r.reprojection_std;
            else
                acsv << ",";
            acsv << "\n";
            json jr;
            jr["fraction"] = r.fraction;
            jr["photos"] = r.photos_used;
            jr["status"] = r.status;
            if (r.ok) {
                jr["reprojection_mean"] = r.reprojection_mean;
                jr["reprojection_std"] = r.reprojection_std;
            }
            arr.push_back(std::move(jr));
        }
        report["ablation"] = std::move(arr);
    }

    write_json(out_dir / "eval.json", report);
    std::cout << "reprojection " << reproj.mean << " +- " << reproj.stddev << " over "
              << reproj.per_photo.size() << " photos\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Head reconstruction from pose-clustered photo collections"};
    app.require_subcommand(1);

    std::string config_path;
    headgrow::RunConfig config;

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic Lambertian dataset");
    synth->add_option("--out", synth_args.out_dir, "Output directory")->required();
    synth->add_option("--lights", synth_args.lights, "Lights per pose");
    synth->add_option("--poses", synth_args.poses, "Azimuth poses in degrees");
    synth->add_option("--size", synth_args.size, "Image width and height");
    synth->add_option("--rings", synth_args.rings, "Head mesh tessellation");
    synth->add_option("--seed", synth_args.seed, "Light-sampling seed");
    synth->add_option("--ambient", synth_args.ambient, "Ambient level, fraction of full scale");
    synth->add_option("--intensity", synth_args.intensity,
                      "Directional level, fraction of full scale");
    synth->add_option("--albedo", synth_args.albedo, "Surface reflectance in [0, 1]");

    std::string manifest, out_dir;
    std::vector<int> cluster_filter;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--manifest", manifest, "Dataset manifest JSON")->required();
        cmd->add_option("--out", out_dir, "Output directory")->required();
        cmd->add_option("--config", config_path, "JSON config file");
        cmd->add_option("--seed", config.seed, "Run seed");
        cmd->add_option("--workers", config.workers, "Worker threads (0 = auto)");
        cmd->add_option("--clusters", cluster_filter, "Restrict to these azimuth clusters");
    };

    auto* reconstruct = app.add_subcommand("reconstruct", "Run the growing reconstruction");
    add_common(reconstruct);

    bool ablate = false;
    auto* eval = app.add_subcommand("eval", "Reconstruct and score against the dataset");
    add_common(eval);
    eval->add_flag("--ablate", ablate, "Run the photo-count ablation table");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(synth_args);

        if (!config_path.empty()) {
            headgrow::RunConfig loaded = headgrow::load_config(config_path);
            // Command-line seed/workers/clusters win over the file.
            for (CLI::App* cmd : {reconstruct, eval})
                if (cmd->parsed()) {
                    if (cmd->count("--seed") == 0) config.seed = loaded.seed;
                    if (cmd->count("--workers") == 0) config.workers = loaded.workers;
                    loaded.seed = config.seed;
                    loaded.workers = config.workers;
                }
            loaded.clusters = cluster_filter.empty() ? loaded.clusters : cluster_filter;
            config = loaded;
        } else if (!cluster_filter.empty()) {
            config.clusters = cluster_filter;
        }
        config.validate();

        if (reconstruct->parsed()) return cmd_reconstruct(manifest, out_dir, config);
        if (eval->parsed()) return cmd_eval(manifest, out_dir, config, ablate);
    } catch (const headgrow::Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

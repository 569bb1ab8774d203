#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "headgrow/errors.hpp"
#include "headgrow/types.hpp"

namespace headgrow {

// ---------------------------------------------------------------------------
// ASCII OBJ. Vertices and triangular faces only; other statements ignored.
// Polygon faces are fan-triangulated.
// ---------------------------------------------------------------------------

inline HeadMesh load_obj(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open mesh " + path.string());
    HeadMesh mesh;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "v") {
            double x, y, z;
            if (!(ls >> x >> y >> z)) throw IoError("bad vertex line in " + path.string());
            mesh.vertices.emplace_back(x, y, z);
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string token;
            while (ls >> token) {
                // "i", "i/t", "i/t/n", "i//n"
                int v = std::stoi(token.substr(0, token.find('/')));
                if (v < 0) v = static_cast<int>(mesh.vertices.size()) + v + 1;
                idx.push_back(v - 1);
            }
            if (idx.size() < 3) throw IoError("bad face line in " + path.string());
            for (std::size_t k = 1; k + 1 < idx.size(); ++k)
                mesh.faces.push_back({idx[0], idx[static_cast<int>(k)], idx[k + 1]});
        }
    }
    for (const auto& f : mesh.faces)
        for (int v : f)
            if (v < 0 || v >= mesh.vertex_count())
                throw IoError("face index out of range in " + path.string());
    mesh.provenance.assign(mesh.vertices.size(), 0);
    return mesh;
}

inline void save_obj(const std::filesystem::path& path, const HeadMesh& mesh) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out.precision(9);
    for (const auto& v : mesh.vertices)
        out << "v " << v.x() << " " << v.y() << " " << v.z() << "\n";
    for (const auto& f : mesh.faces)
        out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
    if (!out) throw IoError("short write on " + path.string());
}

// ---------------------------------------------------------------------------
// ASCII PLY. Export carries per-vertex provenance as "property int cluster";
// import tolerates extra vertex properties and reads "cluster" when present.
// ---------------------------------------------------------------------------

inline void save_ply(const std::filesystem::path& path, const HeadMesh& mesh) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out.precision(9);
    out << "ply\nformat ascii 1.0\n";
    out << "element vertex " << mesh.vertices.size() << "\n";
    out << "property float x\nproperty float y\nproperty float z\n";
    out << "property int cluster\n";
    out << "element face " << mesh.faces.size() << "\n";
    out << "property list uchar int vertex_indices\n";
    out << "end_header\n";
    for (int i = 0; i < mesh.vertex_count(); ++i) {
        const auto& v = mesh.vertices[i];
        int prov = i < static_cast<int>(mesh.provenance.size()) ? mesh.provenance[i] : 0;
        out << v.x() << " " << v.y() << " " << v.z() << " " << prov << "\n";
    }
    for (const auto& f : mesh.faces)
        out << "3 " << f[0] << " " << f[1] << " " << f[2] << "\n";
    if (!out) throw IoError("short write on " + path.string());
}

inline HeadMesh load_ply(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open mesh " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != "ply") throw IoError("not a PLY file: " + path.string());

    long vertex_count = 0, face_count = 0;
    std::vector<std::string> vertex_props;
    std::string current_element;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt != "ascii") throw IoError("only ascii PLY supported: " + path.string());
        } else if (tag == "element") {
            std::string name;
            long count;
            ls >> name >> count;
            current_element = name;
            if (name == "vertex") vertex_count = count;
            else if (name == "face") face_count = count;
        } else if (tag == "property" && current_element == "vertex") {
            std::string type, name;
            ls >> type >> name;
            vertex_props.push_back(name);
        } else if (tag == "end_header") {
            break;
        }
    }

    HeadMesh mesh;
    mesh.vertices.reserve(vertex_count);
    mesh.provenance.reserve(vertex_count);
    for (long i = 0; i < vertex_count; ++i) {
        if (!std::getline(in, line)) throw IoError("truncated PLY vertices in " + path.string());
        std::istringstream ls(line);
        double x = 0, y = 0, z = 0;
        int cluster = 0;
        for (const auto& prop : vertex_props) {
            double v;
            if (!(ls >> v)) throw IoError("bad PLY vertex line in " + path.string());
            if (prop == "x") x = v;
            else if (prop == "y") y = v;
            else if (prop == "z") z = v;
            else if (prop == "cluster") cluster = static_cast<int>(v);
        }
        mesh.vertices.emplace_back(x, y, z);
        mesh.provenance.push_back(cluster);
    }
    for (long i = 0; i < face_count; ++i) {
        if (!std::getline(in, line)) throw IoError("truncated PLY faces in " + path.string());
        std::istringstream ls(line);
        int n;
        if (!(ls >> n) || n < 3) throw IoError("bad PLY face line in " + path.string());
        std::vector<int> idx(n);
        for (int k = 0; k < n; ++k)
            if (!(ls >> idx[k])) throw IoError("bad PLY face line in " + path.string());
        for (int k = 1; k + 1 < n; ++k) mesh.faces.push_back({idx[0], idx[k], idx[k + 1]});
    }
    for (const auto& f : mesh.faces)
        for (int v : f)
            if (v < 0 || v >= mesh.vertex_count())
                throw IoError("face index out of range in " + path.string());
    return mesh;
}

/// Dispatch on extension: .obj or .ply.
inline HeadMesh load_mesh(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(c));
    if (ext == ".obj") return load_obj(path);
    if (ext == ".ply") return load_ply(path);
    throw IoError("unsupported mesh format: " + path.string());
}

}  // namespace headgrow

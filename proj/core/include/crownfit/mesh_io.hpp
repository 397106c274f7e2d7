#pragma once

#include <filesystem>
#include <string_view>

#include "crownfit/mesh.hpp"

namespace crownfit {

enum class MeshFormat { Ply, Obj, Stl };

/// Picks the format from the file extension (.ply / .obj / .stl).
MeshFormat format_from_path(const std::filesystem::path& path);

/// PLY: ASCII or binary little-endian; face property `uchar label` fills
/// face_labels, vertex nx/ny/nz fill vertex_normals. OBJ: v / vn / f.
/// STL: binary (ASCII accepted on read). Parse errors carry the byte offset.
LabeledMesh load_mesh(const std::filesystem::path& path, MeshFormat format);
LabeledMesh load_mesh(const std::filesystem::path& path);

struct SaveOptions {
    bool binary = true;          // PLY only; STL is always binary
    bool write_labels = true;    // asking for labels on STL is an error
    bool write_normals = true;
};

/// Labels cannot be represented in OBJ: they are dropped and a warning is
/// recorded. Requesting labels for STL throws Unsupported.
void save_mesh(const LabeledMesh& mesh, const std::filesystem::path& path, MeshFormat format,
               const SaveOptions& options = {}, Warnings* warnings = nullptr);
void save_mesh(const LabeledMesh& mesh, const std::filesystem::path& path);

}  // namespace crownfit

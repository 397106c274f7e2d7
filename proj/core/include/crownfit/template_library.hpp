#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>

#include "crownfit/fdi.hpp"
#include "crownfit/mesh.hpp"

namespace crownfit {

/// Area-weighted centroid of every tooth class 1-16 present in the scan.
/// Throws Argument when the scan has no tooth-labelled faces.
std::map<std::uint8_t, Vec3> extract_tooth_centroids(const LabeledMesh& scan);

/// Population mean of per-scan tooth centroids. Classes never observed are
/// absent from the maps.
struct CentroidCurve {
    std::map<std::uint8_t, Vec3> mean;
    std::map<std::uint8_t, std::size_t> count;

    bool has(std::uint8_t cls) const { return mean.count(cls) != 0; }
};

CentroidCurve build_average_curve(std::span<const LabeledMesh> scans);

/// Mean Euclidean distance between a scan's centroids and the curve over the
/// classes both contain. Throws Argument when they share no class.
double curve_distance(const std::map<std::uint8_t, Vec3>& centroids, const CentroidCurve& curve);

/// Index of the scan closest to the curve; ties go to the lowest index.
std::size_t select_canonical(std::span<const LabeledMesh> scans, const CentroidCurve& curve);

/// Tooth classes kept for a partial template of the given side: the
/// canine, premolars and molars of one side, or incisors and canines.
std::set<std::uint8_t> partial_cut_spec(Side side);

/// Keeps faces labelled with a class in `cut` plus gingiva faces that have a
/// vertex within `gingiva_margin` mm of a kept tooth vertex. Coordinates are
/// copied exactly. Throws Argument when no tooth face survives.
LabeledMesh derive_partial(const LabeledMesh& master, const std::set<std::uint8_t>& cut, double gingiva_margin = 2.0);

struct TemplateKey {
    Jaw jaw = Jaw::Lower;
    Side side = Side::Left;
    bool full = false;

    auto operator<=>(const TemplateKey&) const = default;
    static TemplateKey master(Jaw j) { return {j, Side::Center, true}; }
    static TemplateKey partial(Jaw j, Side s) { return {j, s, false}; }
};

/// "upper", "lower_left", "upper_center", ...
std::string to_string(const TemplateKey& key);
TemplateKey template_key_from_string(const std::string& s);

struct TemplateLibrary {
    LabeledMesh master_upper;
    LabeledMesh master_lower;
    std::map<TemplateKey, LabeledMesh> partials;
    double gingiva_margin = 2.0;

    const LabeledMesh& master(Jaw jaw) const { return jaw == Jaw::Upper ? master_upper : master_lower; }
    /// Throws Argument for a missing partial.
    const LabeledMesh& partial(Jaw jaw, Side side) const;
    const LabeledMesh& get(const TemplateKey& key) const;
    /// Throws Validation unless both masters and all six partials exist.
    void validate() const;
};

/// Derives the six partials from the two masters.
TemplateLibrary make_library(LabeledMesh master_upper, LabeledMesh master_lower, double gingiva_margin = 2.0);

/// Picks the canonical scan of each jaw population and derives the partials.
TemplateLibrary build_library(std::span<const LabeledMesh> upper_scans, std::span<const LabeledMesh> lower_scans,
                              double gingiva_margin = 2.0);

/// Directory with one binary PLY per template and manifest.json.
void save_library(const TemplateLibrary& lib, const std::filesystem::path& dir);
TemplateLibrary load_library(const std::filesystem::path& dir);

}  // namespace crownfit

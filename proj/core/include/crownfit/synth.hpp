#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "crownfit/alignment.hpp"
#include "crownfit/fdi.hpp"
#include "crownfit/mesh.hpp"

namespace crownfit::synth {

// Synthetic jaws live in the canonical frame: occlusal plane = XY, anterior
// toward -y, patient left toward +x, lower occlusal +z, upper occlusal -z.
// Arch centre-line: x = A sin(t), y = B (1 - cos(t)).

struct ToothSpec {
    int fdi = 0;
    double mesiodistal = 0;   // full width along the arch (mm)
    double buccolingual = 0;  // full width across the arch (mm)
    double height = 0;        // full superellipsoid height (mm)
    bool prepared = false;    // generated as a smooth stump, labelled 17
};

struct ArchSpec {
    Jaw jaw = Jaw::Lower;
    double arch_half_width = 25.0;  // A
    double arch_depth = 46.0;       // B
    std::vector<ToothSpec> teeth;
    double interproximal_gap = 0.5;
    double jitter_sigma = 0.0;  // per-axis Gaussian jitter of tooth centres in XY (mm)
    double size_jitter = 0.0;   // relative Gaussian jitter of tooth dimensions
    double edge_length = 0.7;   // target tessellation edge (mm)
    std::uint64_t seed = 0;
};

/// Tooth set of a scan category: full = positions 1-7 both sides, lateral
/// partial = positions 3-7 of one side, center = positions 1-3 both sides.
std::vector<int> teeth_for_class(ScanClass cls, Jaw jaw);
/// Standard dimensions for a tooth position in a jaw.
ToothSpec standard_tooth(int fdi);
/// Default arch ellipse (A, B) for a jaw.
std::pair<double, double> arch_shape(Jaw jaw);
ArchSpec arch_spec(Jaw jaw, const std::vector<int>& fdis, std::uint64_t seed = 0, double jitter_sigma = 0.0);
ArchSpec arch_spec_for_class(ScanClass cls, Jaw jaw, std::uint64_t seed = 0, double jitter_sigma = 0.0);

struct ArchTruth {
    Jaw jaw = Jaw::Lower;
    ScanClass scan_class = ScanClass::FullLower;
    std::map<std::uint8_t, Vec3> centroids;  // label -> area-weighted centroid of its faces
    std::map<std::uint8_t, int> label_fdi;   // label class -> FDI (17 -> prepared tooth)
    std::map<int, Vec3> tooth_centers;       // FDI -> placement anchor on the arch curve (z = 0)
    std::map<int, Vec3> surface_centroids;   // FDI -> surface centroid of the finely sampled parametric tooth
};

struct SyntheticArch {
    LabeledMesh mesh;  // closed components, labels, vertex normals
    ArchTruth truth;
};

/// Scan category implied by a tooth set (both lateral segments -> full).
ScanClass classify_tooth_set(Jaw jaw, const std::vector<int>& fdis);

/// Throws Argument on invalid/duplicate FDI codes, teeth from the other jaw
/// or overlapping tooth footprints.
SyntheticArch generate_arch(const ArchSpec& spec);

struct PerturbSpec {
    Vec3 rotation_deg = Vec3::Zero();     // symmetric range per axis
    Vec3 translation_mm = Vec3::Zero();   // symmetric range per axis
    double scale_min = 1.0, scale_max = 1.0;
    std::uint64_t seed = 0;

    /// +-5 deg X/Y, +-15 deg Z, scale [0.9, 1.1], +-5 mm X/Y, +-2 mm Z.
    static PerturbSpec augmentation(std::uint64_t seed);
};

struct Perturbation {
    RigidTransform transform;  // applied after scaling: x -> R (s x) + t
    double scale = 1.0;
    Vec3 angles_deg = Vec3::Zero();  // sampled X, Y, Z angles; R = Rz Ry Rx
};

Perturbation sample_perturbation(const PerturbSpec& spec);
LabeledMesh apply_perturbation(const LabeledMesh& mesh, const Perturbation& p);
std::pair<LabeledMesh, Perturbation> perturb_pose(const LabeledMesh& mesh, const PerturbSpec& spec);

// ---- crowns and simple solids -------------------------------------------

enum class CrownKind { BumpedPosterior, SmoothAnterior };

struct CrownDims {
    double half_mesiodistal = 5.0;  // along local +x (mesial)
    double half_buccolingual = 4.5; // along local +y (buccal)
    double height = 6.5;            // plateau height along local +z (occlusal)
    int cusp_count = 5;             // BumpedPosterior only
    double cusp_height = 0.8;       // tallest cusp amplitude (mm); later cusps 8% lower each
    double cell = 0.25;             // heightfield grid spacing (mm)
};

struct CrownFixture {
    CrownTemplate crown;                     // region labels 101/102/103
    std::vector<std::uint32_t> apex_vertices;  // in descending height order
    std::vector<double> apex_heights;
};

/// Closed heightfield crown: flat bottom at z = 0, vertical walls, plateau
/// top with Gaussian cusps whose apexes sit exactly on grid vertices.
CrownFixture generate_crown_fixture(CrownKind kind, const CrownDims& dims = {});

/// Closed heightfield solid over [-hx, hx] x [-hy, hy] with top z = top(x, y) on
/// a grid of spacing `cell`. Region labels as for crowns.
LabeledMesh heightfield_solid(double hx, double hy, double cell, double bottom_z,
                              const std::function<double(double, double)>& top);

/// Heightfield plate with Gaussian bumps; returns apex vertex ids in input order.
struct BumpSpec {
    double x, y, amplitude, sigma;
};
LabeledMesh bump_plate(double half_size, double cell, double base_height, const std::vector<BumpSpec>& bumps,
                       std::vector<std::uint32_t>* apex_vertices = nullptr);

/// Axis-aligned closed box with `subdivisions` segments per edge.
LabeledMesh make_box(const Vec3& lo, const Vec3& hi, int subdivisions = 1);
/// Subdivided icosahedron projected to the sphere.
LabeledMesh make_icosphere(const Vec3& center, double radius, int subdivisions = 4);

/// Crown-fitting scene in the canonical frame: a crown between two box
/// neighbours along x, under (lower jaw, occlusal +z) an opposing slab that
/// dips into the crown's top.
struct FittingCase {
    LabeledMesh crown;      // closed, region labels
    LabeledMesh neighbors;  // two closed boxes
    LabeledMesh opposing;   // closed slab
    int fdi = 36;
    double left_gap = 0.0, right_gap = 0.0;  // wall distance minus crown half-width (negative = overlap)
    double penetration = 0.0;                // slab bottom below the crown's highest point
};

/// Posterior cases use a bumped crown at FDI 36, anterior ones a smooth crown
/// at FDI 31. Gaps, penetration and a small crown offset are drawn from the seed.
FittingCase generate_fitting_case(std::uint64_t seed, bool posterior = true);

/// Flips face winding of components with negative signed volume.
void orient_outward(LabeledMesh& mesh);
double signed_volume(const LabeledMesh& mesh);

}  // namespace crownfit::synth

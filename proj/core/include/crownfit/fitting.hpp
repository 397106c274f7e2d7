#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "crownfit/collision.hpp"
#include "crownfit/mesh.hpp"

namespace crownfit {

struct FittingParams {
    double v_int_threshold = 1e-6;  // mm³
    double shrink = 0.99;
    double grow = 1.01;
    double delta = 0.1;           // tap-down and shift step (mm)
    double falloff_radius = 1.0;  // tap-down neighbourhood (mm)
    std::size_t cusp_count = 5;
    double cusp_normal_dot_min = 0.5;
    double proximity_dist = 0.2;  // near-collision distance (mm)
    std::size_t max_scale_iters = 500;
    std::size_t max_tap_rounds = 50;
    std::size_t max_shift_iters = 200;
    double volume_resolution = 0.05;  // column spacing for intersection volumes (mm)

    /// Throws Config when a value is outside its range.
    void validate() const;
};

/// Direction toward the antagonist: +z for lower teeth, -z for upper teeth.
Vec3 occlusal_direction(int fdi);

struct CuspSet {
    std::vector<std::uint32_t> vertices;  // descending height
    std::vector<double> heights;          // along the occlusal direction (mm)

    std::size_t size() const { return vertices.size(); }
    bool empty() const { return vertices.empty(); }
};

/// Vertices strictly higher along `occlusal_dir` than all their one-ring
/// neighbours and whose normal has dot > cusp_normal_dot_min with it; the
/// cusp_count highest, ties broken by vertex index. Border vertices of open
/// surfaces never qualify. Normals are estimated when the mesh has none.
CuspSet detect_cusps(const LabeledMesh& crown, const Vec3& occlusal_dir, const FittingParams& params = {});

struct ScalingReport {
    bool initial_collision = false;  // Case A
    double initial_volume = 0.0;
    double final_scale = 1.0;
    double final_volume = 0.0;
    Vec3 center = Vec3::Zero();        // scaling centre (crown vertex mean)
    std::vector<double> scale_trace;   // cumulative scale after each step, final shrink last
    std::vector<double> volume_trace;  // intersection volume after each step
};

struct ScaledCrown {
    LabeledMesh mesh;
    ScalingReport report;
};

/// Step 1: shrink by `shrink` while the intersection volume with the
/// neighbours exceeds the threshold (Case A) or grow by `grow` until it does
/// (Case B), then one final shrink. Scaling is about the crown's vertex mean
/// and always applied to the input coordinates with the cumulative factor.
/// Throws NonConvergence after max_scale_iters steps.
ScaledCrown interproximal_adapt(const LabeledMesh& crown, const LabeledMesh& neighbors, const FittingParams& params = {});

/// Step 2: translate so the crown's vertex mean matches, in XY, the midpoint
/// of the area-weighted centroids of the two neighbour components.
/// Throws Argument unless `neighbors` has exactly two edge-connected components.
LabeledMesh center_between_neighbors(const LabeledMesh& crown, const LabeledMesh& neighbors, Vec3* shift = nullptr);

struct TapReport {
    CuspSet cusps;
    bool proximity_pass = false;  // no direct collision: one near-collision round
    std::vector<std::size_t> colliding_per_round;
    std::vector<std::uint32_t> displaced_vertices;  // ascending
    double max_displacement = 0.0;
};

/// Mode A. Cusps are detected once. A cusp collides when a crown vertex
/// within falloff_radius of it lies inside the opposing mesh. While any cusp
/// collides, the vertices within falloff_radius of the colliding cusps move
/// by -delta * exp(-d² / (2 (falloff_radius / 2)²)) along `occlusal_dir`
/// (largest weight when neighbourhoods overlap; d measured on the input).
/// Without any initial direct collision, cusp apexes nearer than
/// proximity_dist to the opposing surface get a single round instead.
/// Vertices outside every tapped neighbourhood keep their exact coordinates.
/// Throws NonConvergence after max_tap_rounds rounds.
LabeledMesh occlusal_correct_posterior(const LabeledMesh& crown, const LabeledMesh& opposing, const Vec3& occlusal_dir,
                                       const FittingParams& params = {}, TapReport* report = nullptr);

struct ShiftReport {
    std::size_t shifts = 0;
    double total_shift_mm = 0.0;
};

/// Mode B: translate the whole crown by -delta along `occlusal_dir` while it
/// touches the opposing mesh. Throws NonConvergence after max_shift_iters.
LabeledMesh occlusal_correct_anterior(const LabeledMesh& crown, const LabeledMesh& opposing, const Vec3& occlusal_dir,
                                      const FittingParams& params = {}, ShiftReport* report = nullptr);

enum class OcclusalMode { Posterior, Anterior, Skipped };
const char* to_string(OcclusalMode m);

struct FittingReport {
    ScalingReport scaling;
    Vec3 centering_shift = Vec3::Zero();
    std::size_t recentre_shrinks = 0;  // extra shrink steps when centering re-created contact
    double recentre_scale = 1.0;
    OcclusalMode mode = OcclusalMode::Skipped;
    bool antagonist_missing = false;
    TapReport tap;
    ShiftReport shift;
    std::size_t clearance_shifts = 0;  // rigid delta steps after Mode A for non-cusp contact
    double residual_neighbor_volume = 0.0;
    std::size_t vertices_inside_opposing = 0;
};

/// Steps 1-3. Mode A for posterior FDI positions (4-8), Mode B otherwise;
/// Step 3 is skipped when `opposing` is null. On a curved arch the centering
/// shift can push the crown back into a neighbour; it is then shrunk about its
/// vertex mean until clear again. Mode A only reshapes cusps, so crown
/// vertices elsewhere may still sit inside the antagonist afterwards; the
/// crown is then moved rigidly by -delta along the occlusal direction until
/// none does. Errors carry stage "fitting".
LabeledMesh fit_crown(const LabeledMesh& crown, const LabeledMesh& neighbors, const LabeledMesh* opposing, int fdi,
                      const FittingParams& params = {}, FittingReport* report = nullptr);

nlohmann::json to_json(const FittingReport& r);

}  // namespace crownfit

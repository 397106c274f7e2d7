#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "crownfit/features.hpp"
#include "crownfit/kdtree.hpp"
#include "crownfit/mesh.hpp"
#include "crownfit/spatial_index.hpp"
#include "crownfit/template_library.hpp"

namespace crownfit {

struct RegistrationParams {
    double voxel = 0.8;               // mm
    double fpfh_radius_factor = 7.0;  // FPFH radius = factor * voxel
    double edge_similarity = 0.95;
    std::size_t ransac_max_iters = 100000;
    double ransac_confidence = 0.999;
    double ransac_distance_threshold = 1.2;  // mm, 1.5 voxels
    double icp_max_corr_dist = 1.0;          // mm
    std::size_t icp_max_iters = 60;
    double tukey_k = 0.5;  // mm of point-to-plane residual
    std::uint64_t seed = 42;

    /// Throws Config on out-of-range values.
    void validate() const;
};

struct RegistrationResult {
    RigidTransform transform;  // source -> target
    double fitness = 0.0;      // source points with a target neighbour within icp_max_corr_dist
    double inlier_rmse = 0.0;  // over those points, mm
    std::string chosen_template;
};

/// Downsampled cloud with FPFH descriptors and search structures, reusable
/// across registrations against the same target.
struct PreparedCloud {
    PointCloud cloud;
    FpfhDescriptor fpfh;
    std::shared_ptr<const SpatialIndex> points_tree;
    std::shared_ptr<const KdTree<kFpfhDims>> feature_tree;
};

/// Voxel downsampling at params.voxel and FPFH at the scaled radius. The input
/// needs normals. Throws Argument with fewer than 3 points after downsampling.
PreparedCloud prepare_cloud(const PointCloud& cloud, const RegistrationParams& params);

struct CoarseDiagnostics {
    std::size_t correspondences = 0;
    std::size_t iterations = 0;
    std::size_t candidates_passed = 0;  // triples surviving the edge-length gate
    std::size_t best_inliers = 0;
};

/// Edge-length gate: every pair of corresponding edges has a length ratio
/// (short / long) of at least `similarity`.
bool edge_lengths_compatible(const std::array<Vec3, 3>& src, const std::array<Vec3, 3>& dst, double similarity);

/// Least-squares rigid motion mapping src[i] onto dst[i] (Kabsch).
RigidTransform kabsch(std::span<const Vec3> src, std::span<const Vec3> dst);

/// RANSAC over FPFH correspondences with three-point samples. The accepted
/// model has the most correspondences within ransac_distance_threshold and is
/// refitted on them. Throws CoarseFailure when no sample passes the gate.
RegistrationResult coarse_register(const PreparedCloud& source, const PreparedCloud& target,
                                   const RegistrationParams& params, CoarseDiagnostics* diagnostics = nullptr);
RegistrationResult coarse_register(const PointCloud& source, const PointCloud& target, const RegistrationParams& params);

struct IcpTrace {
    std::vector<double> objective;  // robust objective after each accepted iteration, starting with the initial pose
    std::size_t iterations = 0;
};

/// Tukey-weighted point-to-plane ICP with a backtracking step so the robust
/// objective never increases. Unmatched points contribute the saturated Tukey
/// value. From a rough start the Tukey scale is annealed: passes at tukey_k
/// times 4^m, widest first, until the scale covers three times the median
/// initial residual (capped by icp_max_corr_dist). The trace covers the final
/// pass at tukey_k. Throws RankDeficient when the weighted normal system
/// loses rank.
RegistrationResult fine_register(const PointCloud& source, const PointCloud& target, const RigidTransform& init,
                                 const RegistrationParams& params, IcpTrace* trace = nullptr);
RegistrationResult fine_register(const PointCloud& source, const PreparedCloud& target, const RigidTransform& init,
                                 const RegistrationParams& params, IcpTrace* trace = nullptr);

/// Fraction of source points within `max_dist` of the target after `t`, and
/// the RMS distance over those.
std::pair<double, double> evaluate_fitness(const PointCloud& source, const SpatialIndex& target, const RigidTransform& t,
                                           double max_dist);

struct RoutingAttempt {
    std::string template_key;
    bool coarse_failed = false;
    std::string failure;
    RegistrationResult result;
    double coarse_seconds = 0.0;
    double fine_seconds = 0.0;
};

struct RoutingReport {
    std::vector<RoutingAttempt> attempts;
};

/// Templates prepared once for repeated routing.
class PreparedLibrary {
public:
    PreparedLibrary(const TemplateLibrary& lib, const RegistrationParams& params);
    const PreparedCloud& get(const TemplateKey& key) const;
    const RegistrationParams& params() const { return params_; }

private:
    RegistrationParams params_;
    std::map<TemplateKey, PreparedCloud> prepared_;
};

/// Full classes register against the matching master; partial classes against
/// the upper and the lower partial of that side, highest fitness winning (upper
/// on ties). Throws RoutingFailure when every candidate fails the coarse stage.
RegistrationResult register_with_routing(const LabeledMesh& scan, ScanClass scan_class, const PreparedLibrary& lib,
                                         RoutingReport* report = nullptr);
RegistrationResult register_with_routing(const LabeledMesh& scan, ScanClass scan_class, const TemplateLibrary& lib,
                                         const RegistrationParams& params, RoutingReport* report = nullptr);

/// Cloud with vertex normals (estimated when the mesh has none).
PointCloud oriented_cloud(const LabeledMesh& mesh);

}  // namespace crownfit

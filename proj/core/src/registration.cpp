#include "crownfit/registration.hpp"

#include <algorithm>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <chrono>
#include <cmath>
#include <random>

namespace crownfit {

namespace {

double tukey_rho(double r, double k) {
    const double c = k * k / 6.0;
    if (std::abs(r) >= k) return c;
    const double u = 1.0 - (r / k) * (r / k);
    return c * (1.0 - u * u * u);
}

double tukey_weight(double r, double k) {
    if (std::abs(r) >= k) return 0.0;
    const double u = 1.0 - (r / k) * (r / k);
    return u * u;
}

RigidTransform twist(const Vec3& omega, const Vec3& v) {
    const double angle = omega.norm();
    const Mat3 r = angle > 0.0 ? Eigen::AngleAxisd(angle, omega / angle).toRotationMatrix() : Mat3::Identity();
    return RigidTransform(orthonormalize(r), v);
}

struct Objective {
    double value = 0.0;
    std::size_t matched = 0;
};

Objective robust_objective(const PointCloud& src, const PointCloud& tgt, const SpatialIndex& index,
                           const RigidTransform& t, const RegistrationParams& p, double k) {
    Objective o;
    const double max_d2 = p.icp_max_corr_dist * p.icp_max_corr_dist;
    for (const auto& s : src.points) {
        const Vec3 q = t.apply(s);
        const auto nb = index.nearest(q);
        if (nb.distance_sq > max_d2) {
            o.value += tukey_rho(k, k);
            continue;
        }
        ++o.matched;
        o.value += tukey_rho(tgt.normals[nb.index].dot(q - tgt.points[nb.index]), k);
    }
    return o;
}

// Tukey scales for the ICP passes, widest first and tukey_k last. The first
// covers three times the median initial residual (capped by the
// correspondence distance) so a rough start still has inliers to pull on.
std::vector<double> tukey_schedule(const PointCloud& src, const PointCloud& tgt, const SpatialIndex& index,
                                   const RigidTransform& t, const RegistrationParams& p) {
    const double max_d2 = p.icp_max_corr_dist * p.icp_max_corr_dist;
    std::vector<double> r;
    r.reserve(src.points.size());
    for (const auto& s : src.points) {
        const Vec3 q = t.apply(s);
        const auto nb = index.nearest(q);
        if (nb.distance_sq <= max_d2) r.push_back(std::abs(tgt.normals[nb.index].dot(q - tgt.points[nb.index])));
    }
    double start = p.tukey_k;
    if (!r.empty()) {
        auto mid = r.begin() + std::ptrdiff_t(r.size() / 2);
        std::nth_element(r.begin(), mid, r.end());
        start = std::min(p.icp_max_corr_dist, 3.0 * *mid);
    }
    std::vector<double> ks = {p.tukey_k};
    while (ks.back() < start) ks.push_back(ks.back() * 4.0);
    std::reverse(ks.begin(), ks.end());
    return ks;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void RegistrationParams::validate() const {
    auto bad = [](const std::string& what) { throw Error(ErrorKind::Config, "registration: " + what); };
    if (!(voxel > 0.0)) bad("voxel must be positive");
    if (!(fpfh_radius_factor > 0.0)) bad("fpfh_radius_factor must be positive");
    if (!(edge_similarity > 0.0 && edge_similarity <= 1.0)) bad("edge_similarity must lie in (0, 1]");
    if (ransac_max_iters == 0) bad("ransac_max_iters must be positive");
    if (!(ransac_confidence > 0.0 && ransac_confidence < 1.0)) bad("ransac_confidence must lie in (0, 1)");
    if (!(ransac_distance_threshold > 0.0)) bad("ransac_distance_threshold must be positive");
    if (!(icp_max_corr_dist > 0.0)) bad("icp_max_corr_dist must be positive");
    if (icp_max_iters == 0) bad("icp_max_iters must be positive");
    if (!(tukey_k > 0.0)) bad("tukey_k must be positive");
}

PointCloud oriented_cloud(const LabeledMesh& mesh) {
    if (mesh.has_normals() || mesh.faces.empty()) {
        PointCloud c = to_point_cloud(mesh);
        if (!c.has_normals()) throw Error(ErrorKind::Argument, "registration needs normals or faces");
        return c;
    }
    return to_point_cloud(estimate_vertex_normals(mesh));
}

PreparedCloud prepare_cloud(const PointCloud& cloud, const RegistrationParams& params) {
    params.validate();
    if (!cloud.has_normals()) throw Error(ErrorKind::Argument, "prepare_cloud: cloud has no normals");
    PreparedCloud out;
    out.cloud = voxel_downsample(cloud, params.voxel);
    if (out.cloud.size() < 3) throw Error(ErrorKind::Argument, "prepare_cloud: fewer than 3 points after downsampling");
    out.fpfh = compute_fpfh(out.cloud, params.fpfh_radius_factor * params.voxel);
    out.points_tree = std::make_shared<const SpatialIndex>(out.cloud.points);
    std::vector<KdTree<kFpfhDims>::Point> feats(out.fpfh.histograms.begin(), out.fpfh.histograms.end());
    out.feature_tree = std::make_shared<const KdTree<kFpfhDims>>(std::move(feats));
    return out;
}

bool edge_lengths_compatible(const std::array<Vec3, 3>& src, const std::array<Vec3, 3>& dst, double similarity) {
    for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j) {
            const double a = (src[i] - src[j]).norm();
            const double b = (dst[i] - dst[j]).norm();
            const double hi = std::max(a, b);
            if (hi == 0.0) continue;
            if (std::min(a, b) < similarity * hi) return false;
        }
    return true;
}

RigidTransform kabsch(std::span<const Vec3> src, std::span<const Vec3> dst) {
    if (src.size() != dst.size() || src.size() < 3) throw Error(ErrorKind::Argument, "kabsch: need >= 3 paired points");
    const Vec3 cs = vertex_mean(src), cd = vertex_mean(dst);
    Mat3 h = Mat3::Zero();
    for (std::size_t i = 0; i < src.size(); ++i) h += (src[i] - cs) * (dst[i] - cd).transpose();
    const Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 d = Mat3::Identity();
    d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0 ? -1.0 : 1.0;
    const Mat3 r = orthonormalize(svd.matrixV() * d * svd.matrixU().transpose());
    return RigidTransform(r, cd - r * cs);
}

std::pair<double, double> evaluate_fitness(const PointCloud& source, const SpatialIndex& target, const RigidTransform& t,
                                           double max_dist) {
    if (source.points.empty()) return {0.0, 0.0};
    std::size_t hits = 0;
    double sq = 0.0;
    for (const auto& p : source.points) {
        const auto nb = target.nearest(t.apply(p));
        if (nb.distance_sq <= max_dist * max_dist) ++hits, sq += nb.distance_sq;
    }
    return {double(hits) / double(source.points.size()), hits ? std::sqrt(sq / double(hits)) : 0.0};
}

RegistrationResult coarse_register(const PreparedCloud& source, const PreparedCloud& target,
                                   const RegistrationParams& params, CoarseDiagnostics* diagnostics) {
    params.validate();
    CoarseDiagnostics diag;
    const std::size_t n = source.cloud.size();
    std::vector<std::uint32_t> match(n);
    for (std::size_t i = 0; i < n; ++i) match[i] = target.feature_tree->nearest(source.fpfh.histograms[i]).index;
    diag.correspondences = n;

    const auto& sp = source.cloud.points;
    const auto& tp = target.cloud.points;
    const double thr2 = params.ransac_distance_threshold * params.ransac_distance_threshold;
    auto count_inliers = [&](const RigidTransform& t) {
        std::size_t c = 0;
        for (std::size_t i = 0; i < n; ++i) c += (t.apply(sp[i]) - tp[match[i]]).squaredNorm() <= thr2;
        return c;
    };

    std::mt19937_64 rng(params.seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::optional<RigidTransform> best;
    std::size_t best_inliers = 0;
    std::size_t max_iters = params.ransac_max_iters;
    const double log_fail = std::log(1.0 - params.ransac_confidence);
    std::size_t it = 0;
    for (; it < max_iters; ++it) {
        std::array<std::size_t, 3> idx{pick(rng), pick(rng), pick(rng)};
        if (idx[0] == idx[1] || idx[0] == idx[2] || idx[1] == idx[2]) continue;
        std::array<Vec3, 3> s{sp[idx[0]], sp[idx[1]], sp[idx[2]]};
        std::array<Vec3, 3> d{tp[match[idx[0]]], tp[match[idx[1]]], tp[match[idx[2]]]};
        if (!edge_lengths_compatible(s, d, params.edge_similarity)) continue;
        if ((s[1] - s[0]).cross(s[2] - s[0]).norm() < 1e-9 || (d[1] - d[0]).cross(d[2] - d[0]).norm() < 1e-9) continue;
        ++diag.candidates_passed;
        const RigidTransform t = kabsch(s, d);
        const std::size_t inl = count_inliers(t);
        if (inl > best_inliers) {
            best_inliers = inl;
            best = t;
            const double w = double(inl) / double(n);
            const double p_fail = 1.0 - w * w * w;
            if (p_fail <= 0.0) max_iters = std::min(max_iters, it + 1);
            else if (p_fail < 1.0) {
                const double need = std::ceil(log_fail / std::log(p_fail));
                if (need < double(max_iters)) max_iters = std::max(it + 1, std::size_t(need));
            }
        }
    }
    diag.iterations = it;
    diag.best_inliers = best_inliers;
    if (diagnostics) *diagnostics = diag;
    if (!best || best_inliers < 3)
        throw Error(ErrorKind::CoarseFailure,
                    "coarse registration: no correspondence triple survived pruning (" + std::to_string(diag.iterations) +
                        " iterations, " + std::to_string(diag.candidates_passed) + " candidates, best inliers " +
                        std::to_string(best_inliers) + ")");

    // refit on the inlier set until it stops growing
    RigidTransform t = *best;
    for (int round = 0; round < 5; ++round) {
        std::vector<Vec3> s, d;
        for (std::size_t i = 0; i < n; ++i)
            if ((t.apply(sp[i]) - tp[match[i]]).squaredNorm() <= thr2) s.push_back(sp[i]), d.push_back(tp[match[i]]);
        if (s.size() < 3) break;
        const RigidTransform refit = kabsch(s, d);
        if (count_inliers(refit) < s.size()) break;
        const bool same = count_inliers(refit) == s.size();
        t = refit;
        if (same) break;
    }

    RegistrationResult out;
    out.transform = t;
    std::tie(out.fitness, out.inlier_rmse) =
        evaluate_fitness(source.cloud, *target.points_tree, t, params.icp_max_corr_dist);
    return out;
}

RegistrationResult coarse_register(const PointCloud& source, const PointCloud& target, const RegistrationParams& params) {
    return coarse_register(prepare_cloud(source, params), prepare_cloud(target, params), params);
}

RegistrationResult fine_register(const PointCloud& source, const PreparedCloud& target, const RigidTransform& init,
                                 const RegistrationParams& params, IcpTrace* trace) {
    params.validate();
    const PointCloud& tgt = target.cloud;
    if (!tgt.has_normals()) throw Error(ErrorKind::Argument, "fine_register: target has no normals");
    if (source.points.empty()) throw Error(ErrorKind::Argument, "fine_register: empty source");
    const SpatialIndex& index = *target.points_tree;
    const double max_d2 = params.icp_max_corr_dist * params.icp_max_corr_dist;

    RigidTransform t = init;
    IcpTrace local;
    // Gauss-Newton with backtracking at a fixed scale; the objective at that
    // scale never increases. Only the final pass is traced.
    auto pass = [&](double k, IcpTrace& tr) {
        Objective current = robust_objective(source, tgt, index, t, params, k);
        tr.objective.push_back(current.value);
        for (std::size_t iter = 0; iter < params.icp_max_iters; ++iter) {
            ++tr.iterations;
            Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
            Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
            std::size_t used = 0;
            for (const auto& s : source.points) {
                const Vec3 q = t.apply(s);
                const auto nb = index.nearest(q);
                if (nb.distance_sq > max_d2) continue;
                const Vec3& n = tgt.normals[nb.index];
                const double r = n.dot(q - tgt.points[nb.index]);
                const double w = tukey_weight(r, k);
                if (w == 0.0) continue;
                Eigen::Matrix<double, 6, 1> j;
                j << q.cross(n), n;
                h += w * j * j.transpose();
                g += w * r * j;
                ++used;
            }
            if (used == 0) break;
            const Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> es(h);
            const double emax = es.eigenvalues().maxCoeff();
            if (!(emax > 0.0) || es.eigenvalues().minCoeff() < 1e-10 * emax)
                throw Error(ErrorKind::RankDeficient, "fine registration: point-to-plane system is rank deficient");
            const Eigen::Matrix<double, 6, 1> step = -h.ldlt().solve(g);
            if (step.norm() < 1e-6) break;

            double scale = 1.0;
            bool accepted = false;
            for (int b = 0; b < 12; ++b, scale *= 0.5) {
                const RigidTransform cand = twist(scale * step.head<3>(), scale * step.tail<3>()) * t;
                const Objective o = robust_objective(source, tgt, index, cand, params, k);
                if (o.value <= current.value) {
                    t = cand;
                    current = o;
                    accepted = true;
                    break;
                }
            }
            if (!accepted) break;
            tr.objective.push_back(current.value);
            if (scale * step.norm() < 1e-6) break;
        }
    };
    const auto ks = tukey_schedule(source, tgt, index, t, params);
    for (std::size_t i = 0; i + 1 < ks.size(); ++i) {
        IcpTrace scratch;
        pass(ks[i], scratch);
    }
    pass(ks.back(), local);
    RegistrationResult out;
    out.transform = t;
    std::tie(out.fitness, out.inlier_rmse) = evaluate_fitness(source, index, t, params.icp_max_corr_dist);
    if (trace) *trace = std::move(local);
    return out;
}

RegistrationResult fine_register(const PointCloud& source, const PointCloud& target, const RigidTransform& init,
                                 const RegistrationParams& params, IcpTrace* trace) {
    if (!target.has_normals()) throw Error(ErrorKind::Argument, "fine_register: target has no normals");
    PreparedCloud t;
    t.cloud = target;
    t.points_tree = std::make_shared<const SpatialIndex>(target.points);
    return fine_register(source, t, init, params, trace);
}

PreparedLibrary::PreparedLibrary(const TemplateLibrary& lib, const RegistrationParams& params) : params_(params) {
    lib.validate();
    for (Jaw j : {Jaw::Upper, Jaw::Lower}) {
        prepared_.emplace(TemplateKey::master(j), prepare_cloud(oriented_cloud(lib.master(j)), params));
        for (Side s : {Side::Left, Side::Right, Side::Center})
            prepared_.emplace(TemplateKey::partial(j, s), prepare_cloud(oriented_cloud(lib.partial(j, s)), params));
    }
}

const PreparedCloud& PreparedLibrary::get(const TemplateKey& key) const {
    const auto it = prepared_.find(key);
    if (it == prepared_.end()) throw Error(ErrorKind::Argument, "prepared library has no template " + to_string(key));
    return it->second;
}

RegistrationResult register_with_routing(const LabeledMesh& scan, ScanClass scan_class, const PreparedLibrary& lib,
                                         RoutingReport* report) {
    const RegistrationParams& params = lib.params();
    const PreparedCloud source = prepare_cloud(oriented_cloud(scan), params);
    std::vector<TemplateKey> keys;
    if (is_full(scan_class))
        keys.push_back(TemplateKey::master(scan_class == ScanClass::FullUpper ? Jaw::Upper : Jaw::Lower));
    else
        for (Jaw j : {Jaw::Upper, Jaw::Lower}) keys.push_back(TemplateKey::partial(j, partial_side(scan_class)));

    RoutingReport local;
    std::optional<RegistrationResult> best;
    for (const auto& key : keys) {
        RoutingAttempt a;
        a.template_key = to_string(key);
        const PreparedCloud& target = lib.get(key);
        auto t0 = std::chrono::steady_clock::now();
        try {
            const RegistrationResult coarse = coarse_register(source, target, params);
            a.coarse_seconds = seconds_since(t0);
            t0 = std::chrono::steady_clock::now();
            a.result = fine_register(source.cloud, target, coarse.transform, params);
            a.fine_seconds = seconds_since(t0);
            a.result.chosen_template = a.template_key;
            if (!best || a.result.fitness > best->fitness) best = a.result;
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::CoarseFailure) throw;
            a.coarse_failed = true;
            a.failure = e.what();
            a.coarse_seconds = seconds_since(t0);
        }
        local.attempts.push_back(std::move(a));
    }
    if (report) *report = local;
    if (!best) throw Error(ErrorKind::RoutingFailure, "registration failed against every candidate template", "registration");
    return *best;
}

RegistrationResult register_with_routing(const LabeledMesh& scan, ScanClass scan_class, const TemplateLibrary& lib,
                                         const RegistrationParams& params, RoutingReport* report) {
    return register_with_routing(scan, scan_class, PreparedLibrary(lib, params), report);
}

}  // namespace crownfit

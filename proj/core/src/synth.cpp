#include "crownfit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace crownfit::synth {

namespace {

double spow(double c, double e) { return std::copysign(std::pow(std::abs(c), e), c); }

struct Cusp {
    double u, v, amplitude;  // u, v as fractions of the half widths
};

std::vector<Cusp> cusp_layout(int fdi_code) {
    const int pos = fdi::position(fdi_code);
    const bool upper = fdi::jaw(fdi_code) == Jaw::Upper;
    if (pos <= 2) return {};
    if (pos == 3) return {{0.0, 0.1, 1.1}};
    if (pos <= 5) {
        if (upper) return {{0.0, 0.45, 0.9}, {0.0, -0.45, 0.85}};
        return {{0.0, 0.45, 1.0}, {0.0, -0.45, 0.45}};
    }
    if (upper) return {{0.45, 0.45, 1.0}, {-0.45, 0.45, 0.95}, {0.45, -0.45, 1.05}, {-0.45, -0.5, 0.7}};
    return {{0.5, 0.45, 0.95}, {0.0, 0.5, 0.9}, {-0.5, 0.45, 0.85}, {0.4, -0.45, 1.0}, {-0.4, -0.45, 0.95}};
}

struct Frame {
    Vec3 origin, u, v;  // u along the arch, v outward; w = +z
};

/// Ellipse x = A sin t, y = B (1 - cos t) with an arc-length lookup.
class ArchCurve {
public:
    ArchCurve(double a, double b) : a_(a), b_(b) {
        constexpr int kSteps = 20000;
        ts_.resize(kSteps + 1);
        ss_.resize(kSteps + 1);
        for (int i = 0; i <= kSteps; ++i) {
            ts_[i] = M_PI * i / kSteps;
            if (i > 0) ss_[i] = ss_[i - 1] + (point(ts_[i]) - point(ts_[i - 1])).norm();
        }
    }

    Vec3 point(double t) const { return {a_ * std::sin(t), b_ * (1.0 - std::cos(t)), 0.0}; }

    /// Signed arc length; negative values run along the patient's right.
    double t_at(double s) const {
        const double a = std::abs(s);
        if (a >= ss_.back()) throw Error(ErrorKind::Argument, "synthetic arch: teeth do not fit on the arch curve");
        const auto it = std::upper_bound(ss_.begin(), ss_.end(), a);
        const std::size_t i = std::size_t(it - ss_.begin()) - 1;
        const double f = (a - ss_[i]) / (ss_[i + 1] - ss_[i]);
        const double t = ts_[i] + f * (ts_[i + 1] - ts_[i]);
        return s < 0 ? -t : t;
    }

    Frame frame(double s) const {
        const double t = t_at(s);
        Frame f;
        f.origin = point(t);
        f.u = Vec3(a_ * std::cos(t), b_ * std::sin(t), 0.0).normalized();
        f.v = Vec3(b_ * std::sin(t), -a_ * std::cos(t), 0.0).normalized();
        return f;
    }

private:
    double a_, b_;
    std::vector<double> ts_, ss_;
};

/// Closed latitude/longitude surface with pole fans. `pos(eta, omega)` gives
/// the point for eta in [-pi/2, pi/2] and omega in [-pi, pi).
template <class F>
void append_sphere_like(LabeledMesh& out, int n_eta, int n_omega, std::uint8_t label, F&& pos) {
    const auto base = static_cast<std::uint32_t>(out.vertices.size());
    out.vertices.push_back(pos(-M_PI / 2, 0.0));
    for (int i = 1; i < n_eta; ++i) {
        const double eta = -M_PI / 2 + M_PI * i / n_eta;
        for (int j = 0; j < n_omega; ++j) out.vertices.push_back(pos(eta, -M_PI + 2 * M_PI * j / n_omega));
    }
    out.vertices.push_back(pos(M_PI / 2, 0.0));
    const std::uint32_t bottom = base, top = static_cast<std::uint32_t>(out.vertices.size() - 1);
    auto ring = [&](int i, int j) { return base + 1 + std::uint32_t((i - 1) * n_omega + (j % n_omega)); };
    auto add = [&](std::uint32_t a, std::uint32_t b, std::uint32_t c) {
        out.faces.push_back({a, b, c});
        out.face_labels.push_back(label);
    };
    for (int j = 0; j < n_omega; ++j) add(bottom, ring(1, j + 1), ring(1, j));
    for (int i = 1; i + 1 < n_eta; ++i)
        for (int j = 0; j < n_omega; ++j) {
            add(ring(i, j), ring(i, j + 1), ring(i + 1, j + 1));
            add(ring(i, j), ring(i + 1, j + 1), ring(i + 1, j));
        }
    for (int j = 0; j < n_omega; ++j) add(top, ring(n_eta - 1, j), ring(n_eta - 1, j + 1));
}

constexpr double kGingivaCenterZ = -4.0;
constexpr double kGingivaHalfHeight = 3.2;

void append_tooth(LabeledMesh& out, const ToothSpec& t, const Frame& f, double edge) {
    double a = 0.5 * t.mesiodistal, b = 0.5 * t.buccolingual, c = 0.5 * t.height;
    double e1 = 0.4, e2 = 0.5;
    std::vector<Cusp> cusps = cusp_layout(t.fdi);
    if (t.prepared) {
        a *= 0.65, b *= 0.65, c *= 0.8;
        e1 = 0.6, e2 = 0.7;
        cusps.clear();
    }
    const double sigma = 0.25 * std::min(a, b);
    const int n_omega = std::max(24, int(std::ceil(3.6 * (a + b) / edge)));
    const int n_eta = std::max(12, int(std::ceil(M_PI * std::max(c, 0.5 * (a + b)) / edge)));
    const std::uint8_t label = t.prepared ? label::kPrepared : fdi::tooth_class(t.fdi);
    append_sphere_like(out, n_eta, n_omega, label, [&](double eta, double omega) {
        const double ce = std::cos(eta), se = std::sin(eta);
        const double lx = a * spow(ce, e1) * spow(std::cos(omega), e2);
        const double ly = b * spow(ce, e1) * spow(std::sin(omega), e2);
        double lz = c * spow(se, e1);
        if (se > 0.0) {
            double bump = 0.0;
            for (const auto& k : cusps) {
                const double dx = lx - k.u * a, dy = ly - k.v * b;
                bump += k.amplitude * std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
            }
            lz += se * se * bump;
        }
        return Vec3(f.origin + lx * f.u + ly * f.v + Vec3(0, 0, lz));
    });
}

void append_gingiva(LabeledMesh& out, const ArchCurve& curve, double s0, double s1, double half_width, double edge) {
    const int n_along = std::max(2, int(std::ceil((s1 - s0) / edge)));
    const int n_ring = std::max(16, int(std::ceil(3.6 * (half_width + kGingivaHalfHeight) / edge)));
    const auto base = static_cast<std::uint32_t>(out.vertices.size());
    std::vector<Frame> frames;
    for (int k = 0; k <= n_along; ++k) frames.push_back(curve.frame(s0 + (s1 - s0) * k / n_along));
    for (const auto& f : frames)
        for (int j = 0; j < n_ring; ++j) {
            const double psi = 2 * M_PI * j / n_ring;
            const double v = half_width * spow(std::cos(psi), 0.6);
            const double z = kGingivaCenterZ + kGingivaHalfHeight * spow(std::sin(psi), 0.6);
            out.vertices.push_back(f.origin + v * f.v + Vec3(0, 0, z));
        }
    const auto cap0 = static_cast<std::uint32_t>(out.vertices.size());
    out.vertices.push_back(frames.front().origin + Vec3(0, 0, kGingivaCenterZ));
    out.vertices.push_back(frames.back().origin + Vec3(0, 0, kGingivaCenterZ));
    auto id = [&](int k, int j) { return base + std::uint32_t(k * n_ring + (j % n_ring)); };
    auto add = [&](std::uint32_t a, std::uint32_t b, std::uint32_t c) {
        out.faces.push_back({a, b, c});
        out.face_labels.push_back(label::kGingiva);
    };
    for (int k = 0; k < n_along; ++k)
        for (int j = 0; j < n_ring; ++j) {
            add(id(k, j), id(k, j + 1), id(k + 1, j + 1));
            add(id(k, j), id(k + 1, j + 1), id(k + 1, j));
        }
    for (int j = 0; j < n_ring; ++j) {
        add(cap0, id(0, j + 1), id(0, j));
        add(cap0 + 1, id(n_along, j), id(n_along, j + 1));
    }
}

}  // namespace

std::vector<int> teeth_for_class(ScanClass cls, Jaw jaw) {
    std::vector<int> out;
    auto side_range = [&](Side side, int lo, int hi) {
        for (int p = lo; p <= hi; ++p) out.push_back(fdi::make(jaw, side, p));
    };
    switch (cls) {
        case ScanClass::FullUpper:
        case ScanClass::FullLower:
            side_range(Side::Right, 1, 7);
            side_range(Side::Left, 1, 7);
            break;
        case ScanClass::PartialLeft: side_range(Side::Left, 3, 7); break;
        case ScanClass::PartialRight: side_range(Side::Right, 3, 7); break;
        case ScanClass::PartialCenter:
            side_range(Side::Right, 1, 3);
            side_range(Side::Left, 1, 3);
            break;
    }
    std::sort(out.begin(), out.end(), [](int a, int b) { return fdi::arch_key(a) < fdi::arch_key(b); });
    return out;
}

ToothSpec standard_tooth(int code) {
    fdi::require_valid(code);
    // mesiodistal, buccolingual, height per position 1..8
    static constexpr double kUpper[8][3] = {{8.5, 7.0, 9.0}, {6.5, 6.0, 8.0}, {7.5, 8.0, 9.0}, {7.0, 9.0, 7.5},
                                            {6.5, 9.0, 7.0}, {10.0, 11.0, 6.5}, {9.0, 10.5, 6.0}, {8.5, 10.0, 5.5}};
    static constexpr double kLower[8][3] = {{5.4, 6.0, 8.0}, {5.9, 6.2, 8.0}, {6.9, 7.5, 9.0}, {7.0, 7.8, 7.5},
                                            {7.0, 8.2, 7.0}, {11.0, 10.5, 6.5}, {10.5, 10.0, 6.0}, {10.0, 9.5, 5.5}};
    const auto& row = (fdi::jaw(code) == Jaw::Upper ? kUpper : kLower)[fdi::position(code) - 1];
    return {code, row[0], row[1], row[2], false};
}

std::pair<double, double> arch_shape(Jaw jaw) { return jaw == Jaw::Upper ? std::pair{28.0, 50.0} : std::pair{25.0, 46.0}; }

ArchSpec arch_spec(Jaw jaw, const std::vector<int>& fdis, std::uint64_t seed, double jitter_sigma) {
    ArchSpec spec;
    spec.jaw = jaw;
    std::tie(spec.arch_half_width, spec.arch_depth) = arch_shape(jaw);
    for (int code : fdis) spec.teeth.push_back(standard_tooth(code));
    spec.seed = seed;
    spec.jitter_sigma = jitter_sigma;
    return spec;
}

ArchSpec arch_spec_for_class(ScanClass cls, Jaw jaw, std::uint64_t seed, double jitter_sigma) {
    if (cls == ScanClass::FullUpper) jaw = Jaw::Upper;
    if (cls == ScanClass::FullLower) jaw = Jaw::Lower;
    return arch_spec(jaw, teeth_for_class(cls, jaw), seed, jitter_sigma);
}

ScanClass classify_tooth_set(Jaw jaw, const std::vector<int>& fdis) {
    bool left = false, right = false;
    for (int code : fdis) {
        if (fdi::position(code) < 4) continue;
        (fdi::side(code) == Side::Left ? left : right) = true;
    }
    if (left && right) return jaw == Jaw::Upper ? ScanClass::FullUpper : ScanClass::FullLower;
    if (left) return ScanClass::PartialLeft;
    if (right) return ScanClass::PartialRight;
    return ScanClass::PartialCenter;
}

SyntheticArch generate_arch(const ArchSpec& spec) {
    if (spec.teeth.empty()) throw Error(ErrorKind::Argument, "generate_arch: no teeth");
    if (!(spec.edge_length > 0.0)) throw Error(ErrorKind::Argument, "generate_arch: edge_length must be > 0");
    std::set<int> seen;
    for (const auto& t : spec.teeth) {
        fdi::require_valid(t.fdi);
        if (fdi::jaw(t.fdi) != spec.jaw) throw Error(ErrorKind::Argument, "generate_arch: tooth from the other jaw");
        if (!seen.insert(t.fdi).second) throw Error(ErrorKind::Argument, "generate_arch: duplicate tooth");
        if (!(t.mesiodistal > 0 && t.buccolingual > 0 && t.height > 0))
            throw Error(ErrorKind::Argument, "generate_arch: tooth dimensions must be positive");
    }

    const ArchCurve curve(spec.arch_half_width, spec.arch_depth);
    // Slots follow standard widths so a tooth sits at the same place whatever
    // else is present in the scan.
    auto slot = [&](int code) {
        double s = 0.5 * spec.interproximal_gap;
        for (int p = 1; p < fdi::position(code); ++p)
            s += standard_tooth(fdi::make(spec.jaw, fdi::side(code), p)).mesiodistal + spec.interproximal_gap;
        s += 0.5 * standard_tooth(code).mesiodistal;
        return fdi::side(code) == Side::Right ? -s : s;
    };

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    SyntheticArch out;
    LabeledMesh& mesh = out.mesh;
    double s_lo = 1e300, s_hi = -1e300, max_bl = 0.0;
    std::vector<std::pair<int, std::pair<double, double>>> extents;
    for (ToothSpec t : spec.teeth) {
        const double s = slot(t.fdi);
        if (spec.size_jitter > 0) {
            t.mesiodistal *= 1.0 + spec.size_jitter * gauss(rng);
            t.buccolingual *= 1.0 + spec.size_jitter * gauss(rng);
            t.height *= 1.0 + spec.size_jitter * gauss(rng);
        }
        Frame f = curve.frame(s);
        if (spec.jitter_sigma > 0) {
            f.origin.x() += spec.jitter_sigma * gauss(rng);
            f.origin.y() += spec.jitter_sigma * gauss(rng);
        }
        append_tooth(mesh, t, f, spec.edge_length);
        {
            LabeledMesh fine;
            append_tooth(fine, t, f, 0.25 * spec.edge_length);
            out.truth.surface_centroids[t.fdi] = label_centroids(fine).begin()->second;
        }
        out.truth.tooth_centers[t.fdi] = f.origin;
        out.truth.label_fdi[t.prepared ? label::kPrepared : fdi::tooth_class(t.fdi)] = t.fdi;
        s_lo = std::min(s_lo, s - 0.5 * t.mesiodistal);
        s_hi = std::max(s_hi, s + 0.5 * t.mesiodistal);
        max_bl = std::max(max_bl, t.buccolingual);
        extents.push_back({t.fdi, {s - 0.5 * t.mesiodistal, s + 0.5 * t.mesiodistal}});
    }
    std::sort(extents.begin(), extents.end(), [](const auto& a, const auto& b) { return a.second.first < b.second.first; });
    for (std::size_t i = 1; i < extents.size(); ++i)
        if (extents[i].second.first < extents[i - 1].second.second - 0.25 * spec.interproximal_gap)
            throw Error(ErrorKind::Argument, "generate_arch: overlapping tooth footprints");

    append_gingiva(mesh, curve, s_lo - 2.0, s_hi + 2.0, 0.5 * max_bl + 2.0, spec.edge_length);

    if (spec.jaw == Jaw::Upper) {
        for (auto& v : mesh.vertices) v.z() = -v.z();
        for (auto& [code, c] : out.truth.surface_centroids) c.z() = -c.z();
        for (auto& f : mesh.faces) std::swap(f[1], f[2]);
    }
    orient_outward(mesh);
    mesh = estimate_vertex_normals(mesh);

    std::vector<int> fdis;
    for (const auto& t : spec.teeth) fdis.push_back(t.fdi);
    out.truth.jaw = spec.jaw;
    out.truth.scan_class = classify_tooth_set(spec.jaw, fdis);
    out.truth.centroids = label_centroids(mesh);
    return out;
}

PerturbSpec PerturbSpec::augmentation(std::uint64_t seed) {
    PerturbSpec p;
    p.rotation_deg = Vec3(5, 5, 15);
    p.translation_mm = Vec3(5, 5, 2);
    p.scale_min = 0.9;
    p.scale_max = 1.1;
    p.seed = seed;
    return p;
}

Perturbation sample_perturbation(const PerturbSpec& spec) {
    if (!(spec.scale_min > 0.0) || spec.scale_max < spec.scale_min)
        throw Error(ErrorKind::Argument, "perturb_pose: invalid scale range");
    if ((spec.rotation_deg.array() < 0).any() || (spec.translation_mm.array() < 0).any())
        throw Error(ErrorKind::Argument, "perturb_pose: ranges must be non-negative");
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    Perturbation p;
    for (int i = 0; i < 3; ++i) p.angles_deg[i] = spec.rotation_deg[i] * unit(rng);
    Vec3 t;
    for (int i = 0; i < 3; ++i) t[i] = spec.translation_mm[i] * unit(rng);
    const double u = 0.5 * (unit(rng) + 1.0);
    p.scale = spec.scale_min + u * (spec.scale_max - spec.scale_min);
    const Vec3 rad = p.angles_deg * (M_PI / 180.0);
    const Mat3 r = (Eigen::AngleAxisd(rad.z(), Vec3::UnitZ()) * Eigen::AngleAxisd(rad.y(), Vec3::UnitY()) *
                    Eigen::AngleAxisd(rad.x(), Vec3::UnitX()))
                       .toRotationMatrix();
    p.transform = RigidTransform(orthonormalize(r), t);
    return p;
}

LabeledMesh apply_perturbation(const LabeledMesh& mesh, const Perturbation& p) {
    LabeledMesh out = p.scale == 1.0 ? mesh : scaled_about(mesh, p.scale, Vec3::Zero());
    return transformed(out, p.transform);
}

std::pair<LabeledMesh, Perturbation> perturb_pose(const LabeledMesh& mesh, const PerturbSpec& spec) {
    Perturbation p = sample_perturbation(spec);
    return {apply_perturbation(mesh, p), p};
}

// ---- simple solids ---------------------------------------------------------

LabeledMesh heightfield_solid(double hx, double hy, double cell, double bottom_z,
                              const std::function<double(double, double)>& top) {
    if (!(hx > 0 && hy > 0 && cell > 0)) throw Error(ErrorKind::Argument, "heightfield_solid: sizes must be > 0");
    const int nx = std::max(1, int(std::lround(2 * hx / cell)));
    const int ny = std::max(1, int(std::lround(2 * hy / cell)));
    LabeledMesh m;
    const auto per_layer = std::uint32_t((nx + 1) * (ny + 1));
    auto x_at = [&](int i) { return -hx + 2 * hx * i / nx; };
    auto y_at = [&](int j) { return -hy + 2 * hy * j / ny; };
    for (int layer = 0; layer < 2; ++layer)
        for (int j = 0; j <= ny; ++j)
            for (int i = 0; i <= nx; ++i) {
                const double x = x_at(i), y = y_at(j);
                const double z = layer == 0 ? top(x, y) : bottom_z;
                if (layer == 0 && !(z > bottom_z)) throw Error(ErrorKind::Argument, "heightfield_solid: top must lie above the bottom");
                m.vertices.emplace_back(x, y, z);
            }
    auto tv = [&](int i, int j) { return std::uint32_t(j * (nx + 1) + i); };
    auto bv = [&](int i, int j) { return per_layer + tv(i, j); };
    auto add = [&](std::uint32_t a, std::uint32_t b, std::uint32_t c, std::uint8_t lab) {
        m.faces.push_back({a, b, c});
        m.face_labels.push_back(lab);
    };
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            add(tv(i, j), tv(i + 1, j), tv(i + 1, j + 1), region::kOcclusal);
            add(tv(i, j), tv(i + 1, j + 1), tv(i, j + 1), region::kOcclusal);
            add(bv(i, j), bv(i + 1, j + 1), bv(i + 1, j), 0);
            add(bv(i, j), bv(i, j + 1), bv(i + 1, j + 1), 0);
        }
    // Border walked counter-clockwise seen from +z.
    std::vector<std::pair<int, int>> loop;
    for (int i = 0; i < nx; ++i) loop.push_back({i, 0});
    for (int j = 0; j < ny; ++j) loop.push_back({nx, j});
    for (int i = nx; i > 0; --i) loop.push_back({i, ny});
    for (int j = ny; j > 0; --j) loop.push_back({0, j});
    for (std::size_t k = 0; k < loop.size(); ++k) {
        const auto [ia, ja] = loop[k];
        const auto [ib, jb] = loop[(k + 1) % loop.size()];
        std::uint8_t lab = 0;
        if (ia == nx && ib == nx) lab = region::kMesial;
        else if (ja == ny && jb == ny) lab = region::kBuccal;
        add(tv(ib, jb), tv(ia, ja), bv(ia, ja), lab);
        add(tv(ib, jb), bv(ia, ja), bv(ib, jb), lab);
    }
    return m;
}

CrownFixture generate_crown_fixture(CrownKind kind, const CrownDims& d) {
    if (!(d.half_mesiodistal > 0 && d.half_buccolingual > 0 && d.height > 0 && d.cell > 0))
        throw Error(ErrorKind::Argument, "generate_crown_fixture: dimensions must be > 0");
    const double a = d.half_mesiodistal, b = d.half_buccolingual;
    auto falloff = [](double s) {
        const double u = std::clamp((s - 0.7) / 0.3, 0.0, 1.0);
        return 1.0 - 0.2 * u * u * (3 - 2 * u);
    };
    std::vector<BumpSpec> bumps;
    if (kind == CrownKind::BumpedPosterior) {
        static constexpr double kLayout[7][2] = {{0.5, 0.45}, {-0.5, -0.45}, {-0.5, 0.45}, {0.5, -0.45},
                                                 {0.0, 0.45}, {0.0, -0.45},  {0.0, 0.0}};
        if (d.cusp_count < 0 || d.cusp_count > 7) throw Error(ErrorKind::Argument, "generate_crown_fixture: 0-7 cusps");
        double amp = d.cusp_height;
        for (int k = 0; k < d.cusp_count; ++k, amp *= 0.92) {
            const double x = std::round(kLayout[k][0] * a / d.cell) * d.cell;
            const double y = std::round(kLayout[k][1] * b / d.cell) * d.cell;
            bumps.push_back({x, y, amp, 0.5});
        }
    }
    auto top = [&](double x, double y) {
        double z = d.height * falloff(std::abs(x) / a) * falloff(std::abs(y) / b);
        for (const auto& k : bumps) z += k.amplitude * std::exp(-((x - k.x) * (x - k.x) + (y - k.y) * (y - k.y)) / (2 * k.sigma * k.sigma));
        return z;
    };
    LabeledMesh m = heightfield_solid(a, b, d.cell, 0.0, top);
    CrownFixture out;
    const int nx = std::max(1, int(std::lround(2 * a / d.cell)));
    const int ny = std::max(1, int(std::lround(2 * b / d.cell)));
    for (const auto& k : bumps) {
        const int i = int(std::lround((k.x + a) / (2 * a) * nx));
        const int j = int(std::lround((k.y + b) / (2 * b) * ny));
        const auto v = std::uint32_t(j * (nx + 1) + i);
        out.apex_vertices.push_back(v);
        out.apex_heights.push_back(m.vertices[v].z());
    }
    m = estimate_vertex_normals(m);
    out.crown = make_crown_template(std::move(m));
    return out;
}

LabeledMesh bump_plate(double half_size, double cell, double base_height, const std::vector<BumpSpec>& bumps,
                       std::vector<std::uint32_t>* apex_vertices) {
    auto top = [&](double x, double y) {
        double z = base_height;
        for (const auto& k : bumps) z += k.amplitude * std::exp(-((x - k.x) * (x - k.x) + (y - k.y) * (y - k.y)) / (2 * k.sigma * k.sigma));
        return z;
    };
    LabeledMesh m = heightfield_solid(half_size, half_size, cell, 0.0, top);
    if (apex_vertices != nullptr) {
        const int n = std::max(1, int(std::lround(2 * half_size / cell)));
        apex_vertices->clear();
        for (const auto& k : bumps) {
            const int i = int(std::lround((k.x + half_size) / cell)), j = int(std::lround((k.y + half_size) / cell));
            apex_vertices->push_back(std::uint32_t(j * (n + 1) + i));
        }
    }
    return estimate_vertex_normals(m);
}

FittingCase generate_fitting_case(std::uint64_t seed, bool posterior) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> gap(-0.25, 0.35), pen(0.05, 0.25), off(-0.2, 0.2);
    CrownDims dims;
    if (!posterior) {
        dims.half_mesiodistal = 3.0;
        dims.half_buccolingual = 3.0;
        dims.height = 8.0;
    }
    const auto fixture =
        generate_crown_fixture(posterior ? CrownKind::BumpedPosterior : CrownKind::SmoothAnterior, dims);
    FittingCase c;
    c.fdi = posterior ? 36 : 31;
    c.left_gap = gap(rng);
    c.right_gap = gap(rng);
    c.penetration = pen(rng);
    const double shift = off(rng);
    c.crown = fixture.crown.mesh;
    for (auto& v : c.crown.vertices) v.x() += shift;
    const double a = dims.half_mesiodistal, b = dims.half_buccolingual;
    const LabeledMesh walls[2] = {make_box(Vec3(-a - c.left_gap - 4.0, -b, 0.0), Vec3(-a - c.left_gap, b, dims.height), 6),
                                  make_box(Vec3(a + c.right_gap, -b, 0.0), Vec3(a + c.right_gap + 4.0, b, dims.height), 6)};
    c.neighbors = merge(walls);
    double top = -std::numeric_limits<double>::infinity();
    for (const auto& v : c.crown.vertices) top = std::max(top, v.z());
    c.opposing = make_box(Vec3(-a - 6.0, -b - 2.0, top - c.penetration), Vec3(a + 6.0, b + 2.0, top + 4.0), 8);
    return c;
}

LabeledMesh make_box(const Vec3& lo, const Vec3& hi, int subdivisions) {
    if (subdivisions < 1) throw Error(ErrorKind::Argument, "make_box: subdivisions must be >= 1");
    if (!((hi - lo).array() > 0).all()) throw Error(ErrorKind::Argument, "make_box: hi must exceed lo");
    const int n = subdivisions;
    LabeledMesh m;
    std::map<std::array<int, 3>, std::uint32_t> ids;
    auto vid = [&](std::array<int, 3> k) {
        auto [it, fresh] = ids.try_emplace(k, std::uint32_t(m.vertices.size()));
        if (fresh) {
            Vec3 p;
            for (int a = 0; a < 3; ++a) p[a] = k[a] == n ? hi[a] : lo[a] + (hi[a] - lo[a]) * k[a] / n;
            m.vertices.push_back(p);
        }
        return it->second;
    };
    for (int d = 0; d < 3; ++d) {
        const int u = (d + 1) % 3, v = (d + 2) % 3;
        for (int side = 0; side < 2; ++side)
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    std::array<std::uint32_t, 4> q;
                    const int corners[4][2] = {{i, j}, {i + 1, j}, {i + 1, j + 1}, {i, j + 1}};
                    for (int c = 0; c < 4; ++c) {
                        std::array<int, 3> k{};
                        k[d] = side * n;
                        k[u] = corners[c][0];
                        k[v] = corners[c][1];
                        q[c] = vid(k);
                    }
                    if (side == 1) {
                        m.faces.push_back({q[0], q[1], q[2]});
                        m.faces.push_back({q[0], q[2], q[3]});
                    } else {
                        m.faces.push_back({q[0], q[2], q[1]});
                        m.faces.push_back({q[0], q[3], q[2]});
                    }
                }
    }
    m.face_labels.assign(m.faces.size(), 0);
    return estimate_vertex_normals(m);
}

LabeledMesh make_icosphere(const Vec3& center, double radius, int subdivisions) {
    if (!(radius > 0) || subdivisions < 0) throw Error(ErrorKind::Argument, "make_icosphere: invalid arguments");
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                           {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (auto& p : v) p.normalize();
    std::vector<Face> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                           {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                           {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> mid;
        auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
            const auto key = std::minmax(a, b);
            auto [it, fresh] = mid.try_emplace(key, std::uint32_t(v.size()));
            if (fresh) v.push_back((v[a] + v[b]).normalized());
            return it->second;
        };
        std::vector<Face> next;
        next.reserve(f.size() * 4);
        for (const auto& tri : f) {
            const auto a = midpoint(tri[0], tri[1]), b = midpoint(tri[1], tri[2]), c = midpoint(tri[2], tri[0]);
            next.push_back({tri[0], a, c});
            next.push_back({tri[1], b, a});
            next.push_back({tri[2], c, b});
            next.push_back({a, b, c});
        }
        f = std::move(next);
    }
    LabeledMesh m;
    for (const auto& p : v) m.vertices.push_back(center + radius * p);
    m.faces = std::move(f);
    m.face_labels.assign(m.faces.size(), 0);
    orient_outward(m);
    return estimate_vertex_normals(m);
}

double signed_volume(const LabeledMesh& mesh) {
    double vol = 0.0;
    for (const auto& f : mesh.faces)
        vol += mesh.vertices[f[0]].dot(mesh.vertices[f[1]].cross(mesh.vertices[f[2]]));
    return vol / 6.0;
}

void orient_outward(LabeledMesh& mesh) {
    std::size_t count = 0;
    const auto comp = face_components(mesh, &count);
    std::vector<double> vol(count, 0.0);
    for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
        const auto& f = mesh.faces[i];
        vol[comp[i]] += mesh.vertices[f[0]].dot(mesh.vertices[f[1]].cross(mesh.vertices[f[2]]));
    }
    bool flipped = false;
    for (std::size_t i = 0; i < mesh.faces.size(); ++i)
        if (vol[comp[i]] < 0.0) std::swap(mesh.faces[i][1], mesh.faces[i][2]), flipped = true;
    if (flipped && mesh.has_normals()) mesh = estimate_vertex_normals(mesh);
}

}  // namespace crownfit::synth

#pragma once

#include "error.hpp"
#include "geodesic.hpp"
#include "jacobi.hpp"
#include "manifold.hpp"
#include "parallel.hpp"
#include "path_space.hpp"
#include "smith.hpp"
#include "types.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace pathmorse {

struct CriticalGeodesic {
    std::string id;
    int winding = 0;
    GeodesicPath geodesic;
    int index = 0;
    int hessian_index = 0;
    double action = 0.0;
    int lambda = 0;
    std::vector<NodeField> unstable_basis;  // orthonormal in the node inner product
    std::vector<double> unstable_eigenvalues;
    int orientation = 1;  // applied to unstable_basis[0]; flipping it reverses the orientation
};

struct EnumerateOptions {
    int lambda = 64;  // raised per geodesic to the smallest admissible segment count
    JacobiOptions jacobi;
};

/// Smallest segment count for which the discretized Hessian of `g` is admissible.
template <RiemannianModel M>
int admissible_lambda(const M& model, const GeodesicPath& g, int requested) {
    int lambda = std::max(requested, 8);
    if constexpr (is_sphere_v<M>) {
        const int expected = static_cast<int>(std::floor(detail::round_length(model, g.speed) / kPi)) * (model.dim() - 1);
        lambda = std::max(lambda, 2 * (expected + 1));
    }
    while (g.speed / lambda >= model.max_segment_length()) lambda *= 2;
    return lambda;
}

namespace detail {

/// sum_i w_i e^{tau_i} g(u_i, a) with a fixed generic ambient direction a. Used to fix the
/// sign of each unstable eigenvector independently of the segment count.
template <RiemannianModel M>
double orientation_functional(const M& model, const BrokenPath& path, const NodeField& u) {
    const int d = model.ambient_dim();
    Vec a(d);
    for (int j = 0; j < d; ++j) a(j) = j + 1.0;
    a.normalize();
    double s = 0.0;
    for (int i = 1; i < path.segments(); ++i)
        s += path.weight(i) * std::exp(path.tau[i]) * model.inner(path.nodes[i], u[i], model.to_tangent(path.nodes[i], a));
    return s;
}

}  // namespace detail

/// Unstable basis of `g` at segment count lambda, each vector signed by the orientation
/// functional, with the first vector multiplied by `orientation`.
template <RiemannianModel M>
std::vector<NodeField> oriented_unstable_basis(const M& model, const GeodesicPath& g, int lambda, int orientation,
                                               std::vector<double>* eigenvalues = nullptr) {
    const DiscreteHessian hess = discrete_hessian(model, g, lambda);
    auto basis = unstable_directions(hess);
    const BrokenPath nodes = sample_geodesic(model, g, lambda);
    for (auto& u : basis)
        if (detail::orientation_functional(model, nodes, u) < 0.0)
            for (auto& v : u) v = -v;
    if (!basis.empty() && orientation < 0)
        for (auto& v : basis[0]) v = -v;
    if (eigenvalues) {
        const HessianSpectrum spec = hessian_spectrum(hess);
        eigenvalues->assign(spec.eigenvalues.data(), spec.eigenvalues.data() + basis.size());
    }
    return basis;
}

/// Critical geodesics gamma_0 ... gamma_W from p to q with index, action and unstable basis,
/// sorted by action.
template <RiemannianModel M>
std::vector<CriticalGeodesic> enumerate_critical_points(const M& model, const Vec& p, const Vec& q, int max_winding,
                                                        const EnumerateOptions& opts = {}) {
    if (max_winding < 0) throw Error(ErrorKind::ConfigInvalid, "max winding must be nonnegative");
    if constexpr (!is_sphere_v<M>)
        if (max_winding > 0) throw Error(ErrorKind::Unsupported, "only the minimizing geodesic is available on charts");
    std::vector<CriticalGeodesic> out;
    for (int k = 0; k <= max_winding; ++k) {
        CriticalGeodesic c;
        c.winding = k;
        c.id = "gamma" + std::to_string(k);
        c.geodesic = solve_bvp(model, p, q, k);
        c.action = c.geodesic.action;
        c.index = morse_index(model, c.geodesic, opts.jacobi);
        c.lambda = admissible_lambda(model, c.geodesic, opts.lambda);
        c.unstable_basis = oriented_unstable_basis(model, c.geodesic, c.lambda, 1, &c.unstable_eigenvalues);
        c.hessian_index = static_cast<int>(c.unstable_basis.size());
        if (c.hessian_index != c.index)
            throw Error(ErrorKind::NoConvergence, c.id + ": conjugate-point index " + std::to_string(c.index) +
                                                      " differs from Hessian index " + std::to_string(c.hessian_index));
        out.push_back(std::move(c));
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.action < b.action; });
    return out;
}

/// Reverses the orientation of one generator.
inline void flip_orientation(CriticalGeodesic& c) {
    c.orientation = -c.orientation;
    if (!c.unstable_basis.empty())
        for (auto& v : c.unstable_basis[0]) v = -v;
}

struct CountOptions {
    int lambda = 64;          // segment count for index-one sources
    int search_lambda = 32;   // segment count for the great-circle search from higher-index sources
    double eps = 1e-3;        // seed radius in the node norm
    int angles = 12;          // seeds per great circle
    int bisection_steps = 40;
    double cluster_tol = 1e-3;
    int workers = 0;  // 0 = available cores
    FlowOptions flow;
};

struct TrajectoryRecord {
    std::vector<double> seed;  // unit coordinates in the oriented unstable basis of the source
    int sign = 0;
    double flow_energy = 0.0;
    double resample_drop = 0.0;
    double action_drop = 0.0;
    long steps = 0;
};

struct ModuliCount {
    std::string source;
    std::string target;
    std::vector<TrajectoryRecord> trajectories;  // one per unparametrized trajectory
    int n_count = 0;
    int n_mod2 = 0;
    int seeds = 0;                       // flows launched (grid and bisection)
    std::map<std::string, int> limits;  // omega-limit id -> number of seeds
    bool exhaustive = false;             // true when the unstable sphere is finite (index one)
};

namespace detail {

struct SeedOutcome {
    std::vector<double> coords;
    int limit = -1;
    std::string error;
    double flow_energy = 0.0;
    double resample_drop = 0.0;
    double action_drop = 0.0;
    long steps = 0;
    BrokenPath marked;
};

template <RiemannianModel M>
struct SeedRunner {
    const M& model;
    const BrokenPath& base;
    const std::vector<NodeField>& basis;
    const std::vector<GeodesicPath>& critical;
    int source;
    double eps;
    FlowOptions flow;

    SeedOutcome operator()(std::vector<double> coords) const {
        SeedOutcome out;
        NodeField dir(base.nodes.size(), Vec::Zero(base.nodes.front().size()));
        for (std::size_t j = 0; j < coords.size(); ++j)
            for (std::size_t i = 0; i < dir.size(); ++i) dir[i] += coords[j] * basis[j][i];
        out.coords = std::move(coords);
        try {
            const FlowTrajectory t = run_flow(model, perturbed_seed(model, base, dir, eps), critical, flow, source);
            out.limit = t.limit_plus;
            out.flow_energy = t.flow_energy;
            out.resample_drop = t.resample_drop;
            out.action_drop = t.action.front() - t.action.back();
            out.steps = t.steps();
            if (!t.marked.empty()) out.marked = t.marked.front();
        } catch (const Error& e) {
            out.error = e.what();
        }
        return out;
    }
};

inline std::vector<double> circle_point(int k, int a, int b, double angle) {
    std::vector<double> c(static_cast<std::size_t>(k), 0.0);
    c[a] = std::cos(angle);
    c[b] = std::sin(angle);
    return c;
}

template <RiemannianModel M>
double max_node_distance(const M& model, const BrokenPath& a, const BrokenPath& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.nodes.size(); ++i) worst = std::max(worst, model.distance(a.nodes[i], b.nodes[i]));
    return worst;
}

/// Orientation sign of a trajectory leaving the source along unit coordinates `a`. The frame
/// (a, t_1, ..., t_{k-1}) is positively oriented in the source basis; the t_j are pushed
/// along the flow by finite differences of neighbouring seeds and compared with the target's
/// unstable basis near the target. For an index-one source this is the sign of a.
template <RiemannianModel M>
int trajectory_sign(const M& model, const SeedRunner<M>& run, const SeedOutcome& hit, const BrokenPath& target_nodes,
                    const std::vector<NodeField>& target_basis) {
    const int k = static_cast<int>(hit.coords.size());
    Eigen::Map<const Vec> a(hit.coords.data(), k);
    if (k == 1) return a(0) > 0.0 ? 1 : -1;
    // positively oriented completion of a
    Mat frame = Mat::Identity(k, k);
    frame.col(0) = a;
    Eigen::HouseholderQR<Mat> qr(frame);
    Mat q = qr.householderQ();
    if (q.col(0).dot(a) < 0.0) q.col(0) = -q.col(0);
    if (q.determinant() < 0.0) q.col(k - 1) = -q.col(k - 1);
    const double delta = 1e-3;
    Mat P(k - 1, k - 1);
    for (int j = 1; j < k; ++j) {
        Vec c = a + delta * q.col(j);
        c.normalize();
        SeedOutcome nb = run(std::vector<double>(c.data(), c.data() + k));
        if (!nb.error.empty()) throw Error(ErrorKind::UnresolvedBasin, "orientation probe failed: " + nb.error);
        NodeField diff(target_nodes.nodes.size(), Vec::Zero(target_nodes.nodes.front().size()));
        for (std::size_t i = 1; i + 1 < diff.size(); ++i) {
            const Vec& x = target_nodes.nodes[i];
            diff[i] = model.to_tangent(x, model.log(x, nb.marked.nodes[i]) - model.log(x, hit.marked.nodes[i]));
        }
        for (int r = 0; r + 1 < k; ++r) P(r, j - 1) = node_inner(model, target_nodes, target_basis[r], diff);
    }
    const double det = P.determinant();
    if (det == 0.0) throw Error(ErrorKind::UnresolvedBasin, "degenerate orientation comparison");
    return det > 0.0 ? 1 : -1;
}

}  // namespace detail

/// Signed count of unparametrized flow trajectories from `source` (index k) to `target`
/// (index k - 1). Index-one sources are seeded at +-eps along the oriented unstable
/// direction. Higher-index sources are searched on great circles through pairs of unstable
/// basis vectors, with bisection between neighbouring seeds whose flows reach different
/// limits; this search is not exhaustive.
template <RiemannianModel M>
ModuliCount count_trajectories(const M& model, const CriticalGeodesic& source, const CriticalGeodesic& target,
                               const std::vector<CriticalGeodesic>& critical, const CountOptions& opts = {}) {
    if (source.index - target.index != 1)
        throw Error(ErrorKind::IndexGapNotOne, source.id + " -> " + target.id + ": index gap " +
                                                   std::to_string(source.index - target.index));
    if (!(opts.eps > 0.0) || opts.angles < 3 || !(opts.cluster_tol > 0.0))
        throw Error(ErrorKind::ConfigInvalid, "count options out of range");
    const int k = source.index;
    const int lambda = admissible_lambda(model, source.geodesic, k == 1 ? opts.lambda : opts.search_lambda);

    std::vector<GeodesicPath> geodesics;
    int source_pos = -1, target_pos = -1;
    for (std::size_t c = 0; c < critical.size(); ++c) {
        geodesics.push_back(critical[c].geodesic);
        if (critical[c].id == source.id) source_pos = static_cast<int>(c);
        if (critical[c].id == target.id) target_pos = static_cast<int>(c);
    }
    if (source_pos < 0 || target_pos < 0) throw Error(ErrorKind::ConfigInvalid, "source and target must be in the critical set");

    const auto basis = oriented_unstable_basis(model, source.geodesic, lambda, source.orientation);
    const BrokenPath base = sample_geodesic(model, source.geodesic, lambda);
    FlowOptions flow = opts.flow;
    flow.level_marks = {0.5 * (source.action + target.action)};
    const detail::SeedRunner<M> run{model, base, basis, geodesics, source_pos, opts.eps, flow};

    // seed grid
    std::vector<std::vector<double>> seeds;
    struct Circle {
        int a, b;
        std::size_t first;
    };
    std::vector<Circle> circles;
    if (k == 1) {
        seeds = {{1.0}, {-1.0}};
    } else {
        for (int a = 0; a < k; ++a)
            for (int b = a + 1; b < k; ++b) {
                circles.push_back({a, b, seeds.size()});
                for (int j = 0; j < opts.angles; ++j)
                    seeds.push_back(detail::circle_point(k, a, b, 2.0 * kPi * j / opts.angles));
            }
    }
    std::vector<detail::SeedOutcome> outcomes(seeds.size());
    parallel_for(seeds.size(), opts.workers, [&](std::size_t i) { outcomes[i] = run(seeds[i]); });

    // bisection between neighbouring grid seeds with different limits
    for (const auto& c : circles) {
        std::vector<std::pair<double, double>> brackets;
        for (int j = 0; j < opts.angles; ++j) {
            const auto& lo = outcomes[c.first + j];
            const auto& hi = outcomes[c.first + (j + 1) % opts.angles];
            if (lo.error.empty() && hi.error.empty() && lo.limit != hi.limit)
                brackets.emplace_back(2.0 * kPi * j / opts.angles, 2.0 * kPi * (j + 1) / opts.angles);
        }
        for (auto [lo_angle, hi_angle] : brackets) {
            int lo_limit = run(detail::circle_point(k, c.a, c.b, lo_angle)).limit;
            for (int step = 0; step < opts.bisection_steps; ++step) {
                const double mid = 0.5 * (lo_angle + hi_angle);
                detail::SeedOutcome m = run(detail::circle_point(k, c.a, c.b, mid));
                const int lim = m.limit;
                const bool err = !m.error.empty();
                outcomes.push_back(std::move(m));
                if (err || lim == target_pos) break;
                if (lim == lo_limit)
                    lo_angle = mid;
                else
                    hi_angle = mid;
            }
        }
    }

    ModuliCount out;
    out.source = source.id;
    out.target = target.id;
    out.seeds = static_cast<int>(outcomes.size());
    out.exhaustive = k == 1;
    int unresolved = 0;
    std::string first_error;
    for (const auto& o : outcomes) {
        if (!o.error.empty()) {
            if (!unresolved++) first_error = o.error;
            continue;
        }
        ++out.limits[critical[o.limit].id];
    }
    if (unresolved)
        throw Error(ErrorKind::UnresolvedBasin, source.id + ": " + std::to_string(unresolved) + " of " +
                                                    std::to_string(outcomes.size()) + " seeds unresolved (" +
                                                    first_error + ")");

    // cluster the flows that reach the target, in canonical seed order
    std::vector<const detail::SeedOutcome*> hits;
    for (const auto& o : outcomes)
        if (o.limit == target_pos) hits.push_back(&o);
    std::sort(hits.begin(), hits.end(), [](const auto* a, const auto* b) { return a->coords < b->coords; });
    std::vector<const detail::SeedOutcome*> reps;
    for (const auto* h : hits) {
        bool seen = false;
        for (const auto* r : reps)
            if (detail::max_node_distance(model, h->marked, r->marked) < opts.cluster_tol) seen = true;
        if (!seen) reps.push_back(h);
    }

    const BrokenPath target_nodes = sample_geodesic(model, target.geodesic, lambda);
    std::vector<NodeField> target_basis;
    if (k > 1) target_basis = oriented_unstable_basis(model, target.geodesic, lambda, target.orientation);
    for (const auto* r : reps) {
        TrajectoryRecord rec;
        rec.seed = r->coords;
        rec.sign = detail::trajectory_sign(model, run, *r, target_nodes, target_basis);
        rec.flow_energy = r->flow_energy;
        rec.resample_drop = r->resample_drop;
        rec.action_drop = r->action_drop;
        rec.steps = r->steps;
        out.n_count += rec.sign;
        out.trajectories.push_back(std::move(rec));
    }
    out.n_mod2 = static_cast<int>(out.trajectories.size() % 2);
    return out;
}

/// Which generator indices may be missing from a truncated enumeration.
struct Truncation {
    bool complete = false;      // every generator is present
    bool sphere_family = true;  // otherwise generators k (n - 1) for k > W are missing
    int dim = 2;                // n
    int max_winding = 0;        // W

    /// True when a generator of this index exists beyond the enumeration (or cannot be ruled out).
    [[nodiscard]] bool index_missing(int index) const {
        if (complete) return false;
        if (!sphere_family) return true;
        if (dim == 1) return index == 0;
        return index % (dim - 1) == 0 && index / (dim - 1) > max_winding;
    }
};

struct ChainComplexData {
    std::map<int, std::vector<std::string>> generators;  // index -> ids in action order
    std::map<int, IntMatrix> boundary;                   // k -> d_k : C_k -> C_{k-1}
    Truncation truncation;
    bool z2 = false;

    [[nodiscard]] int rank(int k) const {
        auto it = generators.find(k);
        return it == generators.end() ? 0 : static_cast<int>(it->second.size());
    }
    [[nodiscard]] int max_index() const { return generators.empty() ? -1 : generators.rbegin()->first; }
    [[nodiscard]] IntMatrix boundary_matrix(int k) const {
        auto it = boundary.find(k);
        return it == boundary.end() ? IntMatrix(rank(k - 1), rank(k)) : it->second;
    }
};

struct HomologyGroup {
    int degree = 0;
    int free_rank = 0;
    std::vector<BigInt> torsion;  // invariant factors > 1
    bool truncated = false;
};

/// Every d_{k-1} d_k is the zero matrix (exact integer arithmetic).
inline bool boundary_square_zero(const ChainComplexData& cx) {
    for (const auto& [k, dk] : cx.boundary) {
        const IntMatrix prev = cx.boundary_matrix(k - 1);
        for (int i = 0; i < prev.rows; ++i)
            for (int j = 0; j < dk.cols; ++j) {
                BigInt s = 0;
                for (int m = 0; m < prev.cols; ++m) s += BigInt(prev(i, m)) * dk(m, j);
                if (cx.z2 ? (s % 2 != 0) : (s != 0)) return false;
            }
    }
    return true;
}

/// Boundary matrices d_k(source) = sum n(source, target) target over index-adjacent pairs.
inline ChainComplexData assemble_complex(const std::vector<CriticalGeodesic>& critical,
                                         const std::vector<ModuliCount>& counts, Truncation truncation, bool z2 = false) {
    ChainComplexData cx;
    cx.truncation = truncation;
    cx.z2 = z2;
    std::vector<const CriticalGeodesic*> sorted;
    for (const auto& c : critical) sorted.push_back(&c);
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) { return a->action < b->action; });
    for (const auto* c : sorted) cx.generators[c->index].push_back(c->id);

    std::map<std::pair<std::string, std::string>, const ModuliCount*> lookup;
    for (const auto& m : counts) lookup[{m.source, m.target}] = &m;
    for (const auto& [k, cols] : cx.generators) {
        if (k == 0) continue;
        auto below = cx.generators.find(k - 1);
        if (below == cx.generators.end()) continue;
        IntMatrix d(static_cast<int>(below->second.size()), static_cast<int>(cols.size()));
        for (int j = 0; j < d.cols; ++j)
            for (int i = 0; i < d.rows; ++i) {
                auto it = lookup.find({cols[j], below->second[i]});
                if (it == lookup.end())
                    throw Error(ErrorKind::ConfigInvalid, "missing trajectory count " + cols[j] + " -> " + below->second[i]);
                d(i, j) = z2 ? it->second->n_mod2 : it->second->n_count;
            }
        cx.boundary[k] = std::move(d);
    }
    if (!boundary_square_zero(cx)) throw Error(ErrorKind::BoundaryNotSquareZero, "boundary composition is nonzero");
    return cx;
}

/// H_k = ker d_k / im d_{k+1} for k = 0 .. max_degree.
inline std::vector<HomologyGroup> homology(const ChainComplexData& cx, int max_degree) {
    std::vector<HomologyGroup> out;
    for (int k = 0; k <= max_degree; ++k) {
        HomologyGroup h;
        h.degree = k;
        const IntMatrix dk = cx.boundary_matrix(k);
        const IntMatrix dk1 = cx.boundary_matrix(k + 1);
        if (cx.z2) {
            h.free_rank = cx.rank(k) - rank_mod2(dk) - rank_mod2(dk1);
        } else {
            const SmithForm sk = smith_normal_form(dk);
            const SmithForm sk1 = smith_normal_form(dk1);
            h.free_rank = cx.rank(k) - sk.rank - sk1.rank;
            for (const auto& f : sk1.factors)
                if (f > 1) h.torsion.push_back(f);
        }
        h.truncated = cx.truncation.index_missing(k) || cx.truncation.index_missing(k + 1);
        out.push_back(std::move(h));
    }
    return out;
}

/// Cellular chain complex of S^n with one 0-cell and one n-cell (two 0-cells for n = 0).
inline ChainComplexData sphere_cell_complex(int n) {
    ChainComplexData cx;
    cx.truncation.complete = true;
    if (n == 0) {
        cx.generators[0] = {"e0", "e0'"};
        return cx;
    }
    cx.generators[0] = {"e0"};
    cx.generators[n] = {"e" + std::to_string(n)};
    if (n == 1) cx.boundary[1] = IntMatrix{{0}};  // both ends of the 1-cell on the same vertex
    return cx;
}

struct PathSpaceHomology {
    std::vector<CriticalGeodesic> critical;
    std::vector<ModuliCount> counts;
    ChainComplexData complex;
    std::vector<HomologyGroup> groups;
};

/// Generators, counts, complex and homology of Omega(S^n; p, q) up to winding W.
inline PathSpaceHomology path_space_homology(const Sphere& sphere, const Vec& p, const Vec& q, int max_winding,
                                             int max_degree, const EnumerateOptions& eopts = {},
                                             const CountOptions& copts = {}, bool z2 = false,
                                             const std::vector<std::string>& flipped = {}) {
    PathSpaceHomology out;
    out.critical = enumerate_critical_points(sphere, p, q, max_winding, eopts);
    for (auto& c : out.critical)
        if (std::find(flipped.begin(), flipped.end(), c.id) != flipped.end()) flip_orientation(c);
    for (const auto& s : out.critical)
        for (const auto& t : out.critical)
            if (s.index == t.index + 1) out.counts.push_back(count_trajectories(sphere, s, t, out.critical, copts));
    out.complex = assemble_complex(out.critical, out.counts, Truncation{false, true, sphere.dim(), max_winding}, z2);
    out.groups = homology(out.complex, max_degree);
    return out;
}

/// Smallest winding W whose enumeration determines H_0 .. H_{max_degree} of Omega(S^n).
inline int winding_for_degree(int n, int max_degree, int fallback) {
    if (n <= 1) return fallback;
    return (max_degree + 2 + n - 2) / (n - 1) - 1;  // (W + 1)(n - 1) >= max_degree + 2
}

}  // namespace pathmorse

#pragma once

#include "error.hpp"
#include "geodesic.hpp"
#include "jacobi.hpp"
#include "manifold.hpp"
#include "types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace pathmorse {

/// Finite-dimensional model of the path space: nodes x_0 = p, ..., x_lambda = q at parameters
/// tau_0 = 0 < ... < tau_lambda = 1, joined by minimizing geodesic segments.
struct BrokenPath {
    std::vector<double> tau;
    std::vector<Vec> nodes;

    [[nodiscard]] int segments() const { return static_cast<int>(nodes.size()) - 1; }

    /// Node weight of the discrete inner product; 1/lambda on a uniform subdivision.
    [[nodiscard]] double weight(int i) const {
        const int last = segments();
        const double left = i > 0 ? tau[i] - tau[i - 1] : 0.0;
        const double right = i < last ? tau[i + 1] - tau[i] : 0.0;
        return 0.5 * (left + right);
    }
};

/// Per-node vectors (ambient), zero at the two endpoints.
using NodeField = std::vector<Vec>;

template <RiemannianModel M>
void check_segments(const M& model, const BrokenPath& path) {
    const double limit = model.max_segment_length();
    for (int i = 0; i < path.segments(); ++i)
        if (model.distance(path.nodes[i], path.nodes[i + 1]) >= limit)
            throw Error(ErrorKind::SegmentTooLong, "segment " + std::to_string(i) + " is not minimizing");
}

/// Broken path through the given nodes on a uniform subdivision (or the supplied one).
template <RiemannianModel M>
BrokenPath make_broken_path(const M& model, std::vector<Vec> nodes, std::vector<double> tau = {}) {
    if (nodes.size() < 2) throw Error(ErrorKind::GridTooCoarse, "a broken path needs at least one segment");
    const std::size_t lambda = nodes.size() - 1;
    if (tau.empty()) {
        tau.resize(nodes.size());
        for (std::size_t i = 0; i <= lambda; ++i) tau[i] = static_cast<double>(i) / static_cast<double>(lambda);
    }
    if (tau.size() != nodes.size() || tau.front() != 0.0 || tau.back() != 1.0)
        throw Error(ErrorKind::ConfigInvalid, "subdivision must run from 0 to 1 with one parameter per node");
    for (std::size_t i = 1; i < tau.size(); ++i)
        if (!(tau[i] > tau[i - 1])) throw Error(ErrorKind::ConfigInvalid, "subdivision must be increasing");
    for (const auto& x : nodes) model.check_point(x);
    BrokenPath path{std::move(tau), std::move(nodes)};
    check_segments(model, path);
    return path;
}

/// Nodes of a geodesic at tau_i = i / lambda.
template <RiemannianModel M>
BrokenPath sample_geodesic(const M& model, const GeodesicPath& geodesic, int lambda) {
    const Vec& p = geodesic.samples.front().x;
    const Vec& v0 = geodesic.samples.front().v;
    std::vector<Vec> nodes(static_cast<std::size_t>(lambda) + 1);
    nodes.front() = p;
    nodes.back() = geodesic.q.size() ? geodesic.q : geodesic.end();
    for (int i = 1; i < lambda; ++i) nodes[i] = model.exp(p, (static_cast<double>(i) / lambda) * v0);
    return make_broken_path(model, std::move(nodes));
}

/// Discretized action: total length of the broken geodesic.
template <RiemannianModel M>
double action(const M& model, const BrokenPath& path) {
    double total = 0.0;
    for (int i = 0; i < path.segments(); ++i) total += model.distance(path.nodes[i], path.nodes[i + 1]);
    return total;
}

/// Discrete form of (w1, w2) = int g(w1, w2) d tau: sum_i weight_i g(w1_i, w2_i).
template <RiemannianModel M>
double node_inner(const M& model, const BrokenPath& path, const NodeField& a, const NodeField& b) {
    double s = 0.0;
    for (int i = 1; i < path.segments(); ++i) s += path.weight(i) * model.inner(path.nodes[i], a[i], b[i]);
    return s;
}

template <RiemannianModel M>
double node_norm(const M& model, const BrokenPath& path, const NodeField& a) {
    return std::sqrt(std::max(0.0, node_inner(model, path, a, a)));
}

/// Segment lengths and unit end directions of a broken path, shared by the gradient, the
/// curve tangents and the step controls.
struct PathGeometry {
    std::vector<double> length;  // per segment
    NodeField forward;           // at node i: unit direction toward node i + 1
    NodeField backward;          // at node i: unit direction toward node i - 1
    double total = 0.0;
    double min_length = 0.0;
    bool minimizing = true;
};

template <RiemannianModel M>
PathGeometry path_geometry(const M& model, const BrokenPath& path) {
    const int lambda = path.segments();
    const double limit = model.max_segment_length();
    PathGeometry g;
    g.length.resize(static_cast<std::size_t>(lambda));
    g.forward.assign(path.nodes.size(), Vec::Zero(path.nodes.front().size()));
    g.backward = g.forward;
    g.min_length = std::numeric_limits<double>::infinity();
    for (int i = 0; i < lambda; ++i) {
        const Vec& a = path.nodes[i];
        const Vec& b = path.nodes[i + 1];
        const double d = model.distance(a, b);
        g.length[i] = d;
        g.total += d;
        g.min_length = std::min(g.min_length, d);
        if (d >= limit) {
            g.minimizing = false;
            continue;
        }
        if (d > 0.0) {
            g.forward[i] = model.log(a, b) / d;
            g.backward[i + 1] = model.log(b, a) / d;
        }
    }
    return g;
}

/// Gradient of the discretized action in the node inner product. At node i the metric
/// gradient of the two adjacent segment lengths is t_i^- - t_i^+ = -Delta t(tau_i), the jump
/// of the unit tangent (Delta v / c for constant speed); dividing by the node weight turns it
/// into the gradient for sum_i weight_i g.
template <RiemannianModel M>
NodeField action_gradient(const M& model, const BrokenPath& path, const PathGeometry& geo) {
    if (!geo.minimizing) throw Error(ErrorKind::SegmentTooLong, "a segment is not minimizing");
    NodeField grad(path.nodes.size(), Vec::Zero(path.nodes.front().size()));
    for (int i = 1; i < path.segments(); ++i)
        grad[i] = model.to_tangent(path.nodes[i], -(geo.forward[i] + geo.backward[i])) / path.weight(i);
    return grad;
}

template <RiemannianModel M>
NodeField action_gradient(const M& model, const BrokenPath& path) {
    return action_gradient(model, path, path_geometry(model, path));
}

/// Unit curve tangents (t_i^- + t_i^+)/|t_i^- + t_i^+| at interior nodes; zero where the path
/// folds back on itself. They are g-orthogonal to the node gradients t_i^- - t_i^+.
template <RiemannianModel M>
NodeField node_tangents(const M& model, const BrokenPath& path, const PathGeometry& geo) {
    NodeField out(path.nodes.size(), Vec::Zero(path.nodes.front().size()));
    for (int i = 1; i < path.segments(); ++i) {
        const Vec& x = path.nodes[i];
        const Vec t = model.to_tangent(x, geo.forward[i] - geo.backward[i]);
        const double nt = norm(model, x, t);
        if (nt > 1e-12) out[i] = t / nt;
    }
    return out;
}

template <RiemannianModel M>
NodeField node_tangents(const M& model, const BrokenPath& path) {
    return node_tangents(model, path, path_geometry(model, path));
}

/// Reparametrization velocity mu (S tau_i - s_i) along the curve tangent, s_i the arc length
/// up to node i. It moves nodes toward equal arc-length spacing without changing the action
/// to first order.
inline NodeField reparametrization_velocity(const BrokenPath& path, const PathGeometry& geo, NodeField tangents,
                                            double mu) {
    double cum = 0.0;
    for (int i = 1; i < path.segments(); ++i) {
        cum += geo.length[i - 1];
        tangents[i] *= mu * (geo.total * path.tau[i] - cum);
    }
    return tangents;
}

template <RiemannianModel M>
NodeField reparametrization_velocity(const M& model, const BrokenPath& path, double mu) {
    const PathGeometry geo = path_geometry(model, path);
    return reparametrization_velocity(path, geo, node_tangents(model, path, geo), mu);
}

/// fraction / mu_max, where mu_max = 4 / (d_min w_min) bounds the largest eigenvalue of the
/// action Hessian in the node inner product (alternating normal zigzag of the nodes).
inline double stiffness_limit(const BrokenPath& path, const PathGeometry& geo, double fraction) {
    if (!(fraction > 0.0)) return std::numeric_limits<double>::infinity();
    double wmin = std::numeric_limits<double>::infinity();
    for (int i = 1; i < path.segments(); ++i) wmin = std::min(wmin, path.weight(i));
    return fraction * geo.min_length * wmin / 4.0;
}

/// Node-wise update x_i <- exp(x_i, scale step_i) on interior nodes.
template <RiemannianModel M>
BrokenPath displace(const M& model, const BrokenPath& path, const NodeField& step, double scale) {
    BrokenPath out = path;
    for (int i = 1; i < path.segments(); ++i) out.nodes[i] = model.exp(path.nodes[i], scale * step[i]);
    return out;
}

/// Current point of a flow with its cached geometry and gradient.
struct FlowState {
    BrokenPath path;
    PathGeometry geometry;
    NodeField gradient;
    double grad_norm2 = 0.0;

    [[nodiscard]] double action() const { return geometry.total; }
};

template <RiemannianModel M>
FlowState flow_state(const M& model, BrokenPath path) {
    FlowState st;
    st.geometry = path_geometry(model, path);
    st.gradient = action_gradient(model, path, st.geometry);
    st.grad_norm2 = node_inner(model, path, st.gradient, st.gradient);
    st.path = std::move(path);
    return st;
}

struct FlowStepResult {
    FlowState state;
    double dbeta = 0.0;
    double action_before = 0.0;
    double u_norm2 = 0.0;  // node norm^2 of the displacement rate normal to the curve
};

/// One explicit Euler step with backtracking along -grad, plus an optional drift along the
/// curve tangents. Accepts when the Armijo condition S_new <= S_old - dbeta |grad|^2 / 2
/// holds or, once the predicted decrease is below the rounding resolution 1e-14 S, when
/// S_new agrees with S_old to that resolution and the new gradient does not point back.
/// Recorded actions are therefore non-increasing up to 1e-14 S.
template <RiemannianModel M>
FlowStepResult flow_step(const M& model, const FlowState& cur, double dbeta, double min_dbeta,
                         double drift_rate = 0.0) {
    if (!(dbeta > 0.0)) throw Error(ErrorKind::ConfigInvalid, "flow step must be positive");
    const BrokenPath& path = cur.path;
    const double s_old = cur.action();
    const double resolution = 1e-14 * std::max(1.0, std::abs(s_old));
    const NodeField tangents = node_tangents(model, path, cur.geometry);
    NodeField velocity = drift_rate > 0.0 ? reparametrization_velocity(path, cur.geometry, tangents, drift_rate)
                                          : NodeField(path.nodes.size(), Vec::Zero(path.nodes.front().size()));
    double u2 = 0.0;
    for (int i = 1; i < path.segments(); ++i) {
        const Vec& x = path.nodes[i];
        velocity[i] -= cur.gradient[i];
        Vec normal = -cur.gradient[i];
        normal -= model.inner(x, tangents[i], normal) * tangents[i];
        u2 += path.weight(i) * model.inner(x, normal, normal);
    }
    while (dbeta >= min_dbeta) {
        BrokenPath next = displace(model, path, velocity, dbeta);
        PathGeometry geo = path_geometry(model, next);
        if (!geo.minimizing) {
            dbeta *= 0.5;
            continue;
        }
        const double s_new = geo.total;
        bool accept = s_new <= s_old - 0.5 * dbeta * cur.grad_norm2;
        NodeField g_new;
        if (!accept && s_new <= s_old + resolution && s_old - s_new <= resolution) {
            g_new = action_gradient(model, next, geo);
            // nodes moved far less than the curvature scale, so no transport is needed
            accept = node_inner(model, path, cur.gradient, g_new) >= 0.0;
        }
        if (accept) {
            if (g_new.empty()) g_new = action_gradient(model, next, geo);
            FlowStepResult out;
            out.state.grad_norm2 = node_inner(model, next, g_new, g_new);
            out.state.gradient = std::move(g_new);
            out.state.geometry = std::move(geo);
            out.state.path = std::move(next);
            out.dbeta = dbeta;
            out.action_before = s_old;
            out.u_norm2 = u2;
            return out;
        }
        dbeta *= 0.5;
    }
    throw Error(ErrorKind::StepUnderflow, "cannot decrease the action above rounding resolution");
}

/// One step of negative-gradient flow: interior nodes move by exp_x(-dbeta grad_x), with
/// dbeta halved until the action decreases.
template <RiemannianModel M>
BrokenPath flow_step(const M& model, const BrokenPath& path, double dbeta) {
    const FlowState cur = flow_state(model, path);
    if (cur.grad_norm2 == 0.0) return path;
    return flow_step(model, cur, dbeta, dbeta * 1e-12).state.path;
}

struct FlowOptions {
    double dbeta0 = 0.0;     // 0 selects 0.1 / lambda
    double growth = 1.25;    // step growth after each accepted step, capped at dbeta0
    double grad_tol = 1e-9;  // node-norm gradient threshold for a critical point
    long max_steps = 1'000'000;
    long snapshot_stride = 200;
    double basin_tol = 0.0;  // 0 selects min(0.1, half the smallest action gap)
    double reparametrize = 5.0;  // rate of the tangential equal-spacing drift; 0 disables it
    double stiffness_fraction = 1.0;  // dbeta <= fraction / mu_max with mu_max = 4 / (d_min w_min)
    double resample_fraction = 0.2;   // resample by arc length once a segment is below fraction * S / lambda
    std::vector<double> level_marks;  // keep the first state with action <= each mark
};

/// Flow line record. Scalar series are stored at every accepted state; full paths are kept
/// at a stride (and always the first and last state).
struct FlowTrajectory {
    std::vector<std::pair<double, BrokenPath>> states;
    std::vector<double> beta;
    std::vector<double> action;
    std::vector<double> grad_norm2;
    std::vector<double> u_norm2;  // |u|^2 on each step, u = normal part of log(x_j, x_{j+1}) / dbeta
    double flow_energy = 0.0;
    std::vector<BrokenPath> marked;  // one per level mark; the final state if a mark is never reached
    int resamples = 0;
    double resample_drop = 0.0;  // action removed by resampling (collapsed loops), outside the flow energy
    int limit_minus = -1;  // index into the critical set, -1 if unknown
    int limit_plus = -1;
    bool converged = false;
    double limit_distance = std::numeric_limits<double>::infinity();

    [[nodiscard]] long steps() const { return static_cast<long>(u_norm2.size()); }
};

/// The two terms of the flow energy over accepted steps [first, last): int |u|^2 d beta
/// (piecewise constant) and int |grad S|^2 d beta (trapezoid).
inline std::pair<double, double> flow_energy_terms(const FlowTrajectory& t, long first = 0, long last = -1) {
    if (last < 0) last = t.steps();
    double a = 0.0, b = 0.0;
    for (long j = first; j < last; ++j) {
        const double db = t.beta[j + 1] - t.beta[j];
        a += db * t.u_norm2[j];
        b += 0.5 * db * (t.grad_norm2[j] + t.grad_norm2[j + 1]);
    }
    return {a, b};
}

/// Phi = int d beta int d tau (|u|^2 + |grad S|^2), quadrature over the accepted steps.
inline double flow_energy(const FlowTrajectory& t, long first = 0, long last = -1) {
    const auto [a, b] = flow_energy_terms(t, first, last);
    return a + b;
}

/// Points of the broken path at the given arc-length fractions (increasing, in [0, 1]).
template <RiemannianModel M>
std::vector<Vec> resample_at(const M& model, const BrokenPath& path, const std::vector<double>& fractions) {
    const int lambda = path.segments();
    std::vector<double> cum(static_cast<std::size_t>(lambda) + 1, 0.0);
    for (int i = 0; i < lambda; ++i) cum[i + 1] = cum[i] + model.distance(path.nodes[i], path.nodes[i + 1]);
    std::vector<Vec> out;
    out.reserve(fractions.size());
    int seg = 0;
    for (const double frac : fractions) {
        if (frac >= 1.0) {
            out.push_back(path.nodes.back());
            continue;
        }
        const double s = cum.back() * frac;
        while (seg + 1 < lambda && cum[seg + 1] < s) ++seg;
        const double len = cum[seg + 1] - cum[seg];
        const double f = len > 0.0 ? std::clamp((s - cum[seg]) / len, 0.0, 1.0) : 0.0;
        out.push_back(model.exp(path.nodes[seg], f * model.log(path.nodes[seg], path.nodes[seg + 1])));
    }
    return out;
}

/// count + 1 points at uniform arc-length spacing.
template <RiemannianModel M>
std::vector<Vec> resample_by_length(const M& model, const BrokenPath& path, int count) {
    std::vector<double> fractions(static_cast<std::size_t>(count) + 1);
    for (int j = 0; j <= count; ++j) fractions[j] = static_cast<double>(j) / count;
    return resample_at(model, path, fractions);
}

/// Max distance between the arc-length resampled broken path and the constant-speed geodesic.
template <RiemannianModel M>
double distance_to_geodesic(const M& model, const BrokenPath& path, const GeodesicPath& geodesic, int count = 0) {
    if (count <= 0) count = std::max(64, 2 * path.segments());
    const auto pts = resample_by_length(model, path, count);
    const Vec& p = geodesic.samples.front().x;
    const Vec& v0 = geodesic.samples.front().v;
    double worst = 0.0;
    for (int j = 0; j <= count; ++j)
        worst = std::max(worst, model.distance(pts[j], model.exp(p, (static_cast<double>(j) / count) * v0)));
    return worst;
}

inline double default_basin_tolerance(const std::vector<GeodesicPath>& critical) {
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < critical.size(); ++a)
        for (std::size_t b = a + 1; b < critical.size(); ++b)
            gap = std::min(gap, std::abs(critical[a].action - critical[b].action));
    return std::min(0.1, 0.5 * gap);
}

/// Index of the critical geodesic within `tol` of the path (distance and action), or -1.
template <RiemannianModel M>
int classify(const M& model, const BrokenPath& path, const std::vector<GeodesicPath>& critical, double tol,
             double* dist_out = nullptr) {
    const double s = action(model, path);
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < critical.size(); ++c) {
        if (std::abs(s - critical[c].action) >= tol) continue;
        const double d = distance_to_geodesic(model, path, critical[c]);
        if (d < best_d) best_d = d, best = static_cast<int>(c);
    }
    if (dist_out) *dist_out = best_d;
    return best_d < tol ? best : -1;
}

/// Integrates the gradient flow from `seed` until the gradient norm drops below
/// opts.grad_tol, then classifies the limit against the critical set.
template <RiemannianModel M>
FlowTrajectory run_flow(const M& model, const BrokenPath& seed, const std::vector<GeodesicPath>& critical,
                        const FlowOptions& opts = {}, int source = -1) {
    if (critical.empty()) throw Error(ErrorKind::ConfigInvalid, "critical set is empty");
    const double dbeta0 = opts.dbeta0 > 0.0 ? opts.dbeta0 : 0.1 / seed.segments();
    const double tol = opts.basin_tol > 0.0 ? opts.basin_tol : default_basin_tolerance(critical);

    FlowTrajectory t;
    t.limit_minus = source;
    FlowState cur = flow_state(model, seed);
    double beta = 0.0;
    double dbeta = std::min(dbeta0, stiffness_limit(cur.path, cur.geometry, opts.stiffness_fraction));
    t.states.emplace_back(0.0, cur.path);
    t.beta.push_back(0.0);
    t.action.push_back(cur.action());
    t.grad_norm2.push_back(cur.grad_norm2);

    std::vector<bool> hit(opts.level_marks.size(), false);
    t.marked.assign(opts.level_marks.size(), BrokenPath{});
    auto mark = [&] {
        for (std::size_t j = 0; j < hit.size(); ++j)
            if (!hit[j] && cur.action() <= opts.level_marks[j]) hit[j] = true, t.marked[j] = cur.path;
    };
    mark();

    long step = 0;
    while (std::sqrt(cur.grad_norm2) >= opts.grad_tol) {
        if (step >= opts.max_steps) throw Error(ErrorKind::BudgetExhausted, "flow step budget exhausted");
        if (cur.geometry.min_length < opts.resample_fraction * cur.action() / cur.path.segments()) {
            // a small loop is collapsing; chords through arc-length samples never lengthen the path
            const double before = cur.action();
            cur = flow_state(model, make_broken_path(model, resample_at(model, cur.path, cur.path.tau), cur.path.tau));
            t.resample_drop += before - cur.action();
            ++t.resamples;
            dbeta = std::min(dbeta0, stiffness_limit(cur.path, cur.geometry, opts.stiffness_fraction));
        }
        FlowStepResult r = flow_step(model, cur, dbeta, dbeta0 * 1e-12, opts.reparametrize);
        cur = std::move(r.state);
        beta += r.dbeta;
        t.u_norm2.push_back(r.u_norm2);
        t.beta.push_back(beta);
        t.action.push_back(cur.action());
        t.grad_norm2.push_back(cur.grad_norm2);
        ++step;
        mark();
        if (opts.snapshot_stride > 0 && step % opts.snapshot_stride == 0) t.states.emplace_back(beta, cur.path);
        dbeta = std::min({dbeta0, r.dbeta * opts.growth,
                          stiffness_limit(cur.path, cur.geometry, opts.stiffness_fraction)});
    }
    if (t.states.size() == 1 || t.states.back().first != beta) t.states.emplace_back(beta, cur.path);
    for (std::size_t j = 0; j < hit.size(); ++j)
        if (!hit[j]) t.marked[j] = cur.path;
    t.converged = true;
    t.flow_energy = flow_energy(t);
    t.limit_plus = classify(model, cur.path, critical, tol, &t.limit_distance);
    if (t.limit_plus < 0) throw Error(ErrorKind::Unclassified, "flow limit is not a known critical geodesic");
    return t;
}

/// Seed x_i = exp(x_i, sign * eps * u_i) from a node field along the sampled critical geodesic.
template <RiemannianModel M>
BrokenPath perturbed_seed(const M& model, const BrokenPath& base, const NodeField& direction, double eps) {
    return make_broken_path(model, displace(model, base, direction, eps).nodes, base.tau);
}

/// F_i = u_i - (1/c)(v grad v)_i at the nodes; the discrete acceleration term is -grad S.
template <RiemannianModel M>
NodeField flow_residual(const M& model, const NodeField& u, const BrokenPath& path) {
    const NodeField grad = action_gradient(model, path);
    NodeField out(grad.size());
    for (std::size_t i = 0; i < grad.size(); ++i) out[i] = u[i] + grad[i];
    out.front().setZero();
    out.back().setZero();
    return out;
}

/// F = u - (1/c) v^b nabla_b v^a on a sampled smooth path, c its length.
template <RiemannianModel M>
std::vector<Vec> flow_residual(const M& model, const std::vector<Vec>& u, const GeodesicPath& path) {
    const auto acc = covariant_acceleration(model, path);
    const double c = action(model, path);
    std::vector<Vec> out(acc.size());
    for (std::size_t i = 0; i < acc.size(); ++i) out[i] = u[i] - acc[i] / c;
    return out;
}

/// dF(w) = u^b nabla_b w^a + (1/c) (Lambda w)^a along an unbroken geodesic. w is extended off
/// the path with constant ambient (chart) components when differentiating along u.
template <RiemannianModel M>
TangentField linearized_flow_apply(const M& model, const GeodesicPath& path, const std::vector<Vec>& u,
                                   const TangentField& w) {
    const SturmLiouvilleOperator<M> op(model, path);
    TangentField out = op.apply(w);
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        const auto& x = path.samples[i].x;
        out.values[i] /= path.speed;
        if (u[i].squaredNorm() > 0.0) out.values[i] -= model.to_tangent(x, model.transport_rate(x, u[i], w.values[i]));
    }
    return out;
}

}  // namespace pathmorse

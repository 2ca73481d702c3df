#pragma once

#include "error.hpp"
#include "manifold.hpp"
#include "ode.hpp"
#include "types.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace pathmorse {

struct PathSample {
    double tau = 0.0;
    Vec x;
    Vec v;  // d gamma / d tau
};

/// Velocity jump v(tau+) - v(tau-) at an interior break.
struct BreakDiscontinuity {
    double tau = 0.0;
    Vec delta_v;
};

/// A sampled curve on [0, 1]. At a break the parameter appears twice: first with the
/// left-limit velocity, then with the right-limit velocity.
struct GeodesicPath {
    std::vector<PathSample> samples;
    double speed = 0.0;   // c
    double action = 0.0;  // S
    Vec p, q;
    std::vector<BreakDiscontinuity> breaks;
    int winding = 0;

    [[nodiscard]] const Vec& start() const { return samples.front().x; }
    [[nodiscard]] const Vec& end() const { return samples.back().x; }

    /// Half-open index ranges [first, last) of the smooth pieces.
    [[nodiscard]] std::vector<std::pair<std::size_t, std::size_t>> pieces() const {
        std::vector<std::pair<std::size_t, std::size_t>> out;
        std::size_t first = 0;
        for (std::size_t i = 1; i < samples.size(); ++i) {
            if (samples[i].tau == samples[i - 1].tau) {
                out.emplace_back(first, i);
                first = i;
            }
        }
        out.emplace_back(first, samples.size());
        return out;
    }
};

/// Tangent vector field w^a along a sampled path (one value per sample).
struct TangentField {
    std::vector<Vec> values;
    bool endpoint_zero = true;
};

struct GeodesicOptions {
    double max_arc_step = 2.0 * kPi / 512.0;  // in round / coordinate length
    int min_steps = 64;
    double endpoint_tolerance = 1e-8;
};

namespace detail {

template <RiemannianModel M>
double round_length(const M& model, double dressed_length) {
    if constexpr (is_sphere_v<M>)
        return dressed_length / std::sqrt(model.kappa());
    else
        return dressed_length;
}

/// Composite Simpson on a uniform grid (closing with the 3/8 rule when the interval count
/// is odd), trapezoid on non-uniform grids.
inline double integrate_samples(std::span<const double> tau, std::span<const double> f) {
    const std::size_t m = tau.size();
    if (m < 2) return 0.0;
    const std::size_t intervals = m - 1;
    const double h = (tau.back() - tau.front()) / static_cast<double>(intervals);
    bool uniform = intervals >= 2;
    for (std::size_t i = 1; uniform && i < m; ++i)
        uniform = std::abs((tau[i] - tau[i - 1]) - h) <= 1e-12 * std::max(1.0, std::abs(h));
    if (uniform && (intervals % 2 == 0 || intervals >= 3)) {
        const std::size_t even = intervals % 2 == 0 ? intervals : intervals - 3;
        double s = 0.0;
        if (even > 0) {
            s = f[0] + f[even];
            for (std::size_t i = 1; i < even; ++i) s += (i % 2 ? 4.0 : 2.0) * f[i];
            s *= h / 3.0;
        }
        if (even != intervals) {
            const std::size_t j = even;
            s += 3.0 * h / 8.0 * (f[j] + 3.0 * f[j + 1] + 3.0 * f[j + 2] + f[j + 3]);
        }
        return s;
    }
    double s = 0.0;
    for (std::size_t i = 1; i < m; ++i) s += 0.5 * (tau[i] - tau[i - 1]) * (f[i] + f[i - 1]);
    return s;
}

/// Derivative of samples f on a uniform grid of spacing h, fourth order throughout
/// (centred in the interior, one-sided five-point stencils near the ends).
inline std::vector<Vec> grid_derivative(const std::vector<Vec>& f, double h) {
    const std::size_t m = f.size();
    std::vector<Vec> out(m);
    if (m < 5) {
        for (std::size_t i = 0; i < m; ++i) out[i] = Vec::Zero(f[0].size());
        if (m == 2) out[0] = out[1] = (f[1] - f[0]) / h;
        if (m >= 3)
            for (std::size_t i = 0; i < m; ++i) {
                const std::size_t c = std::clamp<std::size_t>(i, 1, m - 2);
                out[i] = (f[c + 1] - f[c - 1]) / (2.0 * h);
            }
        return out;
    }
    const double d = 12.0 * h;
    for (std::size_t i = 2; i + 2 < m; ++i) out[i] = (-f[i + 2] + 8.0 * f[i + 1] - 8.0 * f[i - 1] + f[i - 2]) / d;
    out[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / d;
    out[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / d;
    const std::size_t e = m - 1;
    out[e] = (25.0 * f[e] - 48.0 * f[e - 1] + 36.0 * f[e - 2] - 16.0 * f[e - 3] + 3.0 * f[e - 4]) / d;
    out[e - 1] = (3.0 * f[e] + 10.0 * f[e - 1] - 18.0 * f[e - 2] + 6.0 * f[e - 3] - f[e - 4]) / d;
    return out;
}

/// Second derivative on a uniform grid: five-point centred stencil, six-point one-sided
/// stencils at the two samples nearest each end (fourth order throughout).
inline std::vector<Vec> grid_second_derivative(const std::vector<Vec>& f, double h) {
    const std::size_t m = f.size();
    std::vector<Vec> out(m, Vec::Zero(f.empty() ? 0 : f[0].size()));
    if (m < 6) {
        for (std::size_t i = 0; m >= 3 && i < m; ++i) {
            const std::size_t c = std::clamp<std::size_t>(i, 1, m - 2);
            out[i] = (f[c + 1] - 2.0 * f[c] + f[c - 1]) / (h * h);
        }
        return out;
    }
    const double d = 12.0 * h * h;
    for (std::size_t i = 2; i + 2 < m; ++i)
        out[i] = (-f[i + 2] + 16.0 * f[i + 1] - 30.0 * f[i] + 16.0 * f[i - 1] - f[i - 2]) / d;
    auto ends = [&](auto at, std::size_t i0, std::size_t i1) {
        out[i0] = (45.0 * at(0) - 154.0 * at(1) + 214.0 * at(2) - 156.0 * at(3) + 61.0 * at(4) - 10.0 * at(5)) / d;
        out[i1] = (10.0 * at(0) - 15.0 * at(1) - 4.0 * at(2) + 14.0 * at(3) - 6.0 * at(4) + at(5)) / d;
    };
    ends([&](std::size_t k) -> const Vec& { return f[k]; }, 0, 1);
    ends([&](std::size_t k) -> const Vec& { return f[m - 1 - k]; }, m - 1, m - 2);
    return out;
}

/// d/dtau of velocity samples on [first, last). Assumes a uniform grid.
inline std::vector<Vec> velocity_derivative(const std::vector<PathSample>& s, std::size_t first, std::size_t last) {
    const std::size_t m = last - first;
    std::vector<Vec> v;
    v.reserve(m);
    for (std::size_t i = first; i < last; ++i) v.push_back(s[i].v);
    const double h = m > 1 ? (s[last - 1].tau - s[first].tau) / static_cast<double>(m - 1) : 1.0;
    return grid_derivative(v, h);
}

}  // namespace detail

/// Composite-quadrature value of S = int_0^1 (g_ab v^a v^b)^{1/2} dtau over every smooth piece.
template <RiemannianModel M>
double action(const M& model, const GeodesicPath& path) {
    if (path.samples.size() < 2) throw Error(ErrorKind::GridTooCoarse, "action needs at least two samples");
    double total = 0.0;
    for (auto [first, last] : path.pieces()) {
        std::vector<double> tau, speed;
        for (std::size_t i = first; i < last; ++i) {
            tau.push_back(path.samples[i].tau);
            speed.push_back(norm(model, path.samples[i].x, path.samples[i].v));
        }
        total += detail::integrate_samples(tau, speed);
    }
    return total;
}

/// Covariant acceleration v^a nabla_a v^b at every sample (zero-length list entries for
/// pieces too short to differentiate).
template <RiemannianModel M>
std::vector<Vec> covariant_acceleration(const M& model, const GeodesicPath& path) {
    std::vector<Vec> out(path.samples.size());
    for (auto [first, last] : path.pieces()) {
        const auto dv = detail::velocity_derivative(path.samples, first, last);
        for (std::size_t i = first; i < last; ++i) {
            const auto& s = path.samples[i];
            out[i] = model.to_tangent(s.x, dv[i - first] - model.acceleration(s.x, s.v));
        }
    }
    return out;
}

/// |v^a nabla_a v^b| / c^2 at interior samples of each smooth piece.
template <RiemannianModel M>
double max_geodesic_residual(const M& model, const GeodesicPath& path) {
    const auto acc = covariant_acceleration(model, path);
    double worst = 0.0;
    const double c2 = std::max(path.speed * path.speed, 1e-300);
    for (auto [first, last] : path.pieces())
        for (std::size_t i = first + 2; i + 2 < last; ++i)
            worst = std::max(worst, norm(model, path.samples[i].x, acc[i]) / c2);
    return worst;
}

/// Constant-speed geodesic of dressed length `length` from p with initial direction v0,
/// parametrized on [0, 1] by fixed-step RK4 (with projection back to the manifold).
template <RiemannianModel M>
GeodesicPath integrate_geodesic(const M& model, const Vec& p, const Vec& v0, double length,
                                const GeodesicOptions& opts = {}) {
    model.check_point(p);
    const double speed0 = norm(model, p, v0);
    if (!(speed0 > 0.0)) throw Error(ErrorKind::IntegrationFailure, "initial velocity must be nonzero");
    if (!(length >= 0.0)) throw Error(ErrorKind::IntegrationFailure, "length must be nonnegative");
    const int dim = model.ambient_dim();
    const double arc = detail::round_length(model, length);
    const int steps = std::max(opts.min_steps, static_cast<int>(std::ceil(arc / opts.max_arc_step)));
    const double h = 1.0 / steps;

    Vec state(2 * dim);
    state << p, model.to_tangent(p, v0) * (length / speed0);
    auto rhs = [&model, dim](const Vec& s, Vec& ds, double) {
        ds.resize(2 * dim);
        ds.head(dim) = s.tail(dim);
        ds.tail(dim) = model.acceleration(s.head(dim), s.tail(dim));
    };

    GeodesicPath path;
    path.samples.reserve(static_cast<std::size_t>(steps) + 1);
    path.samples.push_back({0.0, state.head(dim), state.tail(dim)});
    Rk4Stepper stepper;
    for (int i = 0; i < steps; ++i) {
        stepper.do_step(rhs, state, i * h, h);
        Vec x = model.project(state.head(dim));
        Vec v = model.to_tangent(x, state.tail(dim));
        if (!x.allFinite() || !v.allFinite())
            throw Error(ErrorKind::IntegrationFailure, "geodesic integration produced non-finite state");
        model.check_point(x);
        state << x, v;
        path.samples.push_back({(i + 1) * h, std::move(x), std::move(v)});
    }
    path.samples.back().tau = 1.0;
    path.speed = length;
    path.p = p;
    path.q = path.samples.back().x;
    path.action = action(model, path);
    return path;
}

/// exp_p(v): endpoint of the geodesic with initial velocity v at unit parameter.
template <RiemannianModel M>
Vec exponential_map(const M& model, const Vec& p, const Vec& v, const GeodesicOptions& opts = {}) {
    const double len = norm(model, p, v);
    if (len == 0.0) return p;
    return integrate_geodesic(model, p, v, len, opts).end();
}

namespace detail {

/// Sphere shooting: the geodesic lies in span(p, q); the single unknown is the round
/// arc length ell, bracketed in (k pi, (k+1) pi) for winding k.
inline GeodesicPath solve_bvp_sphere(const Sphere& model, const Vec& p, const Vec& q, int k,
                                     const GeodesicOptions& opts) {
    model.check_point(p);
    model.check_point(q);
    const double theta = Sphere::angle(p, q);
    if (theta < 1e-8) throw Error(ErrorKind::ConfigInvalid, "endpoints coincide");
    if (kPi - theta < 1e-8) throw Error(ErrorKind::AntipodalEndpoints, "q = -p admits a continuum of geodesics");
    if (k < 0) throw Error(ErrorKind::ConfigInvalid, "winding index must be nonnegative");

    const Vec t = (q - p.dot(q) * p).normalized();
    const Vec dir = (k % 2 == 0) ? t : Vec(-t);
    const double sk = std::sqrt(model.kappa());

    auto endpoint = [&](double ell) {
        GeodesicOptions o = opts;
        return integrate_geodesic(model, p, dir, ell * sk, o).end();
    };
    auto residual = [&](double ell) {
        const Vec e = endpoint(ell);
        double r = std::atan2(e.dot(t), e.dot(p)) - theta;
        r = std::remainder(r, 2.0 * kPi);
        return r;
    };

    const double lo = k * kPi, hi = (k + 1) * kPi;
    const double sign = (k % 2 == 0) ? 1.0 : -1.0;  // d residual / d ell
    for (double guess_frac : {0.5, 0.25, 0.75}) {
        double ell = lo + guess_frac * kPi;
        double a = lo, b = hi;
        bool ok = false;
        for (int iter = 0; iter < 80; ++iter) {
            const double r = residual(ell);
            if (std::abs(r) < 1e-13) {
                ok = true;
                break;
            }
            // keep a bracket [a, b] around the root: sign * r < 0 means ell too short
            if (sign * r < 0.0)
                a = ell;
            else
                b = ell;
            const double hfd = 1e-6;
            const double dr = (residual(ell + hfd) - residual(ell - hfd)) / (2.0 * hfd);
            double next = (dr != 0.0) ? ell - r / dr : 0.5 * (a + b);
            if (!(next > a && next < b)) next = 0.5 * (a + b);
            if (std::abs(next - ell) < 1e-15 * hi) {
                ok = std::abs(r) < 1e-10;
                break;
            }
            ell = next;
        }
        if (!ok) continue;
        GeodesicPath path = integrate_geodesic(model, p, dir, ell * sk, opts);
        if ((path.end() - q).norm() > opts.endpoint_tolerance) continue;
        path.q = q;
        path.winding = k;
        return path;
    }
    throw Error(ErrorKind::NoConvergence, "sphere shooting failed for winding " + std::to_string(k));
}

}  // namespace detail

/// Geodesic from p to q. On spheres k selects the winding family (k interior passages
/// through p or -p); charts support only k = 0.
template <RiemannianModel M>
GeodesicPath solve_bvp(const M& model, const Vec& p, const Vec& q, int k, const GeodesicOptions& opts = {}) {
    if constexpr (is_sphere_v<M>) {
        return detail::solve_bvp_sphere(model, p, q, k, opts);
    } else {
        if (k != 0) throw Error(ErrorKind::Unsupported, "winding families are only enumerated on spheres");
        if ((p - q).norm() == 0.0) throw Error(ErrorKind::ConfigInvalid, "endpoints coincide");
        const Vec v0 = model.log(p, q);
        GeodesicPath path = integrate_geodesic(model, p, v0, norm(model, p, v0), opts);
        if ((path.end() - q).norm() > opts.endpoint_tolerance)
            throw Error(ErrorKind::NoConvergence, "chart shooting missed the endpoint");
        path.q = q;
        return path;
    }
}

/// Broken geodesic through `nodes`, each segment minimizing. Break parameters are
/// placed proportionally to segment length, so the whole path has constant speed.
template <RiemannianModel M>
GeodesicPath broken_geodesic(const M& model, const std::vector<Vec>& nodes, int samples_per_segment) {
    if (nodes.size() < 2) throw Error(ErrorKind::GridTooCoarse, "need at least two nodes");
    if (samples_per_segment < 2) throw Error(ErrorKind::GridTooCoarse, "need at least two samples per segment");
    std::vector<double> len(nodes.size() - 1);
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) total += len[i] = model.distance(nodes[i], nodes[i + 1]);
    GeodesicPath path;
    path.p = nodes.front();
    path.q = nodes.back();
    path.speed = total;
    double tau0 = 0.0;
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
        const double dtau = (i + 2 == nodes.size()) ? 1.0 - tau0 : len[i] / total;
        const Vec& a = nodes[i];
        const Vec& b = nodes[i + 1];
        const Vec u = model.log(a, b);
        for (int j = 0; j <= samples_per_segment; ++j) {
            const double s = static_cast<double>(j) / samples_per_segment;
            Vec x = (j == samples_per_segment) ? b : model.exp(a, s * u);
            Vec v = (s <= 0.5) ? Vec(model.log(x, b) / ((1.0 - s) * dtau)) : Vec(-model.log(x, a) / (s * dtau));
            const double tau = (j == samples_per_segment) ? tau0 + dtau : tau0 + s * dtau;
            path.samples.push_back({tau, std::move(x), std::move(v)});
        }
        tau0 += dtau;
        if (i + 2 < nodes.size()) {
            const Vec& vl = path.samples.back().v;
            const Vec vr = model.log(b, nodes[i + 2]) / (len[i + 1] / total);
            path.breaks.push_back({tau0, vr - vl});
        }
    }
    path.samples.back().tau = 1.0;
    path.action = action(model, path);
    return path;
}

/// First variation dS(w) = -sum_i g(w(tau_i), Delta t(tau_i)) - int g(w, D_tau t) dtau with
/// t = v / |v|; for constant speed c this is -(1/c) sum w.Delta v - (1/c) int w_b v^a nabla_a v^b.
template <RiemannianModel M>
double first_variation(const M& model, const GeodesicPath& path, const TangentField& w) {
    const auto& s = path.samples;
    if (w.values.size() != s.size())
        throw Error(ErrorKind::GridTooCoarse, "tangent field does not match the path samples");
    const double tol = 1e-10;
    if (norm(model, s.front().x, w.values.front()) > tol || norm(model, s.back().x, w.values.back()) > tol)
        throw Error(ErrorKind::EndpointViolation, "variation field must vanish at both endpoints");

    double total = 0.0;
    const auto pieces = path.pieces();
    // break sum: consecutive pieces meet at duplicated samples
    for (std::size_t k = 1; k < pieces.size(); ++k) {
        const auto& left = s[pieces[k].first - 1];
        const auto& right = s[pieces[k].first];
        const Vec tl = left.v / norm(model, left.x, left.v);
        const Vec tr = right.v / norm(model, right.x, right.v);
        total -= model.inner(right.x, w.values[pieces[k].first], tr - tl);
    }
    const auto acc = covariant_acceleration(model, path);
    for (auto [first, last] : pieces) {
        std::vector<double> tau, f;
        for (std::size_t i = first; i < last; ++i) {
            const double sp = norm(model, s[i].x, s[i].v);
            tau.push_back(s[i].tau);
            if (sp == 0.0) {
                f.push_back(0.0);
                continue;
            }
            // D_tau (v/|v|) = Dv/|v| - g(v, Dv) v / |v|^3
            const Vec dt = acc[i] / sp - (model.inner(s[i].x, s[i].v, acc[i]) / (sp * sp * sp)) * s[i].v;
            f.push_back(model.inner(s[i].x, w.values[i], dt));
        }
        total -= detail::integrate_samples(tau, f);
    }
    return total;
}

}  // namespace pathmorse

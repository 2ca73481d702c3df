#pragma once

#include "error.hpp"
#include "geodesic.hpp"
#include "manifold.hpp"
#include "ode.hpp"
#include "types.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <vector>

namespace pathmorse {

struct ConjugatePoint {
    double s = 0.0;  // arc length from p
    int multiplicity = 0;
};

/// Matrix Jacobi solution along a geodesic, expressed in a parallel g-orthonormal frame whose
/// first vector is the unit tangent. Column i of A(s) is the Jacobi field with J(0) = 0 and
/// DJ/ds(0) = e_i.
struct JacobiSolution {
    std::vector<double> s;
    std::vector<Mat> basis;      // A(s)
    std::vector<Mat> curvature;  // T(s), T_ab = g(e_a, R(e_b, t) t)
    std::vector<Mat> frames;     // ambient frame vectors as columns
    double length = 0.0;
    std::vector<ConjugatePoint> conjugate_points;
    /// A(s) at an arbitrary arc length in [0, length], one RK4 step from the nearest stored state.
    std::function<Mat(double)> evaluate;

    [[nodiscard]] int dim() const { return basis.empty() ? 0 : static_cast<int>(basis.front().rows()); }

    /// Jacobi field of column i as ambient vectors at the stored grid.
    [[nodiscard]] std::vector<Vec> field(int i) const {
        std::vector<Vec> out;
        out.reserve(basis.size());
        for (std::size_t k = 0; k < basis.size(); ++k) out.push_back(frames[k] * basis[k].col(i));
        return out;
    }
};

struct JacobiOptions {
    GeodesicOptions steps{};
    double rank_tolerance = 1e-6;   // relative to the largest singular value of A
    double refine_tolerance = 1e-10;
};

namespace detail {

/// g-orthonormal frame at x with first column along t.
template <RiemannianModel M>
Mat adapted_frame(const M& model, const Vec& x, const Vec& t) {
    const int n = model.dim();
    const Mat basis = model.tangent_basis(x);
    Mat frame(x.size(), n);
    int filled = 0;
    auto push = [&](Vec u) {
        for (int j = 0; j < filled; ++j) u -= model.inner(x, frame.col(j), u) * frame.col(j);
        const double nu = norm(model, x, u);
        if (nu < 1e-8 || filled == n) return;
        frame.col(filled++) = u / nu;
    };
    push(t);
    for (int j = 0; j < basis.cols(); ++j) push(basis.col(j));
    if (filled != n) throw Error(ErrorKind::IntegrationFailure, "could not build a parallel frame");
    return frame;
}

inline double normal_ratio(const Mat& a) {
    const int n = static_cast<int>(a.rows());
    if (n < 2) return 1.0;
    const double big = Eigen::JacobiSVD<Mat>(a).singularValues()(0);
    if (big == 0.0) return 1.0;
    const Vec sv = Eigen::JacobiSVD<Mat>(a.bottomRightCorner(n - 1, n - 1)).singularValues();
    return sv(sv.size() - 1) / big;
}

inline int normal_rank_drop(const Mat& a, double tol) {
    const int n = static_cast<int>(a.rows());
    if (n < 2) return 0;
    const double big = Eigen::JacobiSVD<Mat>(a).singularValues()(0);
    const Vec sv = Eigen::JacobiSVD<Mat>(a.bottomRightCorner(n - 1, n - 1)).singularValues();
    int count = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv(i) < tol * big) ++count;
    return count;
}

}  // namespace detail

/// Interior arc lengths 0 < s* < L where the normal block of A(s) loses rank, with multiplicity.
inline std::vector<ConjugatePoint> detect_conjugate_points(const JacobiSolution& sol, double length,
                                                           const JacobiOptions& opts = {}) {
    std::vector<ConjugatePoint> out;
    if (sol.dim() < 2 || sol.s.size() < 3) return out;
    std::size_t m = 0;
    while (m < sol.s.size() && sol.s[m] <= length) ++m;
    if (m < 3) return out;

    std::vector<double> r(m);
    for (std::size_t i = 1; i < m; ++i) r[i] = detail::normal_ratio(sol.basis[i]);
    r[0] = r[1];
    auto ratio = [&](double s) { return detail::normal_ratio(sol.evaluate(s)); };

    for (std::size_t i = 1; i < m; ++i) {
        const bool last = i + 1 == m;
        if (r[i] > r[i - 1] || (!last && r[i] > r[i + 1])) continue;
        if (!last && r[i] == r[i + 1]) continue;  // plateau: take its right end
        // golden-section search on [a, b]
        double a = sol.s[i - 1], b = last ? length : sol.s[i + 1];
        const double g = 0.5 * (std::sqrt(5.0) - 1.0);
        double c = b - g * (b - a), d = a + g * (b - a);
        double fc = ratio(c), fd = ratio(d);
        while (b - a > opts.refine_tolerance) {
            if (fc < fd) {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = ratio(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = ratio(d);
            }
        }
        const double s_star = 0.5 * (a + b);
        if (s_star >= length - 1e-8 || s_star <= 0.0) continue;
        const int mu = detail::normal_rank_drop(sol.evaluate(s_star), opts.rank_tolerance);
        if (mu == 0) continue;
        if (!out.empty() && std::abs(out.back().s - s_star) < 1e-6) continue;
        out.push_back({s_star, mu});
    }
    return out;
}

/// Integrates D^2 J / ds^2 + R(J, t) t = 0 for the full matrix solution along an unbroken
/// geodesic, co-integrating the geodesic and its parallel frame with the geodesic stepper.
template <RiemannianModel M>
JacobiSolution integrate_jacobi(const M& model, const GeodesicPath& geodesic, const JacobiOptions& opts = {}) {
    if (!geodesic.breaks.empty()) throw Error(ErrorKind::Unsupported, "Jacobi integration needs an unbroken geodesic");
    if (geodesic.samples.size() < 2 || !(geodesic.speed > 0.0))
        throw Error(ErrorKind::IntegrationFailure, "degenerate geodesic");
    const int da = model.ambient_dim();
    const int n = model.dim();
    const double length = geodesic.speed;
    const Vec& p = geodesic.samples.front().x;
    const Vec t0 = geodesic.samples.front().v / norm(model, p, geodesic.samples.front().v);
    const Mat e0 = detail::adapted_frame(model, p, t0);

    // state layout: x | t | frame (column-major) | A | A'
    const int off_t = da, off_e = 2 * da, off_a = off_e + da * n, off_b = off_a + n * n, size = off_b + n * n;
    auto model_ptr = std::make_shared<const M>(model);

    auto curvature = [model_ptr, da, n](const Vec& st) {
        const auto& m = *model_ptr;
        const Vec x = st.segment(0, da), t = st.segment(da, da);
        Mat e = Eigen::Map<const Mat>(st.data() + 2 * da, da, n);
        Mat tid(da, n);
        for (int b = 0; b < n; ++b) tid.col(b) = m.tidal(x, t, e.col(b));
        Mat out(n, n);
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) out(a, b) = m.inner(x, e.col(a), tid.col(b));
        return out;
    };
    auto rhs = [model_ptr, curvature, da, n, off_t, off_e, off_a, off_b, size](const Vec& st, Vec& ds, double) {
        const auto& m = *model_ptr;
        ds.resize(size);
        const Vec x = st.segment(0, da), t = st.segment(off_t, da);
        ds.segment(0, da) = t;
        ds.segment(off_t, da) = m.acceleration(x, t);
        for (int b = 0; b < n; ++b)
            ds.segment(off_e + b * da, da) = m.transport_rate(x, t, st.segment(off_e + b * da, da));
        const Eigen::Map<const Mat> a(st.data() + off_a, n, n), b(st.data() + off_b, n, n);
        Eigen::Map<Mat>(ds.data() + off_a, n, n) = b;
        Eigen::Map<Mat>(ds.data() + off_b, n, n) = -curvature(st) * a;
    };
    auto clean = [model_ptr, da, n, off_t, off_e](Vec& st) {
        const auto& m = *model_ptr;
        const Vec x = m.project(st.segment(0, da));
        st.segment(0, da) = x;
        st.segment(off_t, da) = m.to_tangent(x, st.segment(off_t, da));
        for (int b = 0; b < n; ++b)
            st.segment(off_e + b * da, da) = m.to_tangent(x, st.segment(off_e + b * da, da));
        if (!st.allFinite()) throw Error(ErrorKind::IntegrationFailure, "Jacobi integration produced non-finite state");
    };

    Vec state = Vec::Zero(size);
    state.segment(0, da) = p;
    state.segment(off_t, da) = t0;
    Eigen::Map<Mat>(state.data() + off_e, da, n) = e0;
    Eigen::Map<Mat>(state.data() + off_b, n, n) = Mat::Identity(n, n);

    const double arc = detail::round_length(model, length);
    const int steps = std::max(opts.steps.min_steps, static_cast<int>(std::ceil(arc / opts.steps.max_arc_step)));
    const double h = length / steps;

    auto states = std::make_shared<std::vector<Vec>>();
    states->reserve(static_cast<std::size_t>(steps) + 1);
    JacobiSolution sol;
    sol.length = length;
    auto record = [&](double s) {
        states->push_back(state);
        sol.s.push_back(s);
        sol.basis.emplace_back(Eigen::Map<const Mat>(state.data() + off_a, n, n));
        sol.frames.emplace_back(Eigen::Map<const Mat>(state.data() + off_e, da, n));
        sol.curvature.push_back(curvature(state));
    };
    record(0.0);
    Rk4Stepper stepper;
    for (int i = 0; i < steps; ++i) {
        stepper.do_step(rhs, state, i * h, h);
        clean(state);
        record((i + 1) * h);
    }
    sol.s.back() = length;

    sol.evaluate = [states, rhs, clean, h, steps, off_a, n](double s) -> Mat {
        const int j = std::clamp(static_cast<int>(std::floor(s / h)), 0, steps);
        Vec st = (*states)[static_cast<std::size_t>(j)];
        const double ds = s - j * h;
        if (ds != 0.0) {
            Rk4Stepper one;
            one.do_step(rhs, st, j * h, ds);
            clean(st);
        }
        return Eigen::Map<const Mat>(st.data() + off_a, n, n);
    };
    sol.conjugate_points = detect_conjugate_points(sol, length, opts);
    return sol;
}

/// True when the endpoint is conjugate to the start along the integrated geodesic.
inline bool endpoint_conjugate(const JacobiSolution& sol, const JacobiOptions& opts = {}) {
    return detail::normal_rank_drop(sol.basis.back(), opts.rank_tolerance) > 0;
}

/// ind(gamma): interior conjugate points counted with multiplicity.
template <RiemannianModel M>
int morse_index(const M& model, const GeodesicPath& geodesic, const JacobiOptions& opts = {}) {
    const JacobiSolution sol = integrate_jacobi(model, geodesic, opts);
    if (endpoint_conjugate(sol, opts))
        throw Error(ErrorKind::ConjugateEndpoints, "endpoints are conjugate; the index is not defined");
    int index = 0;
    for (const auto& cp : sol.conjugate_points) index += cp.multiplicity;
    return index;
}

/// Covariant derivative D w / d tau of a field along an unbroken, uniformly sampled path.
template <RiemannianModel M>
std::vector<Vec> covariant_derivative(const M& model, const GeodesicPath& path, const std::vector<Vec>& w) {
    const auto& s = path.samples;
    if (w.size() != s.size()) throw Error(ErrorKind::GridTooCoarse, "tangent field does not match the path samples");
    const double h = (s.back().tau - s.front().tau) / static_cast<double>(s.size() - 1);
    std::vector<Vec> dw = detail::grid_derivative(w, h);
    for (std::size_t i = 0; i < s.size(); ++i)
        dw[i] = model.to_tangent(s[i].x, dw[i] - model.transport_rate(s[i].x, s[i].v, w[i]));
    return dw;
}

/// (w1, w2) = int_0^1 g(w1, w2) d tau.
template <RiemannianModel M>
double field_inner(const M& model, const GeodesicPath& path, const TangentField& w1, const TangentField& w2) {
    const auto& s = path.samples;
    if (w1.values.size() != s.size() || w2.values.size() != s.size())
        throw Error(ErrorKind::GridTooCoarse, "tangent field does not match the path samples");
    std::vector<double> tau(s.size()), f(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        tau[i] = s[i].tau;
        f[i] = model.inner(s[i].x, w1.values[i], w2.values[i]);
    }
    return detail::integrate_samples(tau, f);
}

namespace detail {

/// Parallel g-orthonormal frames at every sample of an unbroken path, the first vector along
/// the initial velocity. Each RK4 step starts from the stored sample (x, v).
template <RiemannianModel M>
std::vector<Mat> parallel_frames(const M& model, const GeodesicPath& path) {
    const auto& s = path.samples;
    const int da = model.ambient_dim(), n = model.dim();
    std::vector<Mat> out;
    out.reserve(s.size());
    out.push_back(adapted_frame(model, s.front().x, s.front().v));
    const int size = 2 * da + da * n;
    auto rhs = [&](const Vec& st, Vec& ds, double) {
        ds.resize(size);
        const Vec x = st.head(da), v = st.segment(da, da);
        ds.head(da) = v;
        ds.segment(da, da) = model.acceleration(x, v);
        for (int b = 0; b < n; ++b)
            ds.segment(2 * da + b * da, da) = model.transport_rate(x, v, st.segment(2 * da + b * da, da));
    };
    Rk4Stepper stepper;
    Vec st(size);
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        st << s[i].x, s[i].v, Eigen::Map<const Vec>(out.back().data(), da * n);
        stepper.do_step(rhs, st, s[i].tau, s[i + 1].tau - s[i].tau);
        Mat e = Eigen::Map<const Mat>(st.data() + 2 * da, da, n);
        for (int b = 0; b < n; ++b) e.col(b) = model.to_tangent(s[i + 1].x, e.col(b));
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace detail

/// Sturm-Liouville operator of the second variation along an unbroken geodesic, in the
/// path parameter tau: Lambda w = -D^2 w / d tau^2 - R(w, v) v with v = d gamma / d tau.
/// D^2 is evaluated on the coefficients of w in a parallel orthonormal frame.
template <RiemannianModel M>
class SturmLiouvilleOperator {
public:
    SturmLiouvilleOperator(const M& model, const GeodesicPath& geodesic) : model_(model), path_(geodesic) {
        if (!geodesic.breaks.empty())
            throw Error(ErrorKind::Unsupported, "the Sturm-Liouville operator is defined on unbroken geodesics");
        if (geodesic.samples.size() < 10) throw Error(ErrorKind::GridTooCoarse, "need at least 8 interior samples");
        frames_ = detail::parallel_frames(model, geodesic);
    }

    [[nodiscard]] const GeodesicPath& path() const { return path_; }
    [[nodiscard]] const M& model() const { return model_; }

    [[nodiscard]] TangentField apply(const TangentField& w) const {
        const auto& s = path_.samples;
        if (w.values.size() != s.size()) throw Error(ErrorKind::GridTooCoarse, "tangent field does not match the path samples");
        const int n = model_.dim();
        std::vector<Vec> coeff(s.size(), Vec(n));
        for (std::size_t i = 0; i < s.size(); ++i)
            for (int a = 0; a < n; ++a) coeff[i](a) = model_.inner(s[i].x, frames_[i].col(a), w.values[i]);
        const double h = (s.back().tau - s.front().tau) / static_cast<double>(s.size() - 1);
        const auto dd = detail::grid_second_derivative(coeff, h);
        TangentField out;
        out.endpoint_zero = false;
        out.values.reserve(s.size());
        for (std::size_t i = 0; i < s.size(); ++i)
            out.values.push_back(-frames_[i] * dd[i] - model_.tidal(s[i].x, s[i].v, w.values[i]));
        return out;
    }

    /// (w1, w2) = int_0^1 g(w1, w2) d tau.
    [[nodiscard]] double inner(const TangentField& w1, const TangentField& w2) const {
        return field_inner(model_, path_, w1, w2);
    }

private:
    const M& model_;
    const GeodesicPath& path_;
    std::vector<Mat> frames_;
};

template <RiemannianModel M>
TangentField apply_sturm_liouville(const SturmLiouvilleOperator<M>& op, const TangentField& w) {
    return op.apply(w);
}

/// S2(w1, w2) = (1/c) (w1, Lambda w2) for an unbroken geodesic and endpoint-zero fields,
/// evaluated as the average of (w1, Lambda w2) and (Lambda w1, w2) so the discrete form is
/// exactly symmetric.
template <RiemannianModel M>
double second_variation_form(const M& model, const GeodesicPath& geodesic, const TangentField& w1,
                             const TangentField& w2) {
    const SturmLiouvilleOperator<M> op(model, geodesic);
    const auto& s = geodesic.samples;
    for (const TangentField* w : {&w1, &w2}) {
        if (w->values.size() != s.size())
            throw Error(ErrorKind::GridTooCoarse, "tangent field does not match the path samples");
        if (norm(model, s.front().x, w->values.front()) > 1e-10 || norm(model, s.back().x, w->values.back()) > 1e-10)
            throw Error(ErrorKind::EndpointViolation, "second variation needs endpoint-zero fields");
    }
    return 0.5 * (op.inner(w1, op.apply(w2)) + op.inner(op.apply(w1), w2)) / geodesic.speed;
}

/// Hessian of the discretized energy (lambda/2) sum d(x_{i-1}, x_i)^2 over broken geodesics
/// with lambda equal parameter steps, at the nodes of a geodesic. Interior node i is perturbed
/// as project(x_i + B_i xi_i) with a g-orthonormal tangent basis B_i.
struct DiscreteHessian {
    int lambda = 0;
    std::vector<Vec> nodes;
    std::vector<Mat> basis;  // empty at the two endpoints
    Mat matrix;              // ((lambda - 1) n) square, node-major
};

struct HessianSpectrum {
    Vec eigenvalues;  // ascending
    Mat eigenvectors;  // columns, Euclidean-orthonormal in the stacked xi coordinates (if requested)
    int index = 0;
    double smallest_abs = 0.0;
};

template <RiemannianModel M>
DiscreteHessian discrete_hessian(const M& model, const GeodesicPath& geodesic, int lambda, double h = 3e-5) {
    if (!geodesic.breaks.empty()) throw Error(ErrorKind::Unsupported, "Hessian index needs an unbroken geodesic");
    const int n = model.dim();
    const double length = geodesic.speed;
    int expected = 0;
    if constexpr (is_sphere_v<M>)
        expected = static_cast<int>(std::floor(detail::round_length(model, length) / kPi)) * (n - 1);
    if (lambda < 2 * (expected + 1) || length / lambda >= model.max_segment_length())
        throw Error(ErrorKind::SegmentCountTooSmall, "too few segments for the discretized Hessian");

    DiscreteHessian out;
    out.lambda = lambda;
    const Vec& p = geodesic.samples.front().x;
    const Vec& v0 = geodesic.samples.front().v;
    auto& nodes = out.nodes;
    auto& basis = out.basis;
    nodes.resize(static_cast<std::size_t>(lambda) + 1);
    basis.resize(nodes.size());
    nodes.front() = p;
    nodes.back() = geodesic.samples.back().x;
    for (int i = 1; i < lambda; ++i) {
        nodes[i] = model.exp(p, (static_cast<double>(i) / lambda) * v0);
        basis[i] = model.tangent_basis(nodes[i]);
    }
    auto moved = [&](int i, const Vec& xi) -> Vec {
        if (i == 0 || i == lambda) return nodes[i];
        return model.project(nodes[i] + basis[i] * xi);
    };
    // Pair term (lambda/2) d(x_{i-1}, x_i)^2 as a function of the stacked perturbation.
    auto pair = [&](int i, const Vec& z) {
        const double d = model.distance(moved(i - 1, z.head(n)), moved(i, z.tail(n)));
        return 0.5 * lambda * d * d;
    };

    const int dof = (lambda - 1) * n;
    Mat& H = out.matrix;
    H = Mat::Zero(dof, dof);
    for (int i = 1; i <= lambda; ++i) {
        // local variables: node i-1 (if interior) then node i (if interior)
        std::vector<int> local, global;
        for (int j = 0; j < n; ++j)
            if (i - 1 >= 1) local.push_back(j), global.push_back((i - 2) * n + j);
        for (int j = 0; j < n; ++j)
            if (i <= lambda - 1) local.push_back(n + j), global.push_back((i - 1) * n + j);
        const int k = static_cast<int>(local.size());
        Vec z = Vec::Zero(2 * n);
        const double f0 = pair(i, z);
        for (int a = 0; a < k; ++a) {
            for (int b = a; b < k; ++b) {
                double val;
                if (a == b) {
                    z(local[a]) = h;
                    const double fp = pair(i, z);
                    z(local[a]) = -h;
                    const double fm = pair(i, z);
                    z(local[a]) = 0.0;
                    val = (fp - 2.0 * f0 + fm) / (h * h);
                } else {
                    double acc = 0.0;
                    for (int sa : {1, -1})
                        for (int sb : {1, -1}) {
                            z(local[a]) = sa * h;
                            z(local[b]) = sb * h;
                            acc += sa * sb * pair(i, z);
                        }
                    z(local[a]) = z(local[b]) = 0.0;
                    val = acc / (4.0 * h * h);
                }
                H(global[a], global[b]) += val;
                if (a != b) H(global[b], global[a]) += val;
            }
        }
    }
    return out;
}

inline HessianSpectrum hessian_spectrum(const DiscreteHessian& hess, bool vectors = false) {
    Eigen::SelfAdjointEigenSolver<Mat> es(hess.matrix, vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
    HessianSpectrum out;
    out.eigenvalues = es.eigenvalues();
    if (vectors) out.eigenvectors = es.eigenvectors();
    const double scale = std::max(1.0, out.eigenvalues.cwiseAbs().maxCoeff());
    out.smallest_abs = out.eigenvalues.cwiseAbs().minCoeff();
    for (int i = 0; i < out.eigenvalues.size(); ++i)
        if (out.eigenvalues(i) < -1e-9 * scale) ++out.index;
    return out;
}

template <RiemannianModel M>
HessianSpectrum discrete_hessian_spectrum(const M& model, const GeodesicPath& geodesic, int lambda, double h = 3e-5) {
    return hessian_spectrum(discrete_hessian(model, geodesic, lambda, h));
}

/// Negative-eigenvalue directions as node fields (ambient vectors, zero at the endpoints),
/// orthonormal in the node inner product sum_i (1/lambda) g. Each is oriented so that its
/// largest stacked coordinate is positive.
inline std::vector<std::vector<Vec>> unstable_directions(const DiscreteHessian& hess) {
    const HessianSpectrum spec = hessian_spectrum(hess, true);
    const int lambda = hess.lambda;
    const int n = lambda > 1 ? static_cast<int>(hess.basis[1].cols()) : 0;
    std::vector<std::vector<Vec>> out;
    for (int k = 0; k < spec.index; ++k) {
        Vec xi = spec.eigenvectors.col(k);
        Eigen::Index arg;
        xi.cwiseAbs().maxCoeff(&arg);
        if (xi(arg) < 0.0) xi = -xi;
        xi *= std::sqrt(static_cast<double>(lambda));
        std::vector<Vec> field(hess.nodes.size(), Vec::Zero(hess.nodes.front().size()));
        for (int i = 1; i < lambda; ++i) field[i] = hess.basis[i] * xi.segment((i - 1) * n, n);
        out.push_back(std::move(field));
    }
    return out;
}

/// Number of negative eigenvalues of the discretized second variation.
template <RiemannianModel M>
int hessian_spectrum_index(const M& model, const GeodesicPath& geodesic, int lambda) {
    return discrete_hessian_spectrum(model, geodesic, lambda).index;
}

}  // namespace pathmorse

#pragma once

#include "error.hpp"
#include "ode.hpp"
#include "system.hpp"
#include "types.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace pathmorse {

/// Christoffel symbols Gamma^b_ac stored densely; symmetric in (a, c).
class Christoffel {
public:
    explicit Christoffel(int n) : n_(n), data_(static_cast<std::size_t>(n * n * n), 0.0) {}

    [[nodiscard]] int dim() const { return n_; }
    double& operator()(int b, int a, int c) { return data_[index(b, a, c)]; }
    [[nodiscard]] double operator()(int b, int a, int c) const { return data_[index(b, a, c)]; }

    /// Gamma^b_ac u^a w^c
    [[nodiscard]] Vec contract(const Vec& u, const Vec& w) const {
        Vec out = Vec::Zero(n_);
        for (int b = 0; b < n_; ++b)
            for (int a = 0; a < n_; ++a)
                for (int c = 0; c < n_; ++c) out(b) += (*this)(b, a, c) * u(a) * w(c);
        return out;
    }

    [[nodiscard]] double max_abs() const {
        double m = 0.0;
        for (double d : data_) m = std::max(m, std::abs(d));
        return m;
    }

private:
    [[nodiscard]] std::size_t index(int b, int a, int c) const {
        return static_cast<std::size_t>((b * n_ + a) * n_ + c);
    }
    int n_;
    std::vector<double> data_;
};

/// Riemann tensor R_abc^d with (nabla_a nabla_b - nabla_b nabla_a) omega_c = R_abc^d omega_d.
class Riemann {
public:
    explicit Riemann(int n) : n_(n), data_(static_cast<std::size_t>(n * n * n * n), 0.0) {}

    [[nodiscard]] int dim() const { return n_; }
    double& operator()(int a, int b, int c, int d) { return data_[index(a, b, c, d)]; }
    [[nodiscard]] double operator()(int a, int b, int c, int d) const { return data_[index(a, b, c, d)]; }

    /// Geodesic-deviation operator: (R_abd^c v^a w^b v^d), so that D^2 J + tidal(v, J) = 0.
    [[nodiscard]] Vec tidal(const Vec& v, const Vec& w) const {
        Vec out = Vec::Zero(n_);
        for (int a = 0; a < n_; ++a)
            for (int b = 0; b < n_; ++b)
                for (int d = 0; d < n_; ++d)
                    for (int c = 0; c < n_; ++c) out(c) += (*this)(a, b, d, c) * v(a) * w(b) * v(d);
        return out;
    }

    [[nodiscard]] double max_abs() const {
        double m = 0.0;
        for (double d : data_) m = std::max(m, std::abs(d));
        return m;
    }

private:
    [[nodiscard]] std::size_t index(int a, int b, int c, int d) const {
        return static_cast<std::size_t>(((a * n_ + b) * n_ + c) * n_ + d);
    }
    int n_;
    std::vector<double> data_;
};

/// A single coordinate chart carrying a (dressed) Riemannian metric.
///
/// The base metric eta(x) is user supplied; its coordinate derivatives are used
/// when given and replaced by central differences otherwise. The dressing factor
/// is evaluated at radius(x).
class Chart {
public:
    using MetricFn = std::function<Mat(const Vec&)>;
    using MetricDerivativeFn = std::function<std::vector<Mat>(const Vec&)>;
    using ScalarFn = std::function<double(const Vec&)>;
    using GradientFn = std::function<Vec(const Vec&)>;

    struct Spec {
        int dim = 2;
        std::string label = "chart";
        MetricFn base_metric;
        MetricDerivativeFn base_metric_derivative;  // optional
        Vec lower;                                  // coordinate box, exclusive
        Vec upper;
        ScalarFn radius;             // defaults to |x|
        GradientFn radius_gradient;  // defaults to x / |x|
        double coordinate_scale = 1.0;
        bool constant_base_metric = false;
        double max_segment_length = std::numeric_limits<double>::infinity();
    };

    Chart(Spec spec, ConservativeSystem system) : spec_(std::move(spec)), system_(std::move(system)) {
        system_.validate();
        const int n = spec_.dim;
        if (spec_.lower.size() != n) spec_.lower = Vec::Constant(n, -std::numeric_limits<double>::infinity());
        if (spec_.upper.size() != n) spec_.upper = Vec::Constant(n, std::numeric_limits<double>::infinity());
        if (!spec_.radius) spec_.radius = [](const Vec& x) { return x.norm(); };
        if (!spec_.radius_gradient)
            spec_.radius_gradient = [](const Vec& x) -> Vec {
                const double r = x.norm();
                return r > 0.0 ? Vec(x / r) : Vec(Vec::Zero(x.size()));
            };
        const auto& coeffs = system_.potential.coefficients();
        flat_ = spec_.constant_base_metric && coeffs.size() <= 1;
        if (flat_) {
            const Vec x0 = Vec::Zero(n).cwiseMax(spec_.lower).cwiseMin(spec_.upper);
            flat_g_ = metric(x0);
        }
    }

    /// Flat R^n with base metric delta_ab.
    static Chart euclidean(int n, ConservativeSystem system = {}) {
        Spec s;
        s.dim = n;
        s.label = "euclidean";
        s.base_metric = [n](const Vec&) -> Mat { return Mat::Identity(n, n); };
        s.base_metric_derivative = [n](const Vec&) { return std::vector<Mat>(n, Mat::Zero(n, n)); };
        s.constant_base_metric = true;
        return Chart(std::move(s), std::move(system));
    }

    /// Round unit S^n in hyperspherical coordinates (theta_1, ..., theta_{n-1}, phi):
    /// ds^2 = dtheta_1^2 + sin^2 theta_1 dtheta_2^2 + ... . The radius is identically 1.
    static Chart spherical(int n = 2, ConservativeSystem system = {}) {
        Spec s;
        s.dim = n;
        s.label = "spherical";
        s.base_metric = [n](const Vec& x) -> Mat {
            Mat g = Mat::Zero(n, n);
            double w = 1.0;
            for (int k = 0; k < n; ++k) {
                g(k, k) = w;
                if (k + 1 < n) w *= std::sin(x(k)) * std::sin(x(k));
            }
            return g;
        };
        s.base_metric_derivative = [n](const Vec& x) {
            // d_j prod_{i<k} sin^2 x_i = 2 sin x_j cos x_j prod_{i<k, i!=j} sin^2 x_i  for j < k
            std::vector<Mat> d(n, Mat::Zero(n, n));
            for (int j = 0; j + 1 < n; ++j)
                for (int k = j + 1; k < n; ++k) {
                    double v = 2.0 * std::sin(x(j)) * std::cos(x(j));
                    for (int i = 0; i < k; ++i)
                        if (i != j) v *= std::sin(x(i)) * std::sin(x(i));
                    d[j](k, k) = v;
                }
            return d;
        };
        s.lower = Vec::Zero(n);
        s.upper = Vec::Constant(n, kPi);
        s.lower(n - 1) = -std::numeric_limits<double>::infinity();
        s.upper(n - 1) = std::numeric_limits<double>::infinity();
        s.radius = [](const Vec&) { return 1.0; };
        s.radius_gradient = [n](const Vec&) -> Vec { return Vec::Zero(n); };
        return Chart(std::move(s), std::move(system));
    }

    [[nodiscard]] int dim() const { return spec_.dim; }
    [[nodiscard]] int ambient_dim() const { return spec_.dim; }
    [[nodiscard]] const std::string& label() const { return spec_.label; }
    [[nodiscard]] const ConservativeSystem& system() const { return system_; }
    [[nodiscard]] bool is_flat() const { return flat_; }
    [[nodiscard]] bool has_analytic_derivatives() const { return static_cast<bool>(spec_.base_metric_derivative); }
    [[nodiscard]] double coordinate_scale() const { return spec_.coordinate_scale; }
    [[nodiscard]] double max_segment_length() const { return spec_.max_segment_length; }

    void check_point(const Vec& x) const {
        for (int i = 0; i < dim(); ++i)
            if (!(x(i) > spec_.lower(i) && x(i) < spec_.upper(i)))
                throw Error(ErrorKind::OutOfChart, "coordinate " + std::to_string(i) + " outside chart domain");
    }

    [[nodiscard]] Mat metric(const Vec& x) const {
        check_point(x);
        Mat g = dressed_metric(system_, spec_.radius(x), spec_.base_metric(x));
        Eigen::SelfAdjointEigenSolver<Mat> eig(g, Eigen::EigenvaluesOnly);
        const double lo = eig.eigenvalues().minCoeff();
        const double hi = eig.eigenvalues().maxCoeff();
        if (!(lo > 1e-12 * std::max(1.0, hi)))
            throw Error(ErrorKind::DegenerateMetric, "metric is not positive definite at the evaluation point");
        return g;
    }

    /// Coordinate derivatives d_k g_ab, k = 0..n-1.
    [[nodiscard]] std::vector<Mat> metric_derivative(const Vec& x) const {
        const int n = dim();
        std::vector<Mat> d(n);
        if (spec_.base_metric_derivative) {
            check_point(x);
            const double r = spec_.radius(x);
            const double factor = system_.conformal_factor(r);
            const double dfactor = system_.conformal_factor_derivative(r);
            const Vec dr = spec_.radius_gradient(x);
            const Mat eta = spec_.base_metric(x);
            const auto deta = spec_.base_metric_derivative(x);
            for (int k = 0; k < n; ++k) d[k] = dfactor * dr(k) * eta + factor * deta[k];
            return d;
        }
        const double h = fd_step();
        for (int k = 0; k < n; ++k) {
            Vec xp = x, xm = x;
            xp(k) += h;
            xm(k) -= h;
            d[k] = (metric(xp) - metric(xm)) / (2.0 * h);
        }
        return d;
    }

    [[nodiscard]] Christoffel christoffel(const Vec& x) const {
        const int n = dim();
        Christoffel gamma(n);
        if (flat_) {
            check_point(x);
            return gamma;
        }
        const Mat ginv = metric(x).inverse();
        const auto dg = metric_derivative(x);
        // Gamma^b_ac = 1/2 g^bd (d_a g_dc + d_c g_da - d_d g_ac)
        for (int b = 0; b < n; ++b)
            for (int a = 0; a < n; ++a)
                for (int c = a; c < n; ++c) {
                    double s = 0.0;
                    for (int d = 0; d < n; ++d) s += ginv(b, d) * (dg[a](d, c) + dg[c](d, a) - dg[d](a, c));
                    gamma(b, a, c) = 0.5 * s;
                    gamma(b, c, a) = 0.5 * s;
                }
        return gamma;
    }

    [[nodiscard]] Riemann riemann(const Vec& x) const {
        const int n = dim();
        Riemann R(n);
        if (flat_) {
            check_point(x);
            return R;
        }
        const Christoffel g0 = christoffel(x);
        // dG[k](d, a, c) = d_k Gamma^d_ac
        const double h = has_analytic_derivatives() ? 1e-5 * spec_.coordinate_scale : 1e-4 * spec_.coordinate_scale;
        std::vector<Christoffel> dG;
        dG.reserve(n);
        for (int k = 0; k < n; ++k) {
            Vec xp = x, xm = x;
            xp(k) += h;
            xm(k) -= h;
            const Christoffel gp = christoffel(xp);
            const Christoffel gm = christoffel(xm);
            Christoffel diff(n);
            for (int d = 0; d < n; ++d)
                for (int a = 0; a < n; ++a)
                    for (int c = 0; c < n; ++c) diff(d, a, c) = (gp(d, a, c) - gm(d, a, c)) / (2.0 * h);
            dG.push_back(std::move(diff));
        }
        // R_abc^d = d_b Gamma^d_ac - d_a Gamma^d_bc + Gamma^e_ac Gamma^d_be - Gamma^e_bc Gamma^d_ae
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b)
                for (int c = 0; c < n; ++c)
                    for (int d = 0; d < n; ++d) {
                        double s = dG[b](d, a, c) - dG[a](d, b, c);
                        for (int e = 0; e < n; ++e) s += g0(e, a, c) * g0(d, b, e) - g0(e, b, c) * g0(d, a, e);
                        R(a, b, c, d) = s;
                    }
        return R;
    }

    // ---- model interface -------------------------------------------------

    [[nodiscard]] Vec project(const Vec& x) const { return x; }
    [[nodiscard]] Vec to_tangent(const Vec&, const Vec& u) const { return u; }

    [[nodiscard]] double inner(const Vec& x, const Vec& u, const Vec& w) const {
        if (flat_) return u.dot(flat_metric() * w);
        return u.dot(metric(x) * w);
    }

    /// Columns form a g-orthonormal basis of T_x.
    [[nodiscard]] Mat tangent_basis(const Vec& x) const {
        const Mat g = flat_ ? flat_metric() : metric(x);
        Eigen::LLT<Mat> llt(g);
        // g = L L^T  =>  E = L^{-T} satisfies E^T g E = I
        return llt.matrixU().solve(Mat::Identity(dim(), dim()));
    }

    [[nodiscard]] Vec acceleration(const Vec& x, const Vec& v) const {
        if (flat_) return Vec::Zero(dim());
        return -christoffel(x).contract(v, v);
    }

    [[nodiscard]] Vec transport_rate(const Vec& x, const Vec& v, const Vec& e) const {
        if (flat_) return Vec::Zero(dim());
        return -christoffel(x).contract(v, e);
    }

    [[nodiscard]] Vec tidal(const Vec& x, const Vec& v, const Vec& w) const {
        if (flat_) return Vec::Zero(dim());
        return riemann(x).tidal(v, w);
    }

    [[nodiscard]] Vec exp(const Vec& x, const Vec& v) const {
        if (flat_) return x + v;
        const double len = std::sqrt(std::max(0.0, inner(x, v, v)));
        const int steps = std::max(32, static_cast<int>(std::ceil(len / (2.0 * kPi / 512.0))));
        const double h = 1.0 / steps;
        const int n = dim();
        Vec state(2 * n);
        state << x, v;
        Rk4Stepper stepper;
        auto rhs = [this, n](const Vec& s, Vec& ds, double) {
            ds.resize(2 * n);
            ds.head(n) = s.tail(n);
            ds.tail(n) = acceleration(s.head(n), s.tail(n));
        };
        for (int i = 0; i < steps; ++i) stepper.do_step(rhs, state, i * h, h);
        return state.head(n);
    }

    /// Initial velocity of the geodesic from x reaching y at unit time, by Newton shooting.
    [[nodiscard]] Vec log(const Vec& x, const Vec& y) const {
        if (flat_) return y - x;
        const int n = dim();
        Vec v = y - x;
        const double tol = 1e-12 * spec_.coordinate_scale;
        for (int iter = 0; iter < 60; ++iter) {
            const Vec r = exp(x, v) - y;
            if (r.norm() < tol) return v;
            Mat J(n, n);
            const double h = 1e-7 * std::max(1.0, v.norm());
            for (int k = 0; k < n; ++k) {
                Vec vp = v, vm = v;
                vp(k) += h;
                vm(k) -= h;
                J.col(k) = (exp(x, vp) - exp(x, vm)) / (2.0 * h);
            }
            Vec step = J.fullPivLu().solve(r);
            double damping = 1.0;
            const double rn = r.norm();
            while (damping > 1e-6) {
                const Vec trial = v - damping * step;
                double trial_norm = std::numeric_limits<double>::infinity();
                try {
                    trial_norm = (exp(x, trial) - y).norm();
                } catch (const Error&) {
                }
                if (trial_norm < rn) {
                    v = trial;
                    break;
                }
                damping *= 0.5;
            }
            if (damping <= 1e-6) break;
        }
        throw Error(ErrorKind::NoConvergence, "geodesic shooting in chart did not converge");
    }

    [[nodiscard]] double distance(const Vec& x, const Vec& y) const {
        const Vec v = log(x, y);
        return std::sqrt(std::max(0.0, inner(x, v, v)));
    }

private:
    [[nodiscard]] double fd_step() const { return 1e-5 * spec_.coordinate_scale; }
    [[nodiscard]] const Mat& flat_metric() const { return flat_g_; }

    Spec spec_;
    ConservativeSystem system_;
    bool flat_ = false;
    Mat flat_g_;
};

inline Christoffel christoffel(const Chart& chart, const Vec& x) { return chart.christoffel(x); }
inline Riemann riemann(const Chart& chart, const Vec& x) { return chart.riemann(x); }

}  // namespace pathmorse

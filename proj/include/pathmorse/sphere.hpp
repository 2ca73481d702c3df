#pragma once

#include "error.hpp"
#include "system.hpp"
#include "types.hpp"

#include <cmath>
#include <string>

namespace pathmorse {

/// Unit sphere S^n embedded in R^{n+1}, carrying the dressed metric kappa * (round metric).
///
/// Points and tangent vectors are ambient vectors. The potential depends only on the
/// distance from the centre, which is 1 everywhere on the sphere, so the dressing
/// factor kappa is a constant.
class Sphere {
public:
    explicit Sphere(int n, ConservativeSystem system = {})
        : n_(n), system_(std::move(system)), kappa_(system_.conformal_factor(1.0)) {
        if (n < 1) throw Error(ErrorKind::ConfigInvalid, "sphere dimension must be at least 1");
    }

    [[nodiscard]] int dim() const { return n_; }
    [[nodiscard]] int ambient_dim() const { return n_ + 1; }
    [[nodiscard]] std::string label() const { return "sphere"; }
    [[nodiscard]] const ConservativeSystem& system() const { return system_; }

    /// Constant conformal factor of the dressed metric.
    [[nodiscard]] double kappa() const { return kappa_; }
    [[nodiscard]] double sectional_curvature() const { return 1.0 / kappa_; }

    /// Segments of broken paths must stay below this dressed length to be minimizing.
    [[nodiscard]] double max_segment_length() const { return std::sqrt(kappa_) * (kPi - kSegmentMargin); }

    void check_point(const Vec& x) const {
        if (x.size() != n_ + 1 || std::abs(x.norm() - 1.0) > 1e-6)
            throw Error(ErrorKind::OutOfChart, "point is not on the unit sphere");
    }

    [[nodiscard]] Vec project(const Vec& x) const { return x / x.norm(); }
    [[nodiscard]] Vec to_tangent(const Vec& x, const Vec& u) const { return u - u.dot(x) * x; }

    [[nodiscard]] double inner(const Vec&, const Vec& u, const Vec& w) const { return kappa_ * u.dot(w); }

    [[nodiscard]] Mat tangent_basis(const Vec& x) const {
        Mat a(n_ + 1, 1);
        a.col(0) = x;
        Eigen::HouseholderQR<Mat> qr(a);
        const Mat q = qr.householderQ();
        return q.rightCols(n_) / std::sqrt(kappa_);
    }

    /// Ambient form of the geodesic equation, x'' = -(|x'|^2 / |x|^2) x.
    [[nodiscard]] Vec acceleration(const Vec& x, const Vec& v) const { return -(v.squaredNorm() / x.squaredNorm()) * x; }

    /// Parallel transport along x(t): e' = -((e . x') / |x|^2) x.
    [[nodiscard]] Vec transport_rate(const Vec& x, const Vec& v, const Vec& e) const {
        return -(e.dot(v) / x.squaredNorm()) * x;
    }

    /// R(w, v) v = K (g(v, v) w - g(w, v) v) with K = 1 / kappa.
    [[nodiscard]] Vec tidal(const Vec&, const Vec& v, const Vec& w) const { return v.squaredNorm() * w - v.dot(w) * v; }

    [[nodiscard]] Vec exp(const Vec& x, const Vec& v) const {
        const double angle = v.norm();
        if (angle == 0.0) return x;
        Vec y = std::cos(angle) * x + (std::sin(angle) / angle) * v;
        return y / y.norm();
    }

    /// Initial velocity of the minimizing great-circle arc from x to y.
    [[nodiscard]] Vec log(const Vec& x, const Vec& y) const {
        const double c = x.dot(y);
        Vec w = y - c * x;
        const double s = w.norm();
        if (s < 1e-300) {
            if (c > 0.0) return Vec::Zero(n_ + 1);
            throw Error(ErrorKind::AntipodalEndpoints, "logarithm undefined between antipodal points");
        }
        return (std::atan2(s, c) / s) * w;
    }

    /// Round angle between two points.
    [[nodiscard]] static double angle(const Vec& x, const Vec& y) {
        return std::atan2((y - x.dot(y) * x).norm(), x.dot(y));
    }

    [[nodiscard]] double distance(const Vec& x, const Vec& y) const { return std::sqrt(kappa_) * angle(x, y); }

    static constexpr double kSegmentMargin = 1e-2;

private:
    int n_;
    ConservativeSystem system_;
    double kappa_;
};

}  // namespace pathmorse

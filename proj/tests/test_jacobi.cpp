#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"

#include <pathmorse/jacobi.hpp>

#include <cmath>
#include <random>

using namespace pathmorse;
using Catch::Approx;
using oracle::e;

namespace {

GeodesicPath great_circle(const Sphere& s, double length) {
    const int d = s.ambient_dim();
    return integrate_geodesic(s, e(d, 0), e(d, 1), length);
}

TangentField profile(const GeodesicPath& g, const Vec& dir, int mode, const Sphere& s) {
    TangentField w;
    for (const auto& smp : g.samples) w.values.push_back(std::sin(mode * kPi * smp.tau) * s.to_tangent(smp.x, dir));
    w.values.front().setZero();
    w.values.back().setZero();
    return w;
}

template <class M>
TangentField random_field(const M& model, const GeodesicPath& g, std::mt19937_64& rng) {
    std::normal_distribution<double> N;
    const int d = model.ambient_dim();
    std::vector<Vec> coeff;
    for (int j = 0; j < 4; ++j) {
        Vec c(d);
        for (int i = 0; i < d; ++i) c(i) = N(rng);
        coeff.push_back(c);
    }
    TangentField w;
    for (const auto& smp : g.samples) {
        Vec u = Vec::Zero(d);
        for (int j = 0; j < 4; ++j) u += std::sin((j + 1) * kPi * smp.tau) * coeff[j];
        w.values.push_back(model.to_tangent(smp.x, u));
    }
    w.values.front().setZero();
    w.values.back().setZero();
    return w;
}

double max_norm(const std::vector<Vec>& f) {
    double m = 0.0;
    for (const auto& v : f) m = std::max(m, v.norm());
    return m;
}

}  // namespace

TEST_CASE("Jacobi solution on the round sphere", "[jacobi]") {
    const Sphere s2(2);
    const JacobiSolution sol = integrate_jacobi(s2, great_circle(s2, 1.5 * kPi));
    REQUIRE(sol.conjugate_points.size() == 1);
    CHECK(sol.conjugate_points[0].s == Approx(kPi).margin(1e-4));
    CHECK(sol.conjugate_points[0].multiplicity == 1);
    CHECK(sol.basis.front().norm() == 0.0);
    for (std::size_t i = 0; i < sol.s.size(); ++i) {
        CHECK(sol.basis[i](0, 0) == Approx(sol.s[i]).margin(1e-9));
        CHECK(sol.basis[i](1, 1) == Approx(std::sin(sol.s[i])).margin(1e-7));
        CHECK(std::abs(sol.basis[i](0, 1)) < 1e-9);
    }

    SECTION("column residual of the Jacobi equation") {
        const double h = sol.s[1] - sol.s[0];
        double worst = 0.0;
        for (std::size_t i = 1; i + 1 < sol.s.size(); ++i) {
            const Mat acc = (sol.basis[i + 1] - 2.0 * sol.basis[i] + sol.basis[i - 1]) / (h * h);
            worst = std::max(worst, (acc + sol.curvature[i] * sol.basis[i]).cwiseAbs().maxCoeff());
        }
        CHECK(worst < 1e-4);
    }

    SECTION("short arcs have no conjugate points") {
        CHECK(integrate_jacobi(s2, great_circle(s2, kPi / 2)).conjugate_points.empty());
    }
    SECTION("dressed sphere") {
        const Sphere dressed(2, ConservativeSystem{1.0, 4.0, Potential::constant(1.0)});
        const double k = dressed.kappa();
        const auto cps = integrate_jacobi(dressed, great_circle(dressed, 1.5 * kPi * std::sqrt(k))).conjugate_points;
        REQUIRE(cps.size() == 1);
        CHECK(cps[0].s == Approx(kPi * std::sqrt(k)).margin(1e-4));
    }
}

TEST_CASE("conjugate multiplicity on S3", "[jacobi]") {
    const Sphere s3(3);
    const auto cps = integrate_jacobi(s3, great_circle(s3, 2.5 * kPi)).conjugate_points;
    REQUIRE(cps.size() == 2);
    CHECK(cps[0].s == Approx(kPi).margin(1e-4));
    CHECK(cps[1].s == Approx(2 * kPi).margin(1e-4));
    CHECK(cps[0].multiplicity == 2);
    CHECK(cps[1].multiplicity == 2);
}

TEST_CASE("flat plane and spherical chart", "[jacobi]") {
    const Chart plane = Chart::euclidean(2);
    const GeodesicPath line = integrate_geodesic(plane, Vec::Zero(2), e(2, 0), 5.0);
    const JacobiSolution sol = integrate_jacobi(plane, line);
    CHECK(sol.conjugate_points.empty());
    for (std::size_t i = 0; i < sol.s.size(); i += 17)
        CHECK((sol.basis[i] - sol.s[i] * Mat::Identity(2, 2)).norm() < 1e-12);
    CHECK(morse_index(plane, line) == 0);

    const Chart chart = Chart::spherical(2);
    Vec x0(2);
    x0 << kPi / 2, 0.0;
    const GeodesicPath equator = integrate_geodesic(chart, x0, e(2, 1), 1.5 * kPi);
    const auto cps = integrate_jacobi(chart, equator).conjugate_points;
    REQUIRE(cps.size() == 1);
    CHECK(cps[0].s == Approx(kPi).margin(1e-4));
}

TEST_CASE("morse index by conjugate points", "[jacobi]") {
    const Sphere s2(2), s4(4);
    const Vec p2 = e(3, 2), q2 = e(3, 0);
    CHECK(morse_index(s2, solve_bvp(s2, p2, q2, 0)) == 0);
    CHECK(morse_index(s2, solve_bvp(s2, p2, q2, 1)) == 1);
    CHECK(morse_index(s2, solve_bvp(s2, p2, q2, 2)) == 2);
    CHECK(morse_index(s4, solve_bvp(s4, e(5, 4), e(5, 0), 2)) == 6);
    try {
        (void)morse_index(s2, great_circle(s2, kPi));
        FAIL("expected ConjugateEndpoints");
    } catch (const Error& err) {
        CHECK(err.kind() == ErrorKind::ConjugateEndpoints);
    }
}

TEST_CASE("Sturm-Liouville operator", "[jacobi]") {
    SECTION("flat line") {
        const Chart plane = Chart::euclidean(2);
        const double c = 2.5;
        const GeodesicPath line = integrate_geodesic(plane, Vec::Zero(2), e(2, 0), c);
        const SturmLiouvilleOperator op(plane, line);
        TangentField w, parallel;
        for (const auto& s : line.samples) {
            w.values.push_back(std::sin(kPi * s.tau) * e(2, 1));
            parallel.values.push_back(e(2, 1));
        }
        const TangentField lw = apply_sturm_liouville(op, w);
        double worst = 0.0;
        for (std::size_t i = 0; i < lw.values.size(); ++i)
            worst = std::max(worst, (lw.values[i] - kPi * kPi * w.values[i]).norm());
        CHECK(worst < 1e-3);
        CHECK(max_norm(op.apply(parallel).values) < 1e-10);
    }

    SECTION("great circle eigenfield") {
        const Sphere s2(2);
        const double length = 2.0;
        const GeodesicPath g = great_circle(s2, length);
        const SturmLiouvilleOperator op(s2, g);
        const TangentField w = profile(g, e(3, 2), 1, s2);
        const TangentField lw = op.apply(w);
        double worst = 0.0;
        for (std::size_t i = 0; i < w.values.size(); ++i)
            worst = std::max(worst, (lw.values[i] - (kPi * kPi - length * length) * w.values[i]).norm());
        CHECK(worst < 1e-3);
    }

    SECTION("self-adjointness for endpoint-zero fields") {
        std::mt19937_64 rng(5);
        const Sphere s2(2);
        const GeodesicPath g = solve_bvp(s2, e(3, 2), e(3, 0), 1);
        const SturmLiouvilleOperator op(s2, g);
        for (int trial = 0; trial < 5; ++trial) {
            const TangentField w1 = random_field(s2, g, rng), w2 = random_field(s2, g, rng);
            const double a = op.inner(w1, op.apply(w2)), b = op.inner(op.apply(w1), w2);
            CHECK(std::abs(a - b) / std::max(std::abs(a), std::abs(b)) < 1e-6);
        }
        const Chart chart = Chart::spherical(2);
        Vec x0(2), v0(2);
        x0 << 1.0, 0.2;
        v0 << 0.4, 1.0;
        const GeodesicPath cg = integrate_geodesic(chart, x0, v0, 1.2);
        const SturmLiouvilleOperator cop(chart, cg);
        for (int trial = 0; trial < 3; ++trial) {
            const TangentField w1 = random_field(chart, cg, rng), w2 = random_field(chart, cg, rng);
            const double a = cop.inner(w1, cop.apply(w2)), b = cop.inner(cop.apply(w1), w2);
            CHECK(std::abs(a - b) / std::max(std::abs(a), std::abs(b)) < 1e-6);
        }
    }

    SECTION("coarse grids are rejected") {
        const Sphere s2(2);
        GeodesicPath g = great_circle(s2, 1.0);
        g.samples.resize(9);
        try {
            (void)SturmLiouvilleOperator(s2, g);
            FAIL("expected GridTooCoarse");
        } catch (const Error& err) {
            CHECK(err.kind() == ErrorKind::GridTooCoarse);
        }
    }
}

TEST_CASE("second variation form", "[jacobi]") {
    const Sphere s2(2);
    std::mt19937_64 rng(9);

    SECTION("Jacobi fields vanishing at both ends are null directions") {
        const GeodesicPath g = great_circle(s2, kPi);  // ends at the antipode
        const TangentField j = profile(g, e(3, 2), 1, s2);
        for (int trial = 0; trial < 5; ++trial) {
            const TangentField w1 = random_field(s2, g, rng);
            CHECK(std::abs(second_variation_form(s2, g, w1, j)) < 1e-6);
        }
    }

    SECTION("positive and symmetric on the minimizing geodesic") {
        const GeodesicPath g = solve_bvp(s2, e(3, 2), e(3, 0), 0);
        for (int trial = 0; trial < 5; ++trial) {
            const TangentField w1 = random_field(s2, g, rng), w2 = random_field(s2, g, rng);
            CHECK(second_variation_form(s2, g, w1, w1) > 0.0);
            const double a = second_variation_form(s2, g, w1, w2), b = second_variation_form(s2, g, w2, w1);
            CHECK(std::abs(a - b) < 1e-8 * std::max(1.0, std::abs(a)));
        }
    }

    SECTION("matches the finite-difference Hessian of the sampled energy divided by c") {
        const GeodesicPath g = solve_bvp(s2, e(3, 2), e(3, 0), 0);
        const TangentField w = random_field(s2, g, rng);
        auto energy = [&](double eps) {
            std::vector<Vec> pts;
            for (std::size_t i = 0; i < g.samples.size(); ++i) pts.push_back(s2.exp(g.samples[i].x, eps * w.values[i]));
            const double m = static_cast<double>(pts.size() - 1);
            double total = 0.0;
            for (std::size_t i = 1; i < pts.size(); ++i) total += 0.5 * m * std::pow(s2.distance(pts[i - 1], pts[i]), 2);
            return total;
        };
        const double eps = 1e-3;
        const double fd = (energy(eps) - 2.0 * energy(0.0) + energy(-eps)) / (eps * eps);
        CHECK(second_variation_form(s2, g, w, w) == Approx(fd / g.speed).epsilon(1e-3));
    }

    SECTION("endpoint violation") {
        const GeodesicPath g = solve_bvp(s2, e(3, 2), e(3, 0), 0);
        TangentField w = random_field(s2, g, rng);
        w.values.back() = s2.to_tangent(g.end(), e(3, 1));
        CHECK_THROWS_AS(second_variation_form(s2, g, w, w), Error);
    }
}

TEST_CASE("Jacobi fields from variations through geodesics", "[jacobi]") {
    const Sphere s2(2);
    const Vec p = e(3, 2);
    const Vec v = 2.0 * e(3, 0), u = e(3, 1);
    const GeodesicPath g = integrate_geodesic(s2, p, v, 2.0);
    const double eps = 1e-4;
    std::vector<Vec> j;
    for (const auto& smp : g.samples)
        j.push_back(s2.to_tangent(smp.x, (s2.exp(p, smp.tau * (v + eps * u)) - s2.exp(p, smp.tau * (v - eps * u))) / (2 * eps)));
    const auto d2 = covariant_derivative(s2, g, covariant_derivative(s2, g, j));
    double worst = 0.0;
    for (std::size_t i = 2; i + 2 < j.size(); ++i)
        worst = std::max(worst, (d2[i] + s2.tidal(g.samples[i].x, g.samples[i].v, j[i])).norm());
    CHECK(worst / (g.speed * g.speed * max_norm(j)) < 1e-3);
}

TEST_CASE("Hessian spectrum index", "[jacobi]") {
    const Sphere s2(2), s3(3);
    const Vec p = e(3, 2), q = e(3, 0);
    CHECK(hessian_spectrum_index(s2, solve_bvp(s2, p, q, 1), 32) == 1);
    CHECK(hessian_spectrum_index(s2, solve_bvp(s2, p, q, 0), 32) == 0);
    CHECK(hessian_spectrum_index(s3, solve_bvp(s3, e(4, 3), e(4, 0), 1), 32) == 2);
    try {
        (void)hessian_spectrum_index(s2, solve_bvp(s2, p, q, 3), 4);
        FAIL("expected SegmentCountTooSmall");
    } catch (const Error& err) {
        CHECK(err.kind() == ErrorKind::SegmentCountTooSmall);
    }

    SECTION("degenerate exactly at conjugate endpoints") {
        const double gap = 1e-3;
        const auto regular = discrete_hessian_spectrum(s2, solve_bvp(s2, p, q, 1), 32);
        CHECK(regular.smallest_abs > gap);
        const GeodesicPath half = great_circle(s2, kPi);
        REQUIRE(endpoint_conjugate(integrate_jacobi(s2, half)));
        CHECK(discrete_hessian_spectrum(s2, half, 32).smallest_abs < gap * 1e-3);
    }
}

TEST_CASE("index theorem cross-check", "[jacobi][index]") {
    for (int n = 2; n <= 4; ++n) {
        const Sphere s(n);
        const Vec p = e(n + 1, n), q = e(n + 1, 0);
        for (int k = 0; k <= 4; ++k) {
            const GeodesicPath g = solve_bvp(s, p, q, k);
            INFO("n = " << n << ", k = " << k);
            CHECK(morse_index(s, g) == k * (n - 1));
            CHECK(hessian_spectrum_index(s, g, 64) == k * (n - 1));
        }
    }
}

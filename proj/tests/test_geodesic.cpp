#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"

#include <pathmorse/geodesic.hpp>

#include <cmath>
#include <random>

using namespace pathmorse;
using Catch::Approx;
using oracle::e;

namespace {

double max_speed_deviation(const Sphere& model, const GeodesicPath& path) {
    double worst = 0.0;
    for (const auto& s : path.samples) worst = std::max(worst, std::abs(norm(model, s.x, s.v) - path.speed) / path.speed);
    return worst;
}

TangentField zero_field(const GeodesicPath& path) {
    TangentField w;
    for (const auto& s : path.samples) w.values.push_back(Vec::Zero(s.x.size()));
    return w;
}

}  // namespace

TEST_CASE("integrate_geodesic on the unit sphere", "[geodesic]") {
    const Sphere s2(2);
    const Vec p = e(3, 2);
    const Vec v0 = e(3, 0);

    const GeodesicPath half = integrate_geodesic(s2, p, v0, kPi);
    CHECK((half.end() + p).norm() < 1e-8);
    CHECK(max_speed_deviation(s2, half) < 1e-6);
    CHECK(max_geodesic_residual(s2, half) < 1e-6);
    CHECK(half.action == Approx(kPi).epsilon(1e-10));

    const GeodesicPath full = integrate_geodesic(s2, p, v0, 2 * kPi);
    CHECK((full.end() - p).norm() < 1e-7);

    const GeodesicPath long_one = integrate_geodesic(s2, p, v0, 6.5 * kPi);
    CHECK(max_speed_deviation(s2, long_one) < 1e-6);
    CHECK(max_geodesic_residual(s2, long_one) < 1e-6);
}

TEST_CASE("integrate_geodesic on a flat plane", "[geodesic]") {
    const Chart plane = Chart::euclidean(2);
    Vec v0(2);
    v0 << 1.0, 0.0;
    const GeodesicPath line = integrate_geodesic(plane, Vec::Zero(2), v0, 3.0);
    CHECK((line.end() - 3.0 * v0).norm() < 1e-12);
    CHECK_THROWS_AS(integrate_geodesic(plane, Vec::Zero(2), Vec::Zero(2), 1.0), Error);
}

TEST_CASE("exponential map is a local radial isometry", "[geodesic]") {
    const Sphere s2(2);
    const Vec p = e(3, 2);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> N;
    for (int trial = 0; trial < 10; ++trial) {
        Vec v(3);
        v << N(rng), N(rng), 0.0;
        v *= 0.05 / v.norm();
        const Vec x = exponential_map(s2, p, v);
        CHECK(s2.distance(p, x) == Approx(norm(s2, p, v)).margin(1e-8));
        CHECK((x - s2.exp(p, v)).norm() < 1e-10);
    }
}

TEST_CASE("solve_bvp reproduces the great-circle family", "[geodesic]") {
    const Sphere s2(2);  // m = 2, E = 1, V = 0: dressed metric = round metric
    const Vec p = e(3, 2), q = e(3, 0);
    const double theta = kPi / 2;
    double previous = -1.0;
    for (int k = 0; k <= 4; ++k) {
        const GeodesicPath g = solve_bvp(s2, p, q, k);
        const double expected = oracle::great_circle_length(k, theta);
        CHECK(g.speed == Approx(expected).epsilon(1e-9));
        CHECK(g.action == Approx(expected).epsilon(1e-9));
        CHECK((g.end() - q).norm() < 1e-8);
        CHECK(max_geodesic_residual(s2, g) < 1e-6);
        CHECK(g.action > previous);
        previous = g.action;
    }

    SECTION("generic angle and higher dimension") {
        const Sphere s4(4);
        Vec a = Vec::Zero(5), b = Vec::Zero(5);
        a(0) = 1.0;
        b(0) = std::cos(1.1);
        b(3) = std::sin(1.1);
        for (int k = 0; k <= 3; ++k)
            CHECK(solve_bvp(s4, a, b, k).speed == Approx(oracle::great_circle_length(k, 1.1)).epsilon(1e-9));
    }

    SECTION("dressed sphere scales lengths by sqrt(kappa)") {
        const Sphere dressed(2, ConservativeSystem{1.0, 4.0, Potential::constant(1.0)});
        CHECK(solve_bvp(dressed, p, q, 1).action ==
              Approx(std::sqrt(2.0 / 3.0) * oracle::great_circle_length(1, theta)).epsilon(1e-9));
    }

    SECTION("degenerate endpoints") {
        try {
            (void)solve_bvp(s2, p, Vec(-p), 0);
            FAIL("expected AntipodalEndpoints");
        } catch (const Error& err) {
            CHECK(err.kind() == ErrorKind::AntipodalEndpoints);
        }
        CHECK_THROWS_AS(solve_bvp(s2, p, p, 0), Error);
    }
}

TEST_CASE("solve_bvp on charts", "[geodesic]") {
    const Chart plane = Chart::euclidean(2);
    Vec a(2), b(2);
    a << 0.1, 0.2;
    b << 1.0, -0.5;
    CHECK(solve_bvp(plane, a, b, 0).action == Approx((b - a).norm()).epsilon(1e-12));
    try {
        (void)solve_bvp(plane, a, b, 1);
        FAIL("expected Unsupported");
    } catch (const Error& err) {
        CHECK(err.kind() == ErrorKind::Unsupported);
    }

    // conformally flat chart with a radial potential: shooting must still hit q
    const Chart bumpy = Chart::euclidean(2, ConservativeSystem{2.0, 3.0, Potential::parse("radial:0,0,0.3")});
    const GeodesicPath g = solve_bvp(bumpy, a, b, 0);
    CHECK((g.end() - b).norm() < 1e-8);
    CHECK(max_geodesic_residual(bumpy, g) < 1e-6);
    // a geodesic is no longer than the straight coordinate segment measured in the same metric
    std::vector<Vec> straight;
    for (int i = 0; i <= 400; ++i) straight.push_back(a + (b - a) * (i / 400.0));
    double seg = 0.0;
    for (int i = 1; i <= 400; ++i) {
        const Vec mid = 0.5 * (straight[i] + straight[i - 1]);
        const Vec d = straight[i] - straight[i - 1];
        seg += std::sqrt(bumpy.inner(mid, d, d));
    }
    CHECK(g.action <= seg + 1e-9);
}

TEST_CASE("action quadrature", "[geodesic]") {
    const Sphere s2(2);
    const Vec p = e(3, 2), q = e(3, 0);

    // unit-speed quarter arc sampled in closed form
    GeodesicPath arc;
    const int m = 64;
    for (int i = 0; i <= m; ++i) {
        const double t = static_cast<double>(i) / m, a = t * kPi / 2;
        arc.samples.push_back({t, std::cos(a) * p + std::sin(a) * q, (kPi / 2) * (-std::sin(a) * p + std::cos(a) * q)});
    }
    CHECK(action(s2, arc) == Approx(kPi / 2).epsilon(1e-8));

    // tau -> tau^2 reparametrization
    GeodesicPath quad;
    for (int i = 0; i <= m; ++i) {
        const double t = static_cast<double>(i) / m, a = t * t * kPi / 2;
        quad.samples.push_back({t, std::cos(a) * p + std::sin(a) * q,
                                2 * t * (kPi / 2) * (-std::sin(a) * p + std::cos(a) * q)});
    }
    CHECK(action(s2, quad) == Approx(kPi / 2).margin(1e-5));

    GeodesicPath constant;
    for (int i = 0; i <= 8; ++i) constant.samples.push_back({i / 8.0, p, Vec::Zero(3)});
    CHECK(action(s2, constant) == 0.0);

    // never below the distance between the endpoints
    CHECK(action(s2, quad) >= s2.distance(p, q) - 1e-9);
}

TEST_CASE("first variation", "[geodesic]") {
    const Sphere s2(2);
    const Vec p = e(3, 2), q = e(3, 0);

    SECTION("vanishes on smooth geodesics") {
        const GeodesicPath g = solve_bvp(s2, p, q, 1);
        TangentField w;
        const Vec n = e(3, 1);
        for (const auto& s : g.samples) w.values.push_back(std::sin(kPi * s.tau) * s2.to_tangent(s.x, n + 0.3 * s.x));
        w.values.front().setZero();
        w.values.back().setZero();
        CHECK(std::abs(first_variation(s2, g, w)) < 1e-6);
        CHECK(first_variation(s2, g, zero_field(g)) == 0.0);
    }

    SECTION("corner path: action decreases along the corner jump") {
        Vec corner(3);
        corner << 0.3, 0.7, 0.5;
        corner.normalize();
        const std::vector<Vec> nodes{p, corner, q};
        const GeodesicPath broken = broken_geodesic(s2, nodes, 400);
        REQUIRE(broken.breaks.size() == 1);
        const double tc = broken.breaks[0].tau;
        const Vec dir = s2.to_tangent(corner, broken.breaks[0].delta_v).normalized();
        TangentField w;
        std::vector<Vec> plus, minus;
        const double delta = 0.1, eps = 1e-5;
        for (const auto& s : broken.samples) {
            const double hat = std::max(0.0, 1.0 - std::abs(s.tau - tc) / delta);
            Vec wi = hat * s2.to_tangent(s.x, dir);
            plus.push_back(s2.exp(s.x, eps * wi));
            minus.push_back(s2.exp(s.x, -eps * wi));
            w.values.push_back(std::move(wi));
        }
        const double ds = first_variation(s2, broken, w);
        CHECK(ds < 0.0);
        const double fd = (oracle::polyline_length(s2, plus) - oracle::polyline_length(s2, minus)) / (2 * eps);
        CHECK(ds == Approx(fd).epsilon(1e-4));
    }

    SECTION("matches finite differences of the action for smooth variations of broken paths") {
        std::mt19937_64 rng(17);
        std::normal_distribution<double> N;
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<Vec> nodes{p};
            for (int k = 1; k < 4; ++k) {
                Vec x = std::cos(k * kPi / 8) * p + std::sin(k * kPi / 8) * q;
                x += 0.15 * Vec{{N(rng), N(rng), N(rng)}};
                nodes.push_back(x.normalized());
            }
            nodes.push_back(q);
            const GeodesicPath broken = broken_geodesic(s2, nodes, 300);
            Vec a{{N(rng), N(rng), N(rng)}}, b{{N(rng), N(rng), N(rng)}};
            TangentField w;
            std::vector<Vec> plus, minus;
            const double eps = 1e-5;
            for (const auto& s : broken.samples) {
                Vec wi = s2.to_tangent(s.x, std::sin(kPi * s.tau) * a + std::sin(2 * kPi * s.tau) * b);
                plus.push_back(s2.exp(s.x, eps * wi));
                minus.push_back(s2.exp(s.x, -eps * wi));
                w.values.push_back(std::move(wi));
            }
            w.values.front().setZero();
            w.values.back().setZero();
            const double ds = first_variation(s2, broken, w);
            const double fd = (oracle::polyline_length(s2, plus) - oracle::polyline_length(s2, minus)) / (2 * eps);
            CHECK(ds == Approx(fd).epsilon(1e-4));
        }
    }

    SECTION("rejects fields that move the endpoints") {
        const GeodesicPath g = solve_bvp(s2, p, q, 0);
        TangentField w = zero_field(g);
        w.values.front() = e(3, 0);
        try {
            (void)first_variation(s2, g, w);
            FAIL("expected EndpointViolation");
        } catch (const Error& err) {
            CHECK(err.kind() == ErrorKind::EndpointViolation);
        }
    }
}

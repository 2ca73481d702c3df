#pragma once

#include "chart.hpp"
#include "sphere.hpp"
#include "types.hpp"

#include <concepts>
#include <type_traits>

namespace pathmorse {

/// What the geodesic, Jacobi and path-space algorithms need from a manifold model.
///
/// Points live in ambient coordinates of size ambient_dim(); tangent vectors too.
/// acceleration/transport_rate/tidal are written for an arbitrary curve parameter:
/// x'' = acceleration(x, x'), e' = transport_rate(x, x', e), and the Jacobi equation
/// reads D^2 J + tidal(x, x', J) = 0.
template <class M>
concept RiemannianModel = requires(const M& m, const Vec& x, const Vec& u) {
    { m.dim() } -> std::convertible_to<int>;
    { m.ambient_dim() } -> std::convertible_to<int>;
    { m.project(x) } -> std::convertible_to<Vec>;
    { m.to_tangent(x, u) } -> std::convertible_to<Vec>;
    { m.inner(x, u, u) } -> std::convertible_to<double>;
    { m.tangent_basis(x) } -> std::convertible_to<Mat>;
    { m.acceleration(x, u) } -> std::convertible_to<Vec>;
    { m.transport_rate(x, u, u) } -> std::convertible_to<Vec>;
    { m.tidal(x, u, u) } -> std::convertible_to<Vec>;
    { m.exp(x, u) } -> std::convertible_to<Vec>;
    { m.log(x, u) } -> std::convertible_to<Vec>;
    { m.distance(x, u) } -> std::convertible_to<double>;
    { m.max_segment_length() } -> std::convertible_to<double>;
    m.check_point(x);
};

template <class M>
inline constexpr bool is_sphere_v = std::is_same_v<std::remove_cvref_t<M>, Sphere>;

template <RiemannianModel M>
double norm(const M& model, const Vec& x, const Vec& u) {
    return std::sqrt(std::max(0.0, model.inner(x, u, u)));
}

static_assert(RiemannianModel<Sphere>);
static_assert(RiemannianModel<Chart>);

}  // namespace pathmorse

#pragma once

#include "types.hpp"

#include <boost/numeric/odeint.hpp>
#include <boost/numeric/odeint/external/eigen/eigen_algebra.hpp>

namespace pathmorse {

/// Classical fixed-step fourth-order Runge-Kutta on dynamic Eigen state vectors.
using Rk4Stepper = boost::numeric::odeint::runge_kutta4<Vec, double, Vec, double,
                                                        boost::numeric::odeint::vector_space_algebra>;

}  // namespace pathmorse

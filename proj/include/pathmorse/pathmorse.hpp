#pragma once

#include "chart.hpp"
#include "error.hpp"
#include "geodesic.hpp"
#include "jacobi.hpp"
#include "manifold.hpp"
#include "morse_complex.hpp"
#include "parallel.hpp"
#include "path_space.hpp"
#include "smith.hpp"
#include "sphere.hpp"
#include "system.hpp"
#include "types.hpp"

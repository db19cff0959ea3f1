#pragma once

#include "robinshape/diagnostics.hpp"
#include "robinshape/error.hpp"
#include "robinshape/fem.hpp"
#include "robinshape/geometry.hpp"
#include "robinshape/inverse_problem.hpp"
#include "robinshape/mala.hpp"
#include "robinshape/map_laplace.hpp"
#include "robinshape/mesh.hpp"
#include "robinshape/priors.hpp"

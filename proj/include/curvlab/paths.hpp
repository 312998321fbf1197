#pragma once

#include "curvlab/paths/csv.hpp"
#include "curvlab/paths/ensemble.hpp"
#include "curvlab/paths/integrals.hpp"
#include "curvlab/paths/nelson.hpp"
#include "curvlab/paths/simulate.hpp"
#include "curvlab/paths/time_grid.hpp"

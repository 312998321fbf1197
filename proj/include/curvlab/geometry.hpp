#pragma once

#include "curvlab/geometry/connection.hpp"
#include "curvlab/geometry/curvature.hpp"
#include "curvlab/geometry/market.hpp"

#pragma once

#include "curvlab/dynamics/lagrangian.hpp"
#include "curvlab/dynamics/noether.hpp"
#include "curvlab/dynamics/solutions.hpp"

#pragma once

#include "curvlab/gauges/curve.hpp"
#include "curvlab/gauges/gauge.hpp"
#include "curvlab/gauges/intensity.hpp"
#include "curvlab/gauges/term_structure.hpp"

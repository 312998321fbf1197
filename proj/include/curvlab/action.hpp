#pragma once

#include "curvlab/action/action.hpp"
#include "curvlab/action/strategy.hpp"

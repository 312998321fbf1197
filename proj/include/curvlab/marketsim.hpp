#pragma once

#include "curvlab/marketsim/build.hpp"
#include "curvlab/marketsim/config.hpp"
#include "curvlab/marketsim/model.hpp"

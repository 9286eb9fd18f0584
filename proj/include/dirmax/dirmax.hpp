#pragma once

// Umbrella header for the library. The brute-force oracle is included
// separately through dirmax/oracle.hpp.

#include "dirmax/badness.hpp"
#include "dirmax/calibration.hpp"
#include "dirmax/dyadic.hpp"
#include "dirmax/experiments.hpp"
#include "dirmax/family.hpp"
#include "dirmax/fit.hpp"
#include "dirmax/grid.hpp"
#include "dirmax/maximal.hpp"
#include "dirmax/parallel.hpp"
#include "dirmax/parallelogram.hpp"
#include "dirmax/stopping_time.hpp"

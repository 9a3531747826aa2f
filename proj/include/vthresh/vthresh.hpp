#pragma once

#include "vthresh/baselines.hpp"
#include "vthresh/bench.hpp"
#include "vthresh/capacity.hpp"
#include "vthresh/density.hpp"
#include "vthresh/engine.hpp"
#include "vthresh/error.hpp"
#include "vthresh/grid.hpp"
#include "vthresh/kernel.hpp"
#include "vthresh/metrics.hpp"
#include "vthresh/report.hpp"
#include "vthresh/router.hpp"
#include "vthresh/scenario.hpp"
#include "vthresh/simgen.hpp"
#include "vthresh/simulate.hpp"
#include "vthresh/valleys.hpp"

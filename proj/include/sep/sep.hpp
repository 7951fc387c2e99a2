#pragma once

#include "sep/barrier.hpp"
#include "sep/dual.hpp"
#include "sep/grid.hpp"
#include "sep/io.hpp"
#include "sep/lp.hpp"
#include "sep/measure.hpp"
#include "sep/payoff.hpp"
#include "sep/pipeline.hpp"
#include "sep/rng.hpp"
#include "sep/sim.hpp"
#include "sep/simplex.hpp"
#include "sep/survival.hpp"

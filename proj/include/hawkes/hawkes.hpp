#pragma once

#include "hawkes/deviations.hpp"
#include "hawkes/engine.hpp"
#include "hawkes/error.hpp"
#include "hawkes/event_io.hpp"
#include "hawkes/fluct.hpp"
#include "hawkes/grid.hpp"
#include "hawkes/meanfield.hpp"
#include "hawkes/model.hpp"
#include "hawkes/parallel.hpp"
#include "hawkes/random.hpp"

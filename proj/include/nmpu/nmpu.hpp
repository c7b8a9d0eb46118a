#pragma once

// Umbrella include for the whole library.

#include "adc_model.hpp"
#include "aimc_sim.hpp"
#include "datapath.hpp"
#include "dse.hpp"
#include "fixedpoint.hpp"
#include "half.hpp"
#include "perf_model.hpp"
#include "util.hpp"

#pragma once

// Umbrella header.

#include "builtin.hpp"
#include "costs.hpp"
#include "evba.hpp"
#include "evca.hpp"
#include "experiments.hpp"
#include "log.hpp"
#include "lp.hpp"
#include "random.hpp"
#include "report.hpp"
#include "scenario.hpp"
#include "settlement.hpp"

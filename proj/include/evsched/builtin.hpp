#pragma once

// Three EVs (home-work-home, home-mall-home, home-work-mall-home) and three
// charging stations (home 4 kW, work 8 kW, mall 12 kW) over one day.
// Mirrors data/illustrative.json; tests/test_scenario.cpp checks they agree.

#include "scenario.hpp"

namespace evsched {

inline constexpr const char* kIllustrativeScenarioJson = R"json({
  "time_grid": {"horizon_steps": 24, "step_hours": 1.0},
  "evs": [
    {"id": "ev1", "capacity": 40.0, "soe_init": 20.0, "soe_min": 4.0, "soe_max": 40.0, "soe_end_min": 20.0, "obc_limit": 4.0, "eta_sch": 0.95, "eta_dch": 0.95, "eta_run": 1.0, "eta_fch": 0.95, "degradation_fee": 0.03},
    {"id": "ev2", "capacity": 40.0, "soe_init": 20.0, "soe_min": 4.0, "soe_max": 40.0, "soe_end_min": 20.0, "obc_limit": 8.0, "eta_sch": 0.95, "eta_dch": 0.95, "eta_run": 1.0, "eta_fch": 0.95, "degradation_fee": 0.03},
    {"id": "ev3", "capacity": 40.0, "soe_init": 20.0, "soe_min": 4.0, "soe_max": 40.0, "soe_end_min": 20.0, "obc_limit": 12.0, "eta_sch": 0.95, "eta_dch": 0.95, "eta_run": 1.0, "eta_fch": 0.95, "degradation_fee": 0.03}
  ],
  "stations": [
    {"id": "cs1", "cp_limit": 4.0, "num_cps": 3, "utilization_fee": 0.02, "grid_fee": 0.04, "is_fast": false},
    {"id": "cs2", "cp_limit": 8.0, "num_cps": 3, "utilization_fee": 0.02, "grid_fee": 0.04, "is_fast": false},
    {"id": "cs3", "cp_limit": 12.0, "num_cps": 3, "utilization_fee": 0.02, "grid_fee": 0.04, "is_fast": false}
  ],
  "itineraries": [
    {"ev_id": "ev1", "states": [{"parked": "cs1"}, {"parked": "cs1"}, {"parked": "cs1"}, {"parked": "cs1"}, {"parked": "cs1"}, {"parked": "cs1"}, {"parked": "cs1"}, {"driving": {"e_run": 4.0}}, {"parked": "cs2"}, {"parked": "cs2"}, {"parked": "cs2"}, {"parked": "cs2"}, {"parked": "cs2"}, {"parked": "cs2"}, {"parked": "cs2"}, {"parked": "cs2"}, {"driving": {"e_run": 4.0}}, {"parked": "cs1"}, {"parked": "cs1"}, {"parked": "cs1"}, {"parked": "cs1"}, {"parked": "cs1"}, {"parked": "cs1"}, {"parked": "cs1"}]},
    {"ev_id": "ev2", "states": [{"parked": "cs1"}, {"parked": "cs1"}, {"parked": "cs1"}, {"parked": "cs1"}, {"parked": "cs1"}, {"parked": "cs1"}, {"parked": "cs1"}, {"parked": "cs1"}, {"parked": "cs1"}, {"parked": "cs1"}, {"parked": "cs1"}, {"driving": {"e_run": 4.0}}, {"parked": "cs3"}, {"parked": "cs3"}, {"parked": "cs3"}, {"parked": "cs3"}, {"parked": "cs3"}, {"parked": "cs3"}, {"parked": "cs3"}, {"parked": "cs3"}, {"parked": "cs3"}, {"driving": {"e_run": 4.0}}, {"parked": "cs1"}, {"parked": "cs1"}]},
    {"ev_id": "ev3", "states": [{"parked": "cs1"}, {"parked": "cs1"}, {"parked": "cs1"}, {"parked": "cs1"}, {"parked": "cs1"}, {"parked": "cs1"}, {"parked": "cs1"}, {"driving": {"e_run": 4.0}}, {"parked": "cs2"}, {"parked": "cs2"}, {"parked": "cs2"}, {"parked": "cs2"}, {"parked": "cs2"}, {"parked": "cs2"}, {"parked": "cs2"}, {"parked": "cs2"}, {"driving": {"e_run": 4.0}}, {"parked": "cs3"}, {"parked": "cs3"}, {"parked": "cs3"}, {"parked": "cs3"}, {"driving": {"e_run": 4.0}}, {"parked": "cs1"}, {"parked": "cs1"}]}
  ],
  "prices": {"prices": [0.06, 0.05, 0.045, 0.04, 0.04, 0.045, 0.07, 0.22, 0.3, 0.28, 0.15, 0.09, 0.06, 0.05, 0.05, 0.07, 0.12, 0.18, 0.3, 0.32, 0.28, 0.18, 0.1, 0.07], "penalty_short_factor": 1.5, "penalty_long_factor": 0.5},
  "forecast_error": {"time_shift_probs": [{"shift": -1, "prob": 0.1}, {"shift": 0, "prob": 0.8}, {"shift": 1, "prob": 0.1}], "soe_sigma": 2.0, "dep_soe_margin": 1.0},
  "rng_seed": 42
}
)json";

/// The 3-EV / 3-CS illustrative day used throughout the experiments.
inline Scenario builtin_illustrative() { return parse_scenario(kIllustrativeScenarioJson, "<builtin>"); }

}  // namespace evsched

#pragma once

// Fee switches, per-kWh objective coefficients and the cost breakdown
// reported by the settlement.

#include "scenario.hpp"

namespace evsched {

/// Which cost components are active. Applies to optimization and settlement.
struct CostOptions {
    bool grid_fee = true;
    bool utilization_fee = true;
    bool degradation_fee = true;
    bool discharge_grid_fee = false;  // V2G discharge also pays the station grid fee

    static CostOptions none() { return {false, false, false, false}; }

    double grid(const ChargingStation& cs) const { return grid_fee ? cs.grid_fee : 0.0; }
    double grid_on_discharge(const ChargingStation& cs) const {
        return grid_fee && discharge_grid_fee ? cs.grid_fee : 0.0;
    }
    double utilization(const ChargingStation& cs) const { return utilization_fee ? cs.utilization_fee : 0.0; }
    double degradation(const Ev& ev) const { return degradation_fee ? ev.degradation_fee : 0.0; }

    bool operator==(const CostOptions&) const = default;
};

/// Objective coefficient of one kWh charged (slow or fast) at `cs`.
inline double charge_rate(double price, const ChargingStation& cs, const CostOptions& o) {
    return price + o.grid(cs) + o.utilization(cs);
}

/// Objective coefficient of one kWh discharged to the grid at `cs`.
inline double discharge_rate(double price, const ChargingStation& cs, const Ev& ev, const CostOptions& o) {
    return -(price - o.grid_on_discharge(cs) - o.utilization(cs)) + o.degradation(ev);
}

struct CostBreakdown {
    double energy_cost = 0.0;
    double grid_fees = 0.0;
    double utilization_fees = 0.0;
    double degradation_cost = 0.0;
    double imbalance_cost = 0.0;
    double mobility_deficit = 0.0;  // kWh
    double total_system_cost = 0.0;
    double total_ev_perspective_cost = 0.0;

    /// Recomputes both totals from the components.
    void finalize() {
        total_system_cost = energy_cost + grid_fees + degradation_cost + imbalance_cost;
        total_ev_perspective_cost = total_system_cost + utilization_fees;
    }

    CostBreakdown& operator+=(const CostBreakdown& o) {
        energy_cost += o.energy_cost;
        grid_fees += o.grid_fees;
        utilization_fees += o.utilization_fees;
        degradation_cost += o.degradation_cost;
        imbalance_cost += o.imbalance_cost;
        mobility_deficit += o.mobility_deficit;
        finalize();
        return *this;
    }
};

}  // namespace evsched

#pragma once

// Physical delivery of a dispatch plan against the true itineraries, and
// the cost settlement of what was delivered.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "costs.hpp"
#include "scenario.hpp"

namespace evsched {

/// Energy the planner scheduled for one EV at one station in one step.
/// Slow charge/discharge go to e_sch/e_dch, DC fast charge to e_fch.
struct PlanEntry {
    std::size_t station = 0;
    double e_sch = 0.0;
    double e_dch = 0.0;
    double e_fch = 0.0;
};

/// Scheduled exchanges per EV (scenario order) and step. A step may hold
/// several entries when forecasts of different stations overlap.
struct DispatchPlan {
    std::vector<std::vector<std::vector<PlanEntry>>> entries;  // [ev][t] -> entries

    static DispatchPlan empty(const Scenario& s) {
        DispatchPlan p;
        p.entries.assign(s.evs.size(), std::vector<std::vector<PlanEntry>>(static_cast<std::size_t>(s.horizon())));
        return p;
    }

    void add(std::size_t ev, int t, PlanEntry e) { entries[ev][static_cast<std::size_t>(t)].push_back(e); }
};

struct DeliveryStep {
    double scheduled_sch = 0.0, scheduled_dch = 0.0, scheduled_fch = 0.0;
    double delivered_sch = 0.0, delivered_dch = 0.0, delivered_fch = 0.0;
    std::optional<std::size_t> station;  // true location when plugged in
    double run_delivered = 0.0;          // driving energy actually supplied (at the wheel)
    double deficit = 0.0;                // SOE (kWh) missing to complete the trip
    double soe = 0.0;                    // true SOE at the end of the step

    double scheduled() const { return scheduled_sch + scheduled_fch - scheduled_dch; }
    double delivered() const { return delivered_sch + delivered_fch - delivered_dch; }
    double imbalance() const { return scheduled() - delivered(); }
};

struct DeliveryResult {
    std::vector<std::vector<DeliveryStep>> evs;  // [ev][t]
    std::vector<double> end_shortfall;           // per EV: kWh below the end-of-day floor

    double total_abs_imbalance() const {
        double s = 0.0;
        for (const auto& ev : evs)
            for (const auto& st : ev) s += std::abs(st.imbalance());
        return s;
    }
    double total_deficit() const {
        double s = 0.0;
        for (const auto& ev : evs)
            for (const auto& st : ev) s += st.deficit;
        return s;
    }
    double total_end_shortfall() const {
        double s = 0.0;
        for (double x : end_shortfall) s += x;
        return s;
    }
    double total_delivered_discharge() const {
        double s = 0.0;
        for (const auto& ev : evs)
            for (const auto& st : ev) s += st.delivered_dch;
        return s;
    }
};

namespace detail {

// Quantities within this tolerance of a physical bound are delivered as
// scheduled, so plans computed by the LP settle with zero imbalance.
constexpr double kDeliveryTol = 1e-9;

inline double deliverable(double scheduled, double bound) {
    return scheduled <= bound + kDeliveryTol ? scheduled : std::max(bound, 0.0);
}

}  // namespace detail

/// Forward-simulates the plan over the true itineraries. Energy scheduled at
/// a station where the EV is not, or above min(OBC, CP), or beyond the SOE
/// bounds, is not delivered. Driving below soe_min is recorded as deficit.
inline DeliveryResult simulate_delivery(const DispatchPlan& plan, const Scenario& s) {
    const auto T = static_cast<std::size_t>(s.horizon());
    const double dt = s.step_hours();
    DeliveryResult out;
    out.evs.resize(s.evs.size());
    out.end_shortfall.assign(s.evs.size(), 0.0);
    for (std::size_t v = 0; v < s.evs.size(); ++v) {
        const Ev& ev = s.evs[v];
        const Itinerary& it = s.itinerary_of(ev.id);
        double soe = ev.soe_init;
        auto& rows = out.evs[v];
        rows.resize(T);
        for (std::size_t t = 0; t < T; ++t) {
            DeliveryStep& row = rows[t];
            const auto& state = it.states[t];
            std::optional<std::size_t> here;
            if (const std::string* id = station_of(state)) here = s.station_index(*id);
            row.station = here;

            double sch = 0.0, dch = 0.0, fch = 0.0;
            if (v < plan.entries.size() && t < plan.entries[v].size()) {
                for (const PlanEntry& e : plan.entries[v][t]) {
                    row.scheduled_sch += e.e_sch;
                    row.scheduled_dch += e.e_dch;
                    row.scheduled_fch += e.e_fch;
                    if (here && e.station == *here) {
                        sch += e.e_sch;
                        dch += e.e_dch;
                        fch += e.e_fch;
                    }
                }
            }

            if (const auto* p = std::get_if<Parked>(&state)) {
                const ChargingStation& cs = s.station(p->cs_id);
                const double limit = effective_power_limit(ev, cs) * dt;
                row.delivered_dch = detail::deliverable(dch, std::min(limit, (soe - ev.soe_min) * ev.eta_dch));
                const double after_dch = soe - row.delivered_dch / ev.eta_dch;
                row.delivered_sch =
                    detail::deliverable(sch, std::min(limit, (ev.soe_max - after_dch) / ev.eta_sch));
                soe = after_dch + row.delivered_sch * ev.eta_sch;
            } else if (const auto* f = std::get_if<FastCharge>(&state)) {
                const ChargingStation& cs = s.station(f->cs_id);
                const double bound = std::min(fast_charge_bound(*f, cs, dt), (ev.soe_max - soe) / ev.eta_fch);
                row.delivered_fch = detail::deliverable(fch, bound);
                soe += row.delivered_fch * ev.eta_fch;
            } else {
                const double need = std::get<Driving>(state).e_run / ev.eta_run;
                const double available = std::max(soe - ev.soe_min, 0.0);
                if (need > available + detail::kDeliveryTol) {
                    row.deficit = need - available;
                    row.run_delivered = available * ev.eta_run;
                    soe = ev.soe_min;
                } else {
                    row.run_delivered = need * ev.eta_run;
                    soe -= need;
                }
            }
            row.soe = soe;
        }
        const double floor = std::max(ev.soe_min, ev.soe_end_min);
        if (soe < floor - detail::kDeliveryTol) out.end_shortfall[v] = floor - soe;
    }
    return out;
}

/// Adds the cost of one step's delivered exchange at `cs` to `c`.
inline void accumulate_step_cost(CostBreakdown& c, double price, const ChargingStation& cs, const Ev& ev,
                                 double sch, double dch, double fch, const CostOptions& o) {
    c.energy_cost += (sch + fch) * price - dch * price;
    c.grid_fees += (sch + fch) * o.grid(cs) + dch * o.grid_on_discharge(cs);
    c.utilization_fees += (sch + dch + fch) * o.utilization(cs);
    c.degradation_cost += dch * o.degradation(ev);
}

/// Dual-price imbalance charge for one step: shortfalls (scheduled above
/// delivered) are bought back at price * short factor, surpluses cost
/// price * (1 - long factor).
inline double imbalance_charge(double imbalance, double price, const PriceCurve& pc) {
    return std::max(imbalance, 0.0) * price * pc.penalty_short_factor +
           std::max(-imbalance, 0.0) * price * (pc.penalty_long_factor - 1.0) * -1.0;
}

inline CostBreakdown settle(const DeliveryResult& delivery, const PriceCurve& prices, const Scenario& s,
                            const CostOptions& options = {}) {
    CostBreakdown c;
    for (std::size_t v = 0; v < delivery.evs.size(); ++v) {
        const Ev& ev = s.evs[v];
        for (std::size_t t = 0; t < delivery.evs[v].size(); ++t) {
            const DeliveryStep& row = delivery.evs[v][t];
            const double price = prices.prices[t];
            if (row.station)
                accumulate_step_cost(c, price, s.stations[*row.station], ev, row.delivered_sch, row.delivered_dch,
                                     row.delivered_fch, options);
            c.imbalance_cost += imbalance_charge(row.imbalance(), price, prices);
            c.mobility_deficit += row.deficit;
        }
    }
    c.finalize();
    return c;
}

}  // namespace evsched

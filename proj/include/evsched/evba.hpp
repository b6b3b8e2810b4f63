#pragma once

// EV-based aggregation: every EV optimizes its own whole-day SOE trajectory
// (slow charge, V2G discharge, driving, fast charge) against day-ahead prices.

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "costs.hpp"
#include "lp.hpp"
#include "scenario.hpp"
#include "settlement.hpp"

namespace evsched {

class InfeasibleMobility : public std::runtime_error {
public:
    InfeasibleMobility(std::string ev_id, int step)
        : std::runtime_error("infeasible mobility for EV '" + ev_id + "' at step " + std::to_string(step)),
          ev_id_(std::move(ev_id)), step_(step) {}
    const std::string& ev_id() const noexcept { return ev_id_; }
    int step() const noexcept { return step_; }

private:
    std::string ev_id_;
    int step_;
};

struct EvSchedule {
    std::string ev_id;
    std::vector<double> e_sch;  // slow charge drawn from the grid, kWh
    std::vector<double> e_dch;  // V2G discharge delivered to the grid, kWh
    std::vector<double> e_fch;  // fast charge drawn from the grid, kWh
    std::vector<double> soe;    // SOE at the end of each step, kWh
    double total_cost = 0.0;    // LP objective
    CostBreakdown cost_breakdown;
};

/// Per-step totals plus the contribution of each EV or station.
struct AggregateProfile {
    struct Contributor {
        std::string id;
        std::vector<double> charge;
        std::vector<double> discharge;
    };
    std::vector<double> total_charge;
    std::vector<double> total_discharge;
    std::vector<Contributor> contributors;

    std::vector<double> net() const {
        std::vector<double> n(total_charge.size());
        for (std::size_t t = 0; t < n.size(); ++t) n[t] = total_charge[t] - total_discharge[t];
        return n;
    }
};

struct FleetResult {
    std::vector<EvSchedule> schedules;  // scenario EV order
    AggregateProfile aggregate;         // by EV
    bool joint = false;                 // solved as one coupled LP
};

enum class FleetMode {
    Auto,    // joint LP only when a station's capacity could bind
    PerEv,   // independent LPs
    Joint,   // one LP with station coupling rows
};

namespace detail {

// Per-step upper bounds on each decision of one EV.
struct StepLimits {
    std::vector<double> sch, dch, fch;
    std::vector<int> station;  // -1 when driving
};

inline StepLimits step_limits(const Ev& ev, const Itinerary& it, std::span<const ChargingStation> stations,
                              const TimeGrid& grid) {
    const auto T = static_cast<std::size_t>(grid.horizon_steps);
    StepLimits lim{std::vector<double>(T, 0.0), std::vector<double>(T, 0.0), std::vector<double>(T, 0.0),
                   std::vector<int>(T, -1)};
    auto find = [&](const std::string& id) {
        for (std::size_t i = 0; i < stations.size(); ++i)
            if (stations[i].id == id) return static_cast<int>(i);
        throw std::out_of_range("unknown station '" + id + "'");
    };
    for (std::size_t t = 0; t < T; ++t) {
        if (const auto* p = std::get_if<Parked>(&it.states[t])) {
            const int k = find(p->cs_id);
            lim.station[t] = k;
            lim.sch[t] = lim.dch[t] = effective_power_limit(ev, stations[static_cast<std::size_t>(k)]) * grid.step_hours;
        } else if (const auto* f = std::get_if<FastCharge>(&it.states[t])) {
            const int k = find(f->cs_id);
            lim.station[t] = k;
            lim.fch[t] = fast_charge_bound(*f, stations[static_cast<std::size_t>(k)], grid.step_hours);
        }
    }
    return lim;
}

// First step at which even maximal charging cannot keep the SOE feasible.
inline int first_mobility_violation(const Ev& ev, const Itinerary& it, const StepLimits& lim) {
    double soe = ev.soe_init;
    for (std::size_t t = 0; t < it.states.size(); ++t) {
        soe = std::min(ev.soe_max, soe + lim.sch[t] * ev.eta_sch + lim.fch[t] * ev.eta_fch);
        soe -= run_energy(it.states[t]) / ev.eta_run;
        if (soe < ev.soe_min - lp::kFeasibilityTol) return static_cast<int>(t);
    }
    return static_cast<int>(it.states.size()) - 1;
}

struct EvVars {
    std::vector<std::size_t> sch, dch, fch, soe;
};

// Tie-breaks among cost-optimal schedules, applied in order: least energy
// moved, then the lowest time-weighted SOE (charge late, discharge early).
// Both are stated per exchanged kWh at absolute steps, so different LP
// formulations of the same schedule set settle on the same point.
class TieBreaks {
public:
    explicit TieBreaks(std::size_t horizon) : weight_(horizon + 1, 0.0) {
        // weight_[t] sums the per-step SOE weights from t to the horizon.
        for (std::size_t t = horizon; t-- > 0;)
            weight_[t] = weight_[t + 1] + 1.0 + std::sqrt(static_cast<double>(t + 1)) / static_cast<double>(horizon);
    }

    void charge(std::size_t t, std::size_t var, double eta) { terms_.push_back({var, weight_[t] * eta}); }
    void discharge(std::size_t t, std::size_t var, double eta) { terms_.push_back({var, -weight_[t] / eta}); }

    std::vector<std::vector<double>> stages(std::size_t num_vars) const {
        std::vector<std::vector<double>> out(2, std::vector<double>(num_vars, 0.0));
        for (const auto& [var, soe_weight] : terms_) {
            out[0][var] = 1.0;
            out[1][var] = soe_weight;
        }
        return out;
    }

private:
    std::vector<double> weight_;
    std::vector<std::pair<std::size_t, double>> terms_;
};

inline void add_tie_breaks(TieBreaks& tb, const Ev& ev, const EvVars& v) {
    for (std::size_t t = 0; t < v.soe.size(); ++t) {
        tb.charge(t, v.sch[t], ev.eta_sch);
        tb.discharge(t, v.dch[t], ev.eta_dch);
        tb.charge(t, v.fch[t], ev.eta_fch);
    }
}

// Adds one EV's whole-day block: SOE recursion with all four energy terms.
inline EvVars add_ev_block(lp::LinearProgram& prog, const Ev& ev, const Itinerary& it, const StepLimits& lim,
                           std::span<const ChargingStation> stations, const PriceCurve& prices,
                           const CostOptions& options) {
    using lp::Relation;
    const std::size_t T = it.states.size();
    EvVars v;
    for (std::size_t t = 0; t < T; ++t) {
        const double price = prices.prices[t];
        const int k = lim.station[t];
        const ChargingStation* cs = k >= 0 ? &stations[static_cast<std::size_t>(k)] : nullptr;
        v.sch.push_back(prog.add_var(0.0, lim.sch[t], cs ? charge_rate(price, *cs, options) : 0.0));
        v.dch.push_back(prog.add_var(0.0, lim.dch[t], cs ? discharge_rate(price, *cs, ev, options) : 0.0));
        v.fch.push_back(prog.add_var(0.0, lim.fch[t], cs ? charge_rate(price, *cs, options) : 0.0));
        const double lower = t + 1 == T ? std::max(ev.soe_min, ev.soe_end_min) : ev.soe_min;
        v.soe.push_back(prog.add_var(std::min(lower, ev.soe_max), ev.soe_max, 0.0));

        // soe_t - soe_{t-1} - eta_sch*sch + dch/eta_dch - eta_fch*fch = -E_run/eta_run
        std::vector<lp::Term> row{{v.soe[t], 1.0},
                                  {v.sch[t], -ev.eta_sch},
                                  {v.dch[t], 1.0 / ev.eta_dch},
                                  {v.fch[t], -ev.eta_fch}};
        double rhs = -run_energy(it.states[t]) / ev.eta_run;
        if (t == 0) rhs += ev.soe_init;
        else row.push_back({v.soe[t - 1], -1.0});
        prog.add_constraint(std::move(row), Relation::Equal, rhs);
    }
    return v;
}

// Removes charge and discharge in the same step when that does not raise
// the cost; the SOE change of the step is kept. Only ties are affected when
// effective prices are nonnegative, e.g. with unit efficiencies and no fees.
inline void net_step(double& in, double& out, double eta_in, double eta_out, double in_rate, double out_rate) {
    if (in <= 0.0 || out <= 0.0) return;
    const double k = eta_in * eta_out;  // discharge kWh matching one charged kWh
    if (in_rate + k * out_rate < 0.0) return;
    if (in * k <= out) {
        out -= in * k;
        in = 0.0;
    } else {
        in -= out / k;
        out = 0.0;
    }
}

inline EvSchedule extract(const Ev& ev, const EvVars& v, const std::vector<double>& x) {
    EvSchedule s;
    s.ev_id = ev.id;
    for (std::size_t t = 0; t < v.soe.size(); ++t) {
        // Snap solver round-off in the nonnegative decisions.
        s.e_sch.push_back(std::max(0.0, x[v.sch[t]]));
        s.e_dch.push_back(std::max(0.0, x[v.dch[t]]));
        s.e_fch.push_back(std::max(0.0, x[v.fch[t]]));
        s.soe.push_back(x[v.soe[t]]);
    }
    return s;
}

inline void fill_costs(EvSchedule& s, const Ev& ev, const Itinerary& it, std::span<const ChargingStation> stations,
                       const PriceCurve& prices, const CostOptions& options) {
    CostBreakdown c;
    double objective = 0.0;
    for (std::size_t t = 0; t < s.soe.size(); ++t) {
        const std::string* id = station_of(it.states[t]);
        if (!id) continue;
        const auto cs = std::find_if(stations.begin(), stations.end(), [&](const auto& c) { return c.id == *id; });
        net_step(s.e_sch[t], s.e_dch[t], ev.eta_sch, ev.eta_dch, charge_rate(prices.prices[t], *cs, options),
                 discharge_rate(prices.prices[t], *cs, ev, options));
        accumulate_step_cost(c, prices.prices[t], *cs, ev, s.e_sch[t], s.e_dch[t], s.e_fch[t], options);
        objective += (s.e_sch[t] + s.e_fch[t]) * charge_rate(prices.prices[t], *cs, options) +
                     s.e_dch[t] * discharge_rate(prices.prices[t], *cs, ev, options);
    }
    c.finalize();
    s.cost_breakdown = c;
    s.total_cost = objective;
}

}  // namespace detail

/// Cost-minimal whole-day schedule of one EV. Throws InfeasibleMobility when
/// no charging plan can cover the itinerary.
inline EvSchedule optimize_ev(const Ev& ev, const Itinerary& itinerary, std::span<const ChargingStation> stations,
                              const PriceCurve& prices, const TimeGrid& grid, const CostOptions& options = {}) {
    const auto lim = detail::step_limits(ev, itinerary, stations, grid);
    lp::LinearProgram prog;
    const auto vars = detail::add_ev_block(prog, ev, itinerary, lim, stations, prices, options);
    detail::TieBreaks tb(itinerary.states.size());
    detail::add_tie_breaks(tb, ev, vars);
    const auto sol = lp::solve_lexicographic(prog, tb.stages(prog.num_vars()));
    if (!sol.optimal()) throw InfeasibleMobility(ev.id, detail::first_mobility_violation(ev, itinerary, lim));
    auto schedule = detail::extract(ev, vars, sol.values);
    detail::fill_costs(schedule, ev, itinerary, stations, prices, options);
    return schedule;
}

inline EvSchedule optimize_ev(const Scenario& s, std::size_t ev_index, const CostOptions& options = {}) {
    const Ev& ev = s.evs[ev_index];
    return optimize_ev(ev, s.itinerary_of(ev.id), s.stations, s.price_curve, s.time_grid, options);
}

/// Stacks per-EV schedules; contributors are the EVs in scenario order.
inline AggregateProfile aggregate_by_ev(const Scenario& s, const std::vector<EvSchedule>& schedules) {
    const auto T = static_cast<std::size_t>(s.horizon());
    AggregateProfile agg;
    agg.total_charge.assign(T, 0.0);
    agg.total_discharge.assign(T, 0.0);
    for (const auto& sch : schedules) {
        AggregateProfile::Contributor c{sch.ev_id, std::vector<double>(T), std::vector<double>(T)};
        for (std::size_t t = 0; t < T; ++t) {
            c.charge[t] = sch.e_sch[t] + sch.e_fch[t];
            c.discharge[t] = sch.e_dch[t];
            agg.total_charge[t] += c.charge[t];
            agg.total_discharge[t] += c.discharge[t];
        }
        agg.contributors.push_back(std::move(c));
    }
    return agg;
}

/// Same data grouped by the station each EV is plugged into. Totals are
/// accumulated in EV order, so they equal aggregate_by_ev's exactly.
inline AggregateProfile aggregate_by_station(const Scenario& s, const std::vector<EvSchedule>& schedules) {
    const auto T = static_cast<std::size_t>(s.horizon());
    AggregateProfile agg;
    agg.total_charge.assign(T, 0.0);
    agg.total_discharge.assign(T, 0.0);
    for (const auto& cs : s.stations)
        agg.contributors.push_back({cs.id, std::vector<double>(T, 0.0), std::vector<double>(T, 0.0)});
    for (const auto& sch : schedules) {
        const Itinerary& it = s.itinerary_of(sch.ev_id);
        for (std::size_t t = 0; t < T; ++t) {
            const double ch = sch.e_sch[t] + sch.e_fch[t];
            agg.total_charge[t] += ch;
            agg.total_discharge[t] += sch.e_dch[t];
            if (const std::string* id = station_of(it.states[t])) {
                auto& c = agg.contributors[s.station_index(*id)];
                c.charge[t] += ch;
                c.discharge[t] += sch.e_dch[t];
            }
        }
    }
    return agg;
}

namespace detail {

// Whether the summed per-EV limits at some station and step exceed the
// station's capacity in either direction.
inline bool coupling_may_bind(const Scenario& s, const std::vector<StepLimits>& limits) {
    const auto T = static_cast<std::size_t>(s.horizon());
    for (std::size_t k = 0; k < s.stations.size(); ++k) {
        const double cap = s.stations[k].num_cps * s.stations[k].cp_limit * s.step_hours();
        for (std::size_t t = 0; t < T; ++t) {
            double in = 0.0, out = 0.0;
            for (const auto& lim : limits) {
                if (lim.station[t] != static_cast<int>(k)) continue;
                in += lim.sch[t] + lim.fch[t];
                out += lim.dch[t];
            }
            if (in > cap + lp::kFeasibilityTol || out > cap + lp::kFeasibilityTol) return true;
        }
    }
    return false;
}

inline std::vector<EvSchedule> optimize_joint(const Scenario& s, const std::vector<StepLimits>& limits,
                                              const CostOptions& options) {
    using lp::Relation;
    lp::LinearProgram prog;
    std::vector<EvVars> vars;
    for (std::size_t v = 0; v < s.evs.size(); ++v)
        vars.push_back(add_ev_block(prog, s.evs[v], s.itinerary_of(s.evs[v].id), limits[v], s.stations,
                                    s.price_curve, options));
    const auto T = static_cast<std::size_t>(s.horizon());
    for (std::size_t k = 0; k < s.stations.size(); ++k) {
        const double cap = s.stations[k].num_cps * s.stations[k].cp_limit * s.step_hours();
        for (std::size_t t = 0; t < T; ++t) {
            std::vector<lp::Term> in, out;
            for (std::size_t v = 0; v < s.evs.size(); ++v) {
                if (limits[v].station[t] != static_cast<int>(k)) continue;
                in.push_back({vars[v].sch[t], 1.0});
                in.push_back({vars[v].fch[t], 1.0});
                out.push_back({vars[v].dch[t], 1.0});
            }
            if (in.empty()) continue;
            prog.add_constraint(std::move(in), Relation::LessEqual, cap);
            prog.add_constraint(std::move(out), Relation::LessEqual, cap);
        }
    }
    TieBreaks tb(T);
    for (std::size_t v = 0; v < s.evs.size(); ++v) add_tie_breaks(tb, s.evs[v], vars[v]);
    const auto sol = lp::solve_lexicographic(prog, tb.stages(prog.num_vars()));
    if (!sol.optimal()) {
        for (std::size_t v = 0; v < s.evs.size(); ++v) {
            const auto& ev = s.evs[v];
            const auto& it = s.itinerary_of(ev.id);
            const int step = first_mobility_violation(ev, it, limits[v]);
            // Report the first EV that is infeasible on its own, else the first EV.
            lp::LinearProgram single;
            add_ev_block(single, ev, it, limits[v], s.stations, s.price_curve, options);
            if (!lp::solve(single).optimal()) throw InfeasibleMobility(ev.id, step);
        }
        throw InfeasibleMobility(s.evs.empty() ? "" : s.evs.front().id, static_cast<int>(T) - 1);
    }
    std::vector<EvSchedule> out;
    for (std::size_t v = 0; v < s.evs.size(); ++v) {
        auto sch = extract(s.evs[v], vars[v], sol.values);
        fill_costs(sch, s.evs[v], s.itinerary_of(s.evs[v].id), s.stations, s.price_curve, options);
        out.push_back(std::move(sch));
    }
    return out;
}

}  // namespace detail

/// Optimizes every EV of the scenario and stacks the fleet profile.
inline FleetResult optimize_fleet(const Scenario& s, const CostOptions& options = {},
                                  FleetMode mode = FleetMode::Auto) {
    std::vector<detail::StepLimits> limits;
    for (const auto& ev : s.evs) limits.push_back(detail::step_limits(ev, s.itinerary_of(ev.id), s.stations, s.time_grid));

    FleetResult r;
    r.joint = mode == FleetMode::Joint || (mode == FleetMode::Auto && detail::coupling_may_bind(s, limits));
    if (r.joint) {
        r.schedules = detail::optimize_joint(s, limits, options);
    } else {
        for (std::size_t v = 0; v < s.evs.size(); ++v) r.schedules.push_back(optimize_ev(s, v, options));
    }
    r.aggregate = aggregate_by_ev(s, r.schedules);
    return r;
}

inline double total_cost(const std::vector<EvSchedule>& schedules) {
    double c = 0.0;
    for (const auto& s : schedules) c += s.total_cost;
    return c;
}

/// Plan view of EV schedules: every exchange happens where the EV is parked.
inline DispatchPlan to_plan(const Scenario& s, const std::vector<EvSchedule>& schedules) {
    DispatchPlan plan = DispatchPlan::empty(s);
    for (const auto& sch : schedules) {
        const std::size_t v = s.ev_index(sch.ev_id);
        const Itinerary& it = s.itinerary_of(sch.ev_id);
        for (std::size_t t = 0; t < sch.soe.size(); ++t) {
            const std::string* id = station_of(it.states[t]);
            if (!id) continue;
            plan.add(v, static_cast<int>(t), {s.station_index(*id), sch.e_sch[t], sch.e_dch[t], sch.e_fch[t]});
        }
    }
    return plan;
}

}  // namespace evsched

#pragma once

// Charging-station-based aggregation. Each station only sees the sessions
// of EVs plugged into it, bounded by forecasts of arrival/departure time and
// SOE, and optimizes them on its own. Also hosts the omniscient central
// optimizer assembled from the station viewpoint.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "costs.hpp"
#include "evba.hpp"
#include "log.hpp"
#include "lp.hpp"
#include "random.hpp"
#include "scenario.hpp"
#include "settlement.hpp"

namespace evsched {

enum class BoundaryPolicy {
    Naive,   // SOE floors cover mobility only
    Oracle,  // SOE boundaries read off the EV-based optimum
};

/// One parked (or fast-charge) stay: steps [t_arr, t_dep) at cs_id. soe_arr
/// is the SOE when the session starts, soe_dep the floor when it ends.
struct SessionForecast {
    std::string ev_id;
    std::string cs_id;
    int index = 0;  // ordinal among the EV's sessions
    int t_arr = 0;
    double soe_arr = 0.0;
    int t_dep = 0;
    double soe_dep = 0.0;
    bool fast = false;

    bool operator==(const SessionForecast&) const = default;
};

struct SessionPlan {
    SessionForecast forecast;
    std::vector<double> e_sch;  // per step of [t_arr, t_dep)
    std::vector<double> e_dch;
    std::vector<double> soe;
    double step_limit = 0.0;  // kWh per step the station assumed
    bool relaxed = false;     // departure floor lowered to what was reachable
};

struct CsSchedule {
    std::string cs_id;
    std::vector<SessionPlan> sessions;
    std::vector<double> total_charge;     // per step, kWh
    std::vector<double> total_discharge;  // per step, kWh
    double total_cost = 0.0;              // LP objective
};

class InfeasibleSession : public std::runtime_error {
public:
    explicit InfeasibleSession(SessionForecast s)
        : std::runtime_error("infeasible session of EV '" + s.ev_id + "' at station '" + s.cs_id + "' [" +
                             std::to_string(s.t_arr) + ", " + std::to_string(s.t_dep) + ")"),
          session_(std::move(s)) {}
    const SessionForecast& session() const noexcept { return session_; }

private:
    SessionForecast session_;
};

/// What a station does when a departure floor cannot be reached.
enum class UnreachableFloor {
    Throw,  // raise InfeasibleSession
    Relax,  // penalize the shortfall instead (logged)
};

namespace detail {

struct Stay {
    std::string cs_id;
    int t_arr, t_dep;
    bool fast;
};

// Splits an itinerary into maximal runs at one station.
inline std::vector<Stay> split_stays(const Itinerary& it) {
    std::vector<Stay> stays;
    for (int t = 0; t < static_cast<int>(it.states.size()); ++t) {
        const auto& st = it.states[static_cast<std::size_t>(t)];
        const std::string* id = station_of(st);
        if (!id) continue;
        const bool fast = std::holds_alternative<FastCharge>(st);
        if (!stays.empty() && stays.back().t_dep == t && stays.back().cs_id == *id && stays.back().fast == fast)
            stays.back().t_dep = t + 1;
        else
            stays.push_back({*id, t, t + 1, fast});
    }
    return stays;
}

inline double run_between(const Itinerary& it, const Ev& ev, int from, int to) {
    double r = 0.0;
    for (int t = from; t < to; ++t) r += run_energy(it.states[static_cast<std::size_t>(t)]) / ev.eta_run;
    return r;
}

// Minimal SOE at the start of each step (index T = horizon end) that still
// allows all remaining trips when charging at full power in every stay.
inline std::vector<double> mobility_floor(const Ev& ev, const Itinerary& it, const StepLimits& lim) {
    const std::size_t T = it.states.size();
    std::vector<double> req(T + 1);
    req[T] = std::max(ev.soe_min, ev.soe_end_min);
    for (std::size_t t = T; t-- > 0;) {
        const double gain = lim.sch[t] * ev.eta_sch + lim.fch[t] * ev.eta_fch;
        const double need = req[t + 1] + run_energy(it.states[t]) / ev.eta_run - gain;
        req[t] = std::max(ev.soe_min, need);
        if (req[t] > ev.soe_max + lp::kFeasibilityTol) throw InfeasibleMobility(ev.id, static_cast<int>(t));
    }
    return req;
}

}  // namespace detail

/// Ground-truth sessions with SOE boundaries from the given policy. The
/// oracle policy reads boundaries from `evba_schedules` (scenario EV order).
inline std::vector<SessionForecast> derive_true_sessions(const Scenario& s, BoundaryPolicy policy,
                                                         const std::vector<EvSchedule>& evba_schedules) {
    std::vector<SessionForecast> out;
    for (std::size_t v = 0; v < s.evs.size(); ++v) {
        const Ev& ev = s.evs[v];
        const Itinerary& it = s.itinerary_of(ev.id);
        const auto stays = detail::split_stays(it);
        const auto lim = detail::step_limits(ev, it, s.stations, s.time_grid);
        if (policy == BoundaryPolicy::Naive) {
            const auto req = detail::mobility_floor(ev, it, lim);
            if (ev.soe_init < req[0] - lp::kFeasibilityTol)
                throw InfeasibleMobility(ev.id, detail::first_mobility_violation(ev, it, lim));
            double soe = ev.soe_init;
            int cursor = 0;
            for (std::size_t k = 0; k < stays.size(); ++k) {
                const auto& st = stays[k];
                soe -= detail::run_between(it, ev, cursor, st.t_arr);
                const double dep = req[static_cast<std::size_t>(st.t_dep)];
                out.push_back({ev.id, st.cs_id, static_cast<int>(k), st.t_arr, soe, st.t_dep, dep, st.fast});
                soe = dep;
                cursor = st.t_dep;
            }
        } else {
            if (v >= evba_schedules.size() || evba_schedules[v].ev_id != ev.id)
                throw std::invalid_argument("oracle boundaries need one EV schedule per EV in scenario order");
            const auto& soe = evba_schedules[v].soe;
            for (std::size_t k = 0; k < stays.size(); ++k) {
                const auto& st = stays[k];
                const double arr = st.t_arr == 0 ? ev.soe_init : soe[static_cast<std::size_t>(st.t_arr - 1)];
                out.push_back({ev.id, st.cs_id, static_cast<int>(k), st.t_arr, arr, st.t_dep,
                               soe[static_cast<std::size_t>(st.t_dep - 1)], st.fast});
            }
        }
    }
    return out;
}

inline std::vector<SessionForecast> derive_true_sessions(const Scenario& s, BoundaryPolicy policy,
                                                         const CostOptions& options = {}) {
    if (policy == BoundaryPolicy::Naive) return derive_true_sessions(s, policy, std::vector<EvSchedule>{});
    return derive_true_sessions(s, policy, optimize_fleet(s, options).schedules);
}

/// Perturbs the sessions with the forecast error model. Deterministic in
/// `seed`. Sessions whose window collapses after shifting are dropped.
inline std::vector<SessionForecast> apply_forecast_noise(const std::vector<SessionForecast>& sessions,
                                                         const Scenario& s, const ForecastErrorModel& model,
                                                         std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> weights;
    for (const auto& ts : model.time_shift_probs) weights.push_back(ts.prob);
    const int T = s.horizon();

    std::vector<SessionForecast> out;
    for (const auto& in : sessions) {
        const Ev& ev = s.evs[s.ev_index(in.ev_id)];
        SessionForecast f = in;
        const int arr_shift = model.time_shift_probs[rng.discrete(weights)].shift;
        const int dep_shift = model.time_shift_probs[rng.discrete(weights)].shift;
        f.t_arr = std::clamp(in.t_arr + arr_shift, 0, T - 1);
        f.t_dep = std::clamp(in.t_dep + dep_shift, 1, T);

        // Truncated Gaussian by rejection; fall back to clamping.
        const double z = rng.normal();
        double soe = in.soe_arr + model.soe_sigma * z;
        for (int tries = 0; (soe < ev.soe_min || soe > ev.soe_max) && tries < 64; ++tries)
            soe = in.soe_arr + model.soe_sigma * rng.normal();
        f.soe_arr = std::clamp(soe, ev.soe_min, ev.soe_max);
        f.soe_dep = std::min(ev.soe_max, in.soe_dep + model.dep_soe_margin);

        if (f.t_arr >= f.t_dep) {
            warn("forecast session of '" + f.ev_id + "' at '" + f.cs_id + "' has no steps left after noise; dropped");
            continue;
        }
        out.push_back(f);
    }
    return out;
}

/// One station's LP over its own sessions. With `obc_known` false the
/// station assumes its CP limit is the only power bound.
inline CsSchedule optimize_cs(const Scenario& s, std::size_t cs_index, const std::vector<SessionForecast>& sessions,
                              bool obc_known, const CostOptions& options = {},
                              UnreachableFloor on_unreachable = UnreachableFloor::Throw) {
    using lp::Relation;
    const ChargingStation& cs = s.stations[cs_index];
    const auto T = static_cast<std::size_t>(s.horizon());
    const double dt = s.step_hours();

    CsSchedule out;
    out.cs_id = cs.id;
    out.total_charge.assign(T, 0.0);
    out.total_discharge.assign(T, 0.0);

    struct Vars {
        std::vector<std::size_t> sch, dch, soe;
        std::optional<std::size_t> shortfall;
    };
    double max_rate = 1.0;
    for (std::size_t t = 0; t < T; ++t)
        max_rate = std::max(max_rate, std::abs(s.price_curve.prices[t]) + cs.grid_fee + cs.utilization_fee);
    for (const auto& ev : s.evs) max_rate = std::max(max_rate, ev.degradation_fee);
    const double shortfall_penalty = 1e3 * max_rate;

    lp::LinearProgram prog;
    std::vector<Vars> vars;
    std::vector<std::vector<lp::Term>> step_in(T), step_out(T);

    for (const auto& f : sessions) {
        if (f.cs_id != cs.id) throw std::invalid_argument("session of '" + f.ev_id + "' is not at '" + cs.id + "'");
        const Ev& ev = s.evs[s.ev_index(f.ev_id)];
        SessionPlan plan;
        plan.forecast = f;
        plan.step_limit = f.fast ? cs.cp_limit * dt : (obc_known ? effective_power_limit(ev, cs) : cs.cp_limit) * dt;
        const double eta_in = f.fast ? ev.eta_fch : ev.eta_sch;

        if (on_unreachable == UnreachableFloor::Throw) {
            const double reachable = std::min(ev.soe_max, f.soe_arr + (f.t_dep - f.t_arr) * plan.step_limit * eta_in);
            if (f.soe_dep > reachable + lp::kFeasibilityTol) throw InfeasibleSession(f);
        }
        const double floor = std::clamp(f.soe_dep, ev.soe_min, ev.soe_max);

        Vars v;
        for (int t = f.t_arr; t < f.t_dep; ++t) {
            const double price = s.price_curve.prices[static_cast<std::size_t>(t)];
            v.sch.push_back(prog.add_var(0.0, plan.step_limit, charge_rate(price, cs, options)));
            v.dch.push_back(prog.add_var(0.0, f.fast ? 0.0 : plan.step_limit, discharge_rate(price, cs, ev, options)));
            const bool hard_floor = t + 1 == f.t_dep && on_unreachable == UnreachableFloor::Throw;
            v.soe.push_back(prog.add_var(hard_floor ? floor : ev.soe_min, ev.soe_max));
            const std::size_t k = v.soe.size() - 1;
            // Within the session: soe_t = soe_{t-1} + eta*sch - dch/eta_dch; soe before t_arr is soe_arr.
            std::vector<lp::Term> row{{v.soe[k], 1.0}, {v.sch[k], -eta_in}, {v.dch[k], 1.0 / ev.eta_dch}};
            double rhs = 0.0;
            if (k == 0) rhs = f.soe_arr;
            else row.push_back({v.soe[k - 1], -1.0});
            prog.add_constraint(std::move(row), Relation::Equal, rhs);
            step_in[static_cast<std::size_t>(t)].push_back({v.sch[k], 1.0});
            step_out[static_cast<std::size_t>(t)].push_back({v.dch[k], 1.0});
        }
        if (on_unreachable == UnreachableFloor::Relax) {
            // Soft floor: any shortfall costs far more than charging could.
            v.shortfall = prog.add_var(0.0, floor - ev.soe_min, shortfall_penalty);
            prog.add_constraint({{v.soe.back(), 1.0}, {*v.shortfall, 1.0}}, Relation::GreaterEqual, floor);
        }
        vars.push_back(std::move(v));
        out.sessions.push_back(std::move(plan));
    }
    const double cap = cs.num_cps * cs.cp_limit * dt;
    for (std::size_t t = 0; t < T; ++t) {
        if (step_in[t].size() < 2) continue;  // a single session is already within cp_limit
        prog.add_constraint(std::move(step_in[t]), Relation::LessEqual, cap);
        prog.add_constraint(std::move(step_out[t]), Relation::LessEqual, cap);
    }

    detail::TieBreaks tb(T);
    for (std::size_t i = 0; i < vars.size(); ++i) {
        const auto& f = out.sessions[i].forecast;
        const Ev& ev = s.evs[s.ev_index(f.ev_id)];
        for (std::size_t k = 0; k < vars[i].sch.size(); ++k) {
            const auto t = static_cast<std::size_t>(f.t_arr) + k;
            tb.charge(t, vars[i].sch[k], f.fast ? ev.eta_fch : ev.eta_sch);
            tb.discharge(t, vars[i].dch[k], ev.eta_dch);
        }
    }
    const auto sol = lp::solve_lexicographic(prog, tb.stages(prog.num_vars()));
    if (!sol.optimal()) {
        if (out.sessions.empty()) return out;
        throw InfeasibleSession(out.sessions.front().forecast);
    }
    out.total_cost = sol.objective_value;
    for (std::size_t i = 0; i < out.sessions.size(); ++i) {
        auto& plan = out.sessions[i];
        const auto& v = vars[i];
        if (v.shortfall) {
            const double gap = sol.values[*v.shortfall];
            out.total_cost -= gap * shortfall_penalty;
            if (gap > lp::kFeasibilityTol) {
                warn("departure floor of '" + plan.forecast.ev_id + "' at '" + cs.id + "' unreachable; short by " +
                     std::to_string(gap) + " kWh");
                plan.forecast.soe_dep -= gap;
                plan.relaxed = true;
            }
        }
        for (std::size_t k = 0; k < v.soe.size(); ++k) {
            const auto ts = static_cast<std::size_t>(plan.forecast.t_arr) + k;
            double charge = std::max(0.0, sol.values[v.sch[k]]), discharge = std::max(0.0, sol.values[v.dch[k]]);
            const Ev& ev = s.evs[s.ev_index(plan.forecast.ev_id)];
            detail::net_step(charge, discharge, plan.forecast.fast ? ev.eta_fch : ev.eta_sch, ev.eta_dch,
                             charge_rate(s.price_curve.prices[ts], cs, options),
                             discharge_rate(s.price_curve.prices[ts], cs, ev, options));
            plan.e_sch.push_back(charge);
            plan.e_dch.push_back(discharge);
            plan.soe.push_back(sol.values[v.soe[k]]);
            out.total_charge[ts] += charge;
            out.total_discharge[ts] += discharge;
        }
    }
    return out;
}

/// Every station optimizes its own forecast sessions (scenario station order).
inline std::vector<CsSchedule> optimize_stations(const Scenario& s, const std::vector<SessionForecast>& sessions,
                                                 bool obc_known, const CostOptions& options = {},
                                                 UnreachableFloor on_unreachable = UnreachableFloor::Throw) {
    std::vector<CsSchedule> out;
    for (std::size_t k = 0; k < s.stations.size(); ++k) {
        std::vector<SessionForecast> mine;
        for (const auto& f : sessions)
            if (f.cs_id == s.stations[k].id) mine.push_back(f);
        out.push_back(optimize_cs(s, k, mine, obc_known, options, on_unreachable));
    }
    return out;
}

/// Plan view of station schedules; fast-charge sessions map to e_fch.
inline DispatchPlan to_plan(const Scenario& s, const std::vector<CsSchedule>& schedules) {
    DispatchPlan plan = DispatchPlan::empty(s);
    for (const auto& cs : schedules) {
        const std::size_t k = s.station_index(cs.cs_id);
        for (const auto& sp : cs.sessions) {
            const std::size_t v = s.ev_index(sp.forecast.ev_id);
            for (std::size_t i = 0; i < sp.e_sch.size(); ++i) {
                const int t = sp.forecast.t_arr + static_cast<int>(i);
                if (sp.forecast.fast) plan.add(v, t, {k, 0.0, 0.0, sp.e_sch[i]});
                else plan.add(v, t, {k, sp.e_sch[i], sp.e_dch[i], 0.0});
            }
        }
    }
    return plan;
}

inline double total_cost(const std::vector<CsSchedule>& schedules) {
    double c = 0.0;
    for (const auto& s : schedules) c += s.total_cost;
    return c;
}

/// Omniscient central aggregator: variables are indexed by station and
/// session, and the sessions of each EV are chained through known driving
/// consumption. Equivalent in value to the joint EV-based program.
inline std::vector<EvSchedule> optimize_central(const Scenario& s, const CostOptions& options = {}) {
    using lp::Relation;
    const auto T = static_cast<std::size_t>(s.horizon());
    const double dt = s.step_hours();

    struct SessionVars {
        std::size_t ev;
        detail::Stay stay;
        std::vector<std::size_t> in, out, soe;
    };
    std::vector<std::vector<detail::Stay>> stays(s.evs.size());
    for (std::size_t v = 0; v < s.evs.size(); ++v) stays[v] = detail::split_stays(s.itinerary_of(s.evs[v].id));

    lp::LinearProgram prog;
    std::vector<SessionVars> sessions;
    std::map<std::pair<std::size_t, int>, std::size_t> by_ev_arrival;  // (ev, t_arr) -> session

    // Station-major assembly.
    for (std::size_t k = 0; k < s.stations.size(); ++k) {
        const ChargingStation& cs = s.stations[k];
        std::vector<std::vector<lp::Term>> step_in(T), step_out(T);
        for (std::size_t v = 0; v < s.evs.size(); ++v) {
            const Ev& ev = s.evs[v];
            const Itinerary& it = s.itinerary_of(ev.id);
            for (const auto& st : stays[v]) {
                if (st.cs_id != cs.id) continue;
                SessionVars sv{v, st, {}, {}, {}};
                for (int t = st.t_arr; t < st.t_dep; ++t) {
                    const auto ut = static_cast<std::size_t>(t);
                    const double price = s.price_curve.prices[ut];
                    double in_max, out_max;
                    if (st.fast) {
                        in_max = fast_charge_bound(std::get<FastCharge>(it.states[ut]), cs, dt);
                        out_max = 0.0;
                    } else {
                        in_max = out_max = effective_power_limit(ev, cs) * dt;
                    }
                    sv.in.push_back(prog.add_var(0.0, in_max, charge_rate(price, cs, options)));
                    sv.out.push_back(prog.add_var(0.0, out_max, discharge_rate(price, cs, ev, options)));
                    sv.soe.push_back(prog.add_var(ev.soe_min, ev.soe_max));
                    step_in[ut].push_back({sv.in.back(), 1.0});
                    step_out[ut].push_back({sv.out.back(), 1.0});
                    if (sv.soe.size() > 1) {
                        const double eta = st.fast ? ev.eta_fch : ev.eta_sch;
                        const std::size_t i = sv.soe.size() - 1;
                        prog.add_constraint({{sv.soe[i], 1.0}, {sv.soe[i - 1], -1.0}, {sv.in[i], -eta},
                                             {sv.out[i], 1.0 / ev.eta_dch}},
                                            Relation::Equal, 0.0);
                    }
                }
                by_ev_arrival[{v, st.t_arr}] = sessions.size();
                sessions.push_back(std::move(sv));
            }
        }
        const double cap = cs.num_cps * cs.cp_limit * dt;
        for (std::size_t t = 0; t < T; ++t) {
            if (step_in[t].empty()) continue;
            prog.add_constraint(std::move(step_in[t]), Relation::LessEqual, cap);
            prog.add_constraint(std::move(step_out[t]), Relation::LessEqual, cap);
        }
    }

    // Chain each EV's sessions through the driving in between.
    for (std::size_t v = 0; v < s.evs.size(); ++v) {
        const Ev& ev = s.evs[v];
        const Itinerary& it = s.itinerary_of(ev.id);
        const SessionVars* prev = nullptr;
        int cursor = 0;
        for (const auto& st : stays[v]) {
            const SessionVars& sv = sessions[by_ev_arrival.at({v, st.t_arr})];
            const double run = detail::run_between(it, ev, cursor, st.t_arr);
            const double eta = st.fast ? ev.eta_fch : ev.eta_sch;
            // First step: soe - prev_end - eta*in + out/eta_dch = -run (+ soe_init if no predecessor)
            std::vector<lp::Term> row{{sv.soe[0], 1.0}, {sv.in[0], -eta}, {sv.out[0], 1.0 / ev.eta_dch}};
            double rhs = -run;
            if (prev) {
                row.push_back({prev->soe.back(), -1.0});
                if (run > 0.0) prog.add_constraint({{prev->soe.back(), 1.0}}, Relation::GreaterEqual, ev.soe_min + run);
            } else {
                rhs += ev.soe_init;
                if (ev.soe_init - run < ev.soe_min - lp::kFeasibilityTol) throw InfeasibleMobility(ev.id, st.t_arr - 1);
            }
            prog.add_constraint(std::move(row), Relation::Equal, rhs);
            prev = &sv;
            cursor = st.t_dep;
        }
        const double tail = detail::run_between(it, ev, cursor, static_cast<int>(T));
        const double end_floor = std::max(ev.soe_min, ev.soe_end_min) + tail;
        if (prev) prog.add_constraint({{prev->soe.back(), 1.0}}, Relation::GreaterEqual, end_floor);
        else if (ev.soe_init < end_floor - lp::kFeasibilityTol) throw InfeasibleMobility(ev.id, static_cast<int>(T) - 1);
    }

    detail::TieBreaks tb(T);
    for (const auto& sv : sessions) {
        const Ev& ev = s.evs[sv.ev];
        for (std::size_t i = 0; i < sv.in.size(); ++i) {
            const auto t = static_cast<std::size_t>(sv.stay.t_arr) + i;
            tb.charge(t, sv.in[i], sv.stay.fast ? ev.eta_fch : ev.eta_sch);
            tb.discharge(t, sv.out[i], ev.eta_dch);
        }
    }
    const auto sol = lp::solve_lexicographic(prog, tb.stages(prog.num_vars()));
    if (!sol.optimal()) {
        // Name the EV that cannot be served even on its own.
        for (std::size_t v = 0; v < s.evs.size(); ++v) optimize_ev(s, v, options);
        throw InfeasibleMobility(s.evs.empty() ? "" : s.evs.front().id, static_cast<int>(T) - 1);
    }

    std::vector<EvSchedule> out;
    for (std::size_t v = 0; v < s.evs.size(); ++v) {
        const Ev& ev = s.evs[v];
        const Itinerary& it = s.itinerary_of(ev.id);
        EvSchedule sch;
        sch.ev_id = ev.id;
        sch.e_sch.assign(T, 0.0);
        sch.e_dch.assign(T, 0.0);
        sch.e_fch.assign(T, 0.0);
        sch.soe.assign(T, 0.0);
        std::vector<bool> known(T, false);
        for (const auto& sv : sessions) {
            if (sv.ev != v) continue;
            for (std::size_t i = 0; i < sv.soe.size(); ++i) {
                const auto t = static_cast<std::size_t>(sv.stay.t_arr) + i;
                const double in = std::max(0.0, sol.values[sv.in[i]]);
                (sv.stay.fast ? sch.e_fch : sch.e_sch)[t] = in;
                sch.e_dch[t] = std::max(0.0, sol.values[sv.out[i]]);
                sch.soe[t] = sol.values[sv.soe[i]];
                known[t] = true;
            }
        }
        double soe = ev.soe_init;
        for (std::size_t t = 0; t < T; ++t) {
            if (known[t]) soe = sch.soe[t];
            else soe -= run_energy(it.states[t]) / ev.eta_run, sch.soe[t] = soe;
        }
        detail::fill_costs(sch, ev, it, s.stations, s.price_curve, options);
        out.push_back(std::move(sch));
    }
    return out;
}

}  // namespace evsched

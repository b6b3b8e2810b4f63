#pragma once

// Experiment harness: schedule -> delivery -> settlement per seed, the
// comparison against the EV-based baseline, and the four issue studies.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "costs.hpp"
#include "evba.hpp"
#include "evca.hpp"
#include "scenario.hpp"
#include "settlement.hpp"

namespace evsched {

enum class Model { Evba, Evca, Central };

inline const char* to_string(Model m) {
    switch (m) {
        case Model::Evba: return "evba";
        case Model::Evca: return "evca";
        case Model::Central: return "central";
    }
    return "?";
}

inline const char* to_string(BoundaryPolicy b) { return b == BoundaryPolicy::Naive ? "naive" : "oracle"; }

struct ExperimentConfig {
    std::string label;
    Model model = Model::Evba;
    BoundaryPolicy boundary = BoundaryPolicy::Naive;  // station model only
    bool obc_known = true;
    bool noise = false;
    CostOptions costs;
    int num_seeds = 1;
    std::uint64_t base_seed = 0;
    unsigned threads = 1;  // 0 = hardware concurrency
};

/// Everything one (config, seed) run produced.
struct RunOutcome {
    DispatchPlan plan;
    DeliveryResult delivery;
    CostBreakdown cost;
    std::vector<EvSchedule> ev_schedules;  // EV-based and central models
    std::vector<CsSchedule> cs_schedules;  // station model
    double lp_objective = 0.0;
    int dropped_sessions = 0;
    int relaxed_sessions = 0;
};

struct RunMetrics {
    std::uint64_t seed = 0;
    CostBreakdown cost;
    double imbalance_kwh = 0.0;  // sum of |scheduled - delivered|
    double deficit_kwh = 0.0;
    double end_shortfall_kwh = 0.0;  // missing to the end-of-day SOE floors
    double v2g_kwh = 0.0;        // delivered discharge
    double lp_objective = 0.0;
    double delta_system = 0.0;         // vs. EV-based baseline
    double delta_ev_perspective = 0.0;
    int dropped_sessions = 0;
    int relaxed_sessions = 0;
};

struct ComparisonReport {
    ExperimentConfig config;
    std::vector<RunMetrics> rows;  // sorted by seed
    RunMetrics mean, stddev;
    RunMetrics baseline;  // EV-based run with the same scenario and fees
};

class ExperimentError : public std::runtime_error {
public:
    ExperimentError(std::uint64_t seed, const std::string& what, bool infeasible)
        : std::runtime_error("seed " + std::to_string(seed) + ": " + what), seed_(seed), infeasible_(infeasible) {}
    std::uint64_t seed() const noexcept { return seed_; }
    /// The model had no feasible schedule (as opposed to bad input).
    bool infeasible() const noexcept { return infeasible_; }

private:
    std::uint64_t seed_;
    bool infeasible_;
};

inline RunOutcome run_once(const Scenario& s, const ExperimentConfig& cfg, std::uint64_t seed) {
    RunOutcome r;
    switch (cfg.model) {
        case Model::Evba:
            r.ev_schedules = optimize_fleet(s, cfg.costs).schedules;
            r.plan = to_plan(s, r.ev_schedules);
            r.lp_objective = total_cost(r.ev_schedules);
            break;
        case Model::Central:
            r.ev_schedules = optimize_central(s, cfg.costs);
            r.plan = to_plan(s, r.ev_schedules);
            r.lp_objective = total_cost(r.ev_schedules);
            break;
        case Model::Evca: {
            auto sessions = derive_true_sessions(s, cfg.boundary, cfg.costs);
            if (cfg.noise) {
                const auto before = sessions.size();
                sessions = apply_forecast_noise(sessions, s, s.forecast_error, seed);
                r.dropped_sessions = static_cast<int>(before - sessions.size());
            }
            r.cs_schedules = optimize_stations(s, sessions, cfg.obc_known, cfg.costs,
                                               cfg.noise ? UnreachableFloor::Relax : UnreachableFloor::Throw);
            for (const auto& cs : r.cs_schedules)
                for (const auto& sp : cs.sessions) r.relaxed_sessions += sp.relaxed;
            r.plan = to_plan(s, r.cs_schedules);
            r.lp_objective = total_cost(r.cs_schedules);
            break;
        }
    }
    r.delivery = simulate_delivery(r.plan, s);
    r.cost = settle(r.delivery, s.price_curve, s, cfg.costs);
    return r;
}

inline RunMetrics metrics_of(const RunOutcome& r, std::uint64_t seed) {
    RunMetrics m;
    m.seed = seed;
    m.cost = r.cost;
    m.imbalance_kwh = r.delivery.total_abs_imbalance();
    m.deficit_kwh = r.delivery.total_deficit();
    m.end_shortfall_kwh = r.delivery.total_end_shortfall();
    m.v2g_kwh = r.delivery.total_delivered_discharge();
    m.lp_objective = r.lp_objective;
    m.dropped_sessions = r.dropped_sessions;
    m.relaxed_sessions = r.relaxed_sessions;
    return m;
}

namespace detail {

// Every floating-point field of RunMetrics, for the summary rows.
template <typename F>
void for_each_value(RunMetrics& m, F&& f) {
    f(m.cost.energy_cost);
    f(m.cost.grid_fees);
    f(m.cost.utilization_fees);
    f(m.cost.degradation_cost);
    f(m.cost.imbalance_cost);
    f(m.cost.mobility_deficit);
    f(m.cost.total_system_cost);
    f(m.cost.total_ev_perspective_cost);
    f(m.imbalance_kwh);
    f(m.deficit_kwh);
    f(m.end_shortfall_kwh);
    f(m.v2g_kwh);
    f(m.lp_objective);
    f(m.delta_system);
    f(m.delta_ev_perspective);
}

inline std::vector<double> values_of(RunMetrics m) {
    std::vector<double> v;
    for_each_value(m, [&](double& x) { v.push_back(x); });
    return v;
}

inline void summarize(ComparisonReport& rep) {
    const std::size_t n = rep.rows.size();
    std::vector<std::vector<double>> cols;
    for (const auto& row : rep.rows) cols.push_back(values_of(row));
    const std::size_t k = values_of({}).size();
    std::vector<double> mean(k, 0.0), sd(k, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
        for (const auto& c : cols) mean[j] += c[j];
        mean[j] /= static_cast<double>(n);
        if (n > 1) {
            for (const auto& c : cols) sd[j] += (c[j] - mean[j]) * (c[j] - mean[j]);
            sd[j] = std::sqrt(sd[j] / static_cast<double>(n - 1));
        }
    }
    std::size_t j = 0;
    rep.mean = {};
    for_each_value(rep.mean, [&](double& x) { x = mean[j++]; });
    j = 0;
    rep.stddev = {};
    for_each_value(rep.stddev, [&](double& x) { x = sd[j++]; });
}

[[noreturn]] inline void rethrow_for_seed(std::uint64_t seed, const std::exception_ptr& error) {
    try {
        std::rethrow_exception(error);
    } catch (const InfeasibleMobility& e) {
        throw ExperimentError(seed, e.what(), true);
    } catch (const InfeasibleSession& e) {
        throw ExperimentError(seed, e.what(), true);
    } catch (const std::exception& e) {
        throw ExperimentError(seed, e.what(), false);
    }
}

}  // namespace detail

/// Runs `config.num_seeds` seeds (base_seed, base_seed + 1, ...). Seeds are
/// independent, so the report does not depend on `threads`.
inline ComparisonReport run_experiment(const Scenario& s, const ExperimentConfig& config) {
    if (config.num_seeds < 1) throw std::invalid_argument("num_seeds must be at least 1");
    ComparisonReport rep;
    rep.config = config;

    ExperimentConfig base = config;
    base.model = Model::Evba;
    base.noise = false;
    try {
        rep.baseline = metrics_of(run_once(s, base, config.base_seed), config.base_seed);
    } catch (...) {
        detail::rethrow_for_seed(config.base_seed, std::current_exception());
    }

    const auto n = static_cast<std::size_t>(config.num_seeds);
    rep.rows.resize(n);
    std::vector<std::exception_ptr> errors(n);
    auto work = [&](std::size_t i) {
        const std::uint64_t seed = config.base_seed + i;
        try {
            rep.rows[i] = metrics_of(run_once(s, config, seed), seed);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    unsigned threads = config.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : config.threads;
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) work(i);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < threads; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < n; i += threads) work(i);
            });
    }
    for (std::size_t i = 0; i < n; ++i)
        if (errors[i]) detail::rethrow_for_seed(config.base_seed + i, errors[i]);
    for (auto& row : rep.rows) {
        row.delta_system = row.cost.total_system_cost - rep.baseline.cost.total_system_cost;
        row.delta_ev_perspective = row.cost.total_ev_perspective_cost - rep.baseline.cost.total_ev_perspective_cost;
    }
    detail::summarize(rep);
    return rep;
}

/// Degradation fee per discharged kWh above which V2G discharge can never
/// pay off for this EV: best net sale price minus the cheapest cost of
/// replacing the discharged energy. EVs that may end the day below their
/// initial SOE need no replacement, so only the sale price counts.
/// Sufficient, not tight: when the cheapest hours already carry driving
/// energy the real break-even is lower.
inline double degradation_threshold(const Scenario& s, std::size_t ev_index, const CostOptions& options = {}) {
    const Ev& ev = s.evs[ev_index];
    const Itinerary& it = s.itinerary_of(ev.id);
    double best_sale = -std::numeric_limits<double>::infinity();
    double cheapest_refill = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < it.states.size(); ++t) {
        const double price = s.price_curve.prices[t];
        if (const auto* p = std::get_if<Parked>(&it.states[t])) {
            const auto& cs = s.station(p->cs_id);
            best_sale = std::max(best_sale, price - options.grid_on_discharge(cs) - options.utilization(cs));
            cheapest_refill = std::min(cheapest_refill, charge_rate(price, cs, options) / (ev.eta_sch * ev.eta_dch));
        } else if (const auto* f = std::get_if<FastCharge>(&it.states[t])) {
            const auto& cs = s.station(f->cs_id);
            cheapest_refill = std::min(cheapest_refill, charge_rate(price, cs, options) / (ev.eta_fch * ev.eta_dch));
        }
    }
    if (!std::isfinite(best_sale)) return 0.0;
    if (ev.soe_init > ev.soe_end_min || !std::isfinite(cheapest_refill)) return std::max(0.0, best_sale);
    return std::max(0.0, best_sale - cheapest_refill);
}

inline double degradation_threshold(const Scenario& s, const CostOptions& options = {}) {
    double th = 0.0;
    for (std::size_t v = 0; v < s.evs.size(); ++v) th = std::max(th, degradation_threshold(s, v, options));
    return th;
}

struct IssueVariant {
    ComparisonReport report;
    std::string scenario_note;  // non-empty when the variant alters the scenario
};

struct IssueReport {
    int issue = 0;
    std::string title;
    std::vector<IssueVariant> variants;
};

inline const std::vector<int>& known_issues() {
    static const std::vector<int> ids{1, 2, 3, 4};
    return ids;
}

/// One study per issue. `seeds` only matters for the noisy forecast runs.
inline IssueReport run_issue(const Scenario& s, int issue, int seeds, std::uint64_t base_seed, unsigned threads = 1) {
    auto cfg = [&](std::string label, Model m) {
        ExperimentConfig c;
        c.label = std::move(label);
        c.model = m;
        c.base_seed = base_seed;
        c.threads = threads;
        return c;
    };
    IssueReport rep;
    rep.issue = issue;
    switch (issue) {
        case 1: {
            rep.title = "forecast dependence";
            auto perfect = cfg("evca-naive-perfect", Model::Evca);
            auto noisy = cfg("evca-naive-noisy", Model::Evca);
            noisy.noise = true;
            noisy.num_seeds = seeds;
            rep.variants.push_back({run_experiment(s, perfect), {}});
            rep.variants.push_back({run_experiment(s, noisy), {}});
            break;
        }
        case 2: {
            rep.title = "flexibility transfer";
            auto naive = cfg("evca-naive", Model::Evca);
            auto oracle = cfg("evca-oracle", Model::Evca);
            oracle.boundary = BoundaryPolicy::Oracle;
            rep.variants.push_back({run_experiment(s, naive), {}});
            rep.variants.push_back({run_experiment(s, oracle), {}});
            break;
        }
        case 3: {
            rep.title = "charger power limits";
            // Oracle boundaries keep the flexibility-transfer loss out of this study.
            auto unknown = cfg("evca-obc-unknown", Model::Evca);
            unknown.boundary = BoundaryPolicy::Oracle;
            unknown.obc_known = false;
            auto known = cfg("evca-obc-known", Model::Evca);
            known.boundary = BoundaryPolicy::Oracle;
            rep.variants.push_back({run_experiment(s, unknown), {}});
            rep.variants.push_back({run_experiment(s, known), {}});
            break;
        }
        case 4: {
            rep.title = "cost components";
            for (Model m : {Model::Evba, Model::Evca}) {
                auto off = cfg(std::string(to_string(m)) + "-fees-off", m);
                off.costs = CostOptions::none();
                auto on = cfg(std::string(to_string(m)) + "-fees-on", m);
                rep.variants.push_back({run_experiment(s, off), {}});
                rep.variants.push_back({run_experiment(s, on), {}});
            }
            Scenario worn = s;
            const double fee = degradation_threshold(s) + 0.01;
            for (auto& ev : worn.evs) ev.degradation_fee = fee;
            rep.variants.push_back({run_experiment(worn, cfg("evba-degradation-above-threshold", Model::Evba)),
                                    "degradation_fee=" + std::to_string(fee)});
            break;
        }
        default: throw std::invalid_argument("unknown issue id " + std::to_string(issue));
    }
    return rep;
}

inline std::vector<IssueReport> issue_suite(const Scenario& s, int seeds = 100, std::uint64_t base_seed = 0,
                                            unsigned threads = 1) {
    std::vector<IssueReport> out;
    for (int k : known_issues()) out.push_back(run_issue(s, k, seeds, base_seed, threads));
    return out;
}

}  // namespace evsched

#pragma once

// Scenario data model: EVs, charging stations, itineraries, prices and the
// forecast error model, plus validation and JSON (de)serialization.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

namespace evsched {

using Json = nlohmann::json;

struct TimeGrid {
    int horizon_steps = 24;
    double step_hours = 1.0;

    bool operator==(const TimeGrid&) const = default;
};

struct Ev {
    std::string id;
    double capacity = 40.0;     // kWh
    double soe_init = 20.0;     // kWh
    double soe_min = 4.0;       // kWh
    double soe_max = 40.0;      // kWh
    double soe_end_min = 20.0;  // kWh, required at the end of the horizon
    double obc_limit = 0.0;     // kW
    double eta_sch = 0.95;
    double eta_dch = 0.95;
    double eta_run = 1.0;
    double eta_fch = 0.95;
    double degradation_fee = 0.03;  // per kWh discharged to the grid

    bool operator==(const Ev&) const = default;
};

struct ChargingStation {
    std::string id;
    double cp_limit = 0.0;  // kW per charging point
    int num_cps = 1;
    double utilization_fee = 0.02;  // per kWh exchanged
    double grid_fee = 0.04;         // per kWh drawn from the grid
    bool is_fast = false;

    bool operator==(const ChargingStation&) const = default;
};

struct Parked {
    std::string cs_id;
    bool operator==(const Parked&) const = default;
};

struct Driving {
    double e_run = 0.0;  // kWh consumed during the step
    bool operator==(const Driving&) const = default;
};

struct FastCharge {
    std::string cs_id;
    double e_fch_max = 0.0;  // kWh
    bool operator==(const FastCharge&) const = default;
};

using ItineraryState = std::variant<Parked, Driving, FastCharge>;

struct Itinerary {
    std::string ev_id;
    std::vector<ItineraryState> states;

    bool operator==(const Itinerary&) const = default;
};

struct PriceCurve {
    std::vector<double> prices;  // day-ahead, per kWh
    double penalty_short_factor = 1.5;
    double penalty_long_factor = 0.5;

    bool operator==(const PriceCurve&) const = default;
};

struct TimeShift {
    int shift = 0;
    double prob = 1.0;
    bool operator==(const TimeShift&) const = default;
};

/// Parametric error model applied to session forecasts of the CS-based
/// aggregator. Arrival/departure steps are shifted by a sampled integer,
/// arrival SOE receives truncated Gaussian noise, departure SOE a margin.
struct ForecastErrorModel {
    std::vector<TimeShift> time_shift_probs{{-1, 0.1}, {0, 0.8}, {1, 0.1}};
    double soe_sigma = 2.0;       // kWh
    double dep_soe_margin = 1.0;  // kWh

    static ForecastErrorModel symmetric(double p, double soe_sigma, double margin) {
        return {{{-1, p}, {0, 1.0 - 2.0 * p}, {1, p}}, soe_sigma, margin};
    }
    static ForecastErrorModel none() { return symmetric(0.0, 0.0, 0.0); }

    bool operator==(const ForecastErrorModel&) const = default;
};

struct Scenario {
    TimeGrid time_grid;
    std::vector<Ev> evs;
    std::vector<ChargingStation> stations;
    std::vector<Itinerary> itineraries;
    PriceCurve price_curve;
    ForecastErrorModel forecast_error;
    std::uint64_t rng_seed = 42;

    int horizon() const { return time_grid.horizon_steps; }
    double step_hours() const { return time_grid.step_hours; }

    std::size_t station_index(const std::string& id) const {
        for (std::size_t i = 0; i < stations.size(); ++i)
            if (stations[i].id == id) return i;
        throw std::out_of_range("unknown station '" + id + "'");
    }
    std::size_t ev_index(const std::string& id) const {
        for (std::size_t i = 0; i < evs.size(); ++i)
            if (evs[i].id == id) return i;
        throw std::out_of_range("unknown EV '" + id + "'");
    }
    const ChargingStation& station(const std::string& id) const { return stations[station_index(id)]; }
    const Itinerary& itinerary_of(const std::string& ev_id) const {
        for (const auto& it : itineraries)
            if (it.ev_id == ev_id) return it;
        throw std::out_of_range("no itinerary for EV '" + ev_id + "'");
    }

    bool operator==(const Scenario&) const = default;
};

// ---------------------------------------------------------------------------
// Errors

class ScenarioError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a scenario file cannot be parsed; carries line/field context.
class ParseError : public ScenarioError {
public:
    using ScenarioError::ScenarioError;
};

/// Raised when a scenario violates an invariant. `name()` identifies the
/// violated invariant (e.g. "states_length", "cp_capacity_exceeded").
class ValidationError : public ScenarioError {
public:
    ValidationError(std::string name, const std::string& what)
        : ScenarioError(name + ": " + what), name_(std::move(name)) {}
    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

// ---------------------------------------------------------------------------
// Small helpers shared by the optimizers and the settlement.

/// Power limit of an EV plugged into a station: min(OBC_LIM, CP_LIM).
inline double effective_power_limit(const Ev& ev, const ChargingStation& station) {
    return std::min(ev.obc_limit, station.cp_limit);
}

inline const std::string* station_of(const ItineraryState& s) {
    if (auto* p = std::get_if<Parked>(&s)) return &p->cs_id;
    if (auto* f = std::get_if<FastCharge>(&s)) return &f->cs_id;
    return nullptr;
}

inline double run_energy(const ItineraryState& s) {
    if (auto* d = std::get_if<Driving>(&s)) return d->e_run;
    return 0.0;
}

/// Upper bound on energy delivered by a fast-charge step.
inline double fast_charge_bound(const FastCharge& f, const ChargingStation& station, double step_hours) {
    return std::min(f.e_fch_max, station.cp_limit * step_hours);
}

// ---------------------------------------------------------------------------
// Validation

struct ValidationReport {
    std::vector<std::string> warnings;
};

namespace detail {

inline void require(bool ok, const char* name, const std::string& what) {
    if (!ok) throw ValidationError(name, what);
}

inline bool finite(double x) { return std::isfinite(x); }

}  // namespace detail

/// Checks every invariant of the data model. Throws ValidationError naming
/// the first violated invariant; returns non-fatal warnings otherwise.
inline ValidationReport validate(const Scenario& s) {
    using detail::require;
    ValidationReport report;

    require(s.time_grid.horizon_steps >= 1, "horizon_steps", "horizon_steps must be >= 1");
    require(s.time_grid.step_hours > 0 && detail::finite(s.time_grid.step_hours), "step_hours",
            "step_hours must be > 0");
    const auto T = static_cast<std::size_t>(s.time_grid.horizon_steps);

    for (std::size_t i = 0; i < s.evs.size(); ++i) {
        const Ev& ev = s.evs[i];
        const std::string who = "EV '" + ev.id + "'";
        require(!ev.id.empty(), "ev_id", "EV #" + std::to_string(i) + " has an empty id");
        for (std::size_t j = 0; j < i; ++j)
            require(s.evs[j].id != ev.id, "duplicate_id", "duplicate EV id '" + ev.id + "'");
        const bool finite = detail::finite(ev.capacity) && detail::finite(ev.soe_init) &&
                            detail::finite(ev.soe_min) && detail::finite(ev.soe_max) &&
                            detail::finite(ev.soe_end_min) && detail::finite(ev.obc_limit) &&
                            detail::finite(ev.degradation_fee);
        require(finite, "non_finite", who + " has a non-finite field");
        require(0.0 <= ev.soe_min && ev.soe_min <= ev.soe_init && ev.soe_init <= ev.soe_max &&
                    ev.soe_max <= ev.capacity,
                "soe_order", who + " violates 0 <= soe_min <= soe_init <= soe_max <= capacity");
        require(0.0 <= ev.soe_end_min && ev.soe_end_min <= ev.soe_max, "soe_end_min",
                who + " violates 0 <= soe_end_min <= soe_max");
        require(ev.obc_limit > 0.0, "obc_limit", who + " obc_limit must be > 0");
        for (double eta : {ev.eta_sch, ev.eta_dch, ev.eta_run, ev.eta_fch})
            require(eta > 0.0 && eta <= 1.0, "efficiency", who + " efficiencies must lie in (0, 1]");
        require(ev.degradation_fee >= 0.0, "fee_negative", who + " degradation_fee must be >= 0");
    }

    for (std::size_t i = 0; i < s.stations.size(); ++i) {
        const ChargingStation& cs = s.stations[i];
        const std::string who = "station '" + cs.id + "'";
        require(!cs.id.empty(), "station_id", "station #" + std::to_string(i) + " has an empty id");
        for (std::size_t j = 0; j < i; ++j)
            require(s.stations[j].id != cs.id, "duplicate_id", "duplicate station id '" + cs.id + "'");
        require(cs.cp_limit > 0.0 && detail::finite(cs.cp_limit), "cp_limit", who + " cp_limit must be > 0");
        require(cs.num_cps >= 1, "num_cps", who + " num_cps must be >= 1");
        require(cs.utilization_fee >= 0.0 && cs.grid_fee >= 0.0, "fee_negative", who + " fees must be >= 0");
    }

    require(s.itineraries.size() == s.evs.size(), "itinerary_count", "exactly one itinerary per EV required");
    for (const Ev& ev : s.evs) {
        const auto n = std::count_if(s.itineraries.begin(), s.itineraries.end(),
                                     [&](const Itinerary& it) { return it.ev_id == ev.id; });
        require(n == 1, "itinerary_count", "EV '" + ev.id + "' needs exactly one itinerary");
    }

    auto find_station = [&](const std::string& id) -> const ChargingStation* {
        for (const auto& cs : s.stations)
            if (cs.id == id) return &cs;
        return nullptr;
    };

    for (const Itinerary& it : s.itineraries) {
        const std::string who = "itinerary of '" + it.ev_id + "'";
        require(it.states.size() == T, "states_length",
                who + ": states length ≠ horizon (" + std::to_string(it.states.size()) + " vs " +
                    std::to_string(T) + ")");
        for (std::size_t t = 0; t < T; ++t) {
            const auto& st = it.states[t];
            const std::string at = who + " at t=" + std::to_string(t);
            if (auto* d = std::get_if<Driving>(&st)) {
                require(d->e_run >= 0.0 && detail::finite(d->e_run), "e_run_negative", at + ": e_run must be >= 0");
            } else if (auto* p = std::get_if<Parked>(&st)) {
                const auto* cs = find_station(p->cs_id);
                require(cs != nullptr, "unknown_station", at + ": unknown station '" + p->cs_id + "'");
            } else if (auto* f = std::get_if<FastCharge>(&st)) {
                const auto* cs = find_station(f->cs_id);
                require(cs != nullptr, "unknown_station", at + ": unknown station '" + f->cs_id + "'");
                require(f->e_fch_max >= 0.0 && detail::finite(f->e_fch_max), "e_fch_max",
                        at + ": e_fch_max must be >= 0");
            }
        }
    }

    // Charging-point occupancy.
    for (const ChargingStation& cs : s.stations) {
        for (std::size_t t = 0; t < T; ++t) {
            int occupied = 0;
            for (const Itinerary& it : s.itineraries) {
                const std::string* id = station_of(it.states[t]);
                if (id && *id == cs.id) ++occupied;
            }
            require(occupied <= cs.num_cps, "cp_capacity_exceeded",
                    "CP capacity exceeded at station '" + cs.id + "' t=" + std::to_string(t) + " (" +
                        std::to_string(occupied) + " EVs, " + std::to_string(cs.num_cps) + " CPs)");
        }
    }

    const PriceCurve& pc = s.price_curve;
    require(pc.prices.size() == T, "prices_length", "price curve length ≠ horizon");
    require(std::all_of(pc.prices.begin(), pc.prices.end(), detail::finite), "non_finite",
            "price curve contains non-finite values");
    require(pc.penalty_short_factor > 0.0 && pc.penalty_long_factor > 0.0, "penalty_factor",
            "penalty factors must be > 0");

    const ForecastErrorModel& fe = s.forecast_error;
    double total = 0.0;
    for (const auto& ts : fe.time_shift_probs) {
        require(ts.prob >= 0.0 && detail::finite(ts.prob), "forecast_probs", "shift probabilities must be >= 0");
        total += ts.prob;
    }
    require(!fe.time_shift_probs.empty() && std::abs(total - 1.0) <= 1e-9, "forecast_probs",
            "shift probabilities must sum to 1");
    require(fe.soe_sigma >= 0.0 && detail::finite(fe.soe_sigma), "soe_sigma", "soe_sigma must be >= 0");
    require(fe.dep_soe_margin >= 0.0 && detail::finite(fe.dep_soe_margin), "dep_soe_margin",
            "dep_soe_margin must be >= 0");

    // Effective buy price warnings.
    for (const ChargingStation& cs : s.stations) {
        for (std::size_t t = 0; t < T; ++t) {
            if (pc.prices[t] + cs.grid_fee + cs.utilization_fee < 0.0) {
                report.warnings.push_back("negative effective buy price at station '" + cs.id +
                                          "' t=" + std::to_string(t) +
                                          "; simultaneous charge/discharge is no longer dominated");
                break;
            }
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// JSON

inline Json to_json(const Scenario& s) {
    Json j;
    j["time_grid"] = {{"horizon_steps", s.time_grid.horizon_steps}, {"step_hours", s.time_grid.step_hours}};
    j["evs"] = Json::array();
    for (const Ev& ev : s.evs) {
        j["evs"].push_back({{"id", ev.id},
                            {"capacity", ev.capacity},
                            {"soe_init", ev.soe_init},
                            {"soe_min", ev.soe_min},
                            {"soe_max", ev.soe_max},
                            {"soe_end_min", ev.soe_end_min},
                            {"obc_limit", ev.obc_limit},
                            {"eta_sch", ev.eta_sch},
                            {"eta_dch", ev.eta_dch},
                            {"eta_run", ev.eta_run},
                            {"eta_fch", ev.eta_fch},
                            {"degradation_fee", ev.degradation_fee}});
    }
    j["stations"] = Json::array();
    for (const ChargingStation& cs : s.stations) {
        j["stations"].push_back({{"id", cs.id},
                                 {"cp_limit", cs.cp_limit},
                                 {"num_cps", cs.num_cps},
                                 {"utilization_fee", cs.utilization_fee},
                                 {"grid_fee", cs.grid_fee},
                                 {"is_fast", cs.is_fast}});
    }
    j["itineraries"] = Json::array();
    for (const Itinerary& it : s.itineraries) {
        Json states = Json::array();
        for (const auto& st : it.states) {
            if (auto* p = std::get_if<Parked>(&st)) {
                states.push_back({{"parked", p->cs_id}});
            } else if (auto* d = std::get_if<Driving>(&st)) {
                states.push_back({{"driving", {{"e_run", d->e_run}}}});
            } else {
                const auto& f = std::get<FastCharge>(st);
                states.push_back({{"fast_charge", {{"cs", f.cs_id}, {"e_fch_max", f.e_fch_max}}}});
            }
        }
        j["itineraries"].push_back({{"ev_id", it.ev_id}, {"states", std::move(states)}});
    }
    j["prices"] = {{"prices", s.price_curve.prices},
                   {"penalty_short_factor", s.price_curve.penalty_short_factor},
                   {"penalty_long_factor", s.price_curve.penalty_long_factor}};
    Json shifts = Json::array();
    for (const auto& ts : s.forecast_error.time_shift_probs) shifts.push_back({{"shift", ts.shift}, {"prob", ts.prob}});
    j["forecast_error"] = {{"time_shift_probs", std::move(shifts)},
                           {"soe_sigma", s.forecast_error.soe_sigma},
                           {"dep_soe_margin", s.forecast_error.dep_soe_margin}};
    j["rng_seed"] = s.rng_seed;
    return j;
}

namespace detail {

inline const Json& field(const Json& obj, const char* key, const std::string& path) {
    if (!obj.is_object()) throw ParseError(path + ": expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(path + "." + key + ": missing field");
    return *it;
}

inline double number(const Json& obj, const char* key, const std::string& path) {
    const Json& v = field(obj, key, path);
    if (!v.is_number()) throw ParseError(path + "." + key + ": expected a number");
    return v.get<double>();
}

inline double number_or(const Json& obj, const char* key, const std::string& path, double fallback) {
    if (!obj.contains(key)) return fallback;
    return number(obj, key, path);
}

inline std::int64_t integer(const Json& obj, const char* key, const std::string& path) {
    const Json& v = field(obj, key, path);
    if (!v.is_number_integer()) throw ParseError(path + "." + key + ": expected an integer");
    return v.get<std::int64_t>();
}

inline std::string string(const Json& obj, const char* key, const std::string& path) {
    const Json& v = field(obj, key, path);
    if (!v.is_string()) throw ParseError(path + "." + key + ": expected a string");
    return v.get<std::string>();
}

inline const Json& array(const Json& obj, const char* key, const std::string& path) {
    const Json& v = field(obj, key, path);
    if (!v.is_array()) throw ParseError(path + "." + key + ": expected an array");
    return v;
}

inline ItineraryState parse_state(const Json& j, const std::string& path) {
    if (!j.is_object() || j.size() != 1)
        throw ParseError(path + ": expected one of {\"parked\"}, {\"driving\"}, {\"fast_charge\"}");
    if (j.contains("parked")) {
        if (!j["parked"].is_string()) throw ParseError(path + ".parked: expected a station id");
        return Parked{j["parked"].get<std::string>()};
    }
    if (j.contains("driving")) return Driving{number(j["driving"], "e_run", path + ".driving")};
    if (j.contains("fast_charge")) {
        const Json& f = j["fast_charge"];
        return FastCharge{string(f, "cs", path + ".fast_charge"), number(f, "e_fch_max", path + ".fast_charge")};
    }
    throw ParseError(path + ": unknown itinerary state '" + j.begin().key() + "'");
}

}  // namespace detail

/// Builds a Scenario from its JSON form without validating invariants.
inline Scenario from_json(const Json& j) {
    using namespace detail;
    Scenario s;
    const Json& tg = field(j, "time_grid", "$");
    s.time_grid.horizon_steps = static_cast<int>(integer(tg, "horizon_steps", "$.time_grid"));
    s.time_grid.step_hours = number(tg, "step_hours", "$.time_grid");

    const Json& evs = array(j, "evs", "$");
    for (std::size_t i = 0; i < evs.size(); ++i) {
        const std::string p = "$.evs[" + std::to_string(i) + "]";
        const Json& e = evs[i];
        Ev ev;
        ev.id = string(e, "id", p);
        ev.capacity = number(e, "capacity", p);
        ev.soe_init = number(e, "soe_init", p);
        ev.soe_min = number(e, "soe_min", p);
        ev.soe_max = number(e, "soe_max", p);
        ev.soe_end_min = number(e, "soe_end_min", p);
        ev.obc_limit = number(e, "obc_limit", p);
        ev.eta_sch = number(e, "eta_sch", p);
        ev.eta_dch = number(e, "eta_dch", p);
        ev.eta_run = number(e, "eta_run", p);
        ev.eta_fch = number(e, "eta_fch", p);
        ev.degradation_fee = number(e, "degradation_fee", p);
        s.evs.push_back(std::move(ev));
    }

    const Json& css = array(j, "stations", "$");
    for (std::size_t i = 0; i < css.size(); ++i) {
        const std::string p = "$.stations[" + std::to_string(i) + "]";
        const Json& c = css[i];
        ChargingStation cs;
        cs.id = string(c, "id", p);
        cs.cp_limit = number(c, "cp_limit", p);
        cs.num_cps = static_cast<int>(integer(c, "num_cps", p));
        cs.utilization_fee = number(c, "utilization_fee", p);
        cs.grid_fee = number(c, "grid_fee", p);
        const Json& fast = field(c, "is_fast", p);
        if (!fast.is_boolean()) throw ParseError(p + ".is_fast: expected a boolean");
        cs.is_fast = fast.get<bool>();
        s.stations.push_back(std::move(cs));
    }

    const Json& its = array(j, "itineraries", "$");
    for (std::size_t i = 0; i < its.size(); ++i) {
        const std::string p = "$.itineraries[" + std::to_string(i) + "]";
        Itinerary it;
        it.ev_id = string(its[i], "ev_id", p);
        const Json& states = array(its[i], "states", p);
        for (std::size_t t = 0; t < states.size(); ++t)
            it.states.push_back(parse_state(states[t], p + ".states[" + std::to_string(t) + "]"));
        s.itineraries.push_back(std::move(it));
    }

    const Json& pr = field(j, "prices", "$");
    const Json& prices = array(pr, "prices", "$.prices");
    for (std::size_t t = 0; t < prices.size(); ++t) {
        if (!prices[t].is_number())
            throw ParseError("$.prices.prices[" + std::to_string(t) + "]: expected a number");
        s.price_curve.prices.push_back(prices[t].get<double>());
    }
    s.price_curve.penalty_short_factor = number(pr, "penalty_short_factor", "$.prices");
    s.price_curve.penalty_long_factor = number(pr, "penalty_long_factor", "$.prices");

    const Json& fe = field(j, "forecast_error", "$");
    s.forecast_error.time_shift_probs.clear();
    const Json& shifts = array(fe, "time_shift_probs", "$.forecast_error");
    for (std::size_t i = 0; i < shifts.size(); ++i) {
        const std::string p = "$.forecast_error.time_shift_probs[" + std::to_string(i) + "]";
        s.forecast_error.time_shift_probs.push_back(
            {static_cast<int>(integer(shifts[i], "shift", p)), number(shifts[i], "prob", p)});
    }
    s.forecast_error.soe_sigma = number(fe, "soe_sigma", "$.forecast_error");
    s.forecast_error.dep_soe_margin = number(fe, "dep_soe_margin", "$.forecast_error");

    const Json& seed = field(j, "rng_seed", "$");
    if (!seed.is_number_unsigned() && !seed.is_number_integer()) throw ParseError("$.rng_seed: expected an integer");
    s.rng_seed = seed.get<std::uint64_t>();
    return s;
}

/// Parses and validates scenario JSON text. `source` names the input in
/// error messages.
inline Scenario parse_scenario(const std::string& text, const std::string& source = "<string>") {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        // Translate the byte offset into a line number.
        const auto offset = std::min<std::size_t>(e.byte, text.size());
        const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n');
        throw ParseError(source + ":" + std::to_string(line) + ": JSON parse error: " + e.what());
    }
    Scenario s;
    try {
        s = from_json(j);
    } catch (const ParseError& e) {
        throw ParseError(source + ": " + e.what());
    } catch (const Json::exception& e) {
        throw ParseError(source + ": " + e.what());
    }
    validate(s);
    return s;
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path + ": cannot open scenario file");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str(), path);
}

/// Canonical serialization: object keys sorted, shortest round-trip numbers.
inline std::string canonical_json(const Scenario& s) { return to_json(s).dump(); }

/// 64-bit FNV-1a over the canonical JSON, rendered as 16 hex digits.
inline std::string scenario_hash(const Scenario& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical_json(s)) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = digits[h & 0xF];
    return out;
}

}  // namespace evsched

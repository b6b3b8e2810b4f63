#pragma once

// File emission: schedule/summary/issue CSVs, run manifests and SVG profile
// charts. Builders return text; nothing here touches the filesystem except
// write_files.

#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include "experiments.hpp"
#include "scenario.hpp"

namespace evsched {

#ifndef EVSCHED_VERSION
#define EVSCHED_VERSION "0.0.0"
#endif

inline constexpr const char* kToolVersion = EVSCHED_VERSION;

/// Locale-independent fixed-point number; negative zero prints as zero.
inline std::string fmt(double x, int decimals = 9) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::fixed, decimals);
    std::string s(buf, r.ptr);
    if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
    return s;
}

// ---------------------------------------------------------------------------
// Run outputs

inline const std::vector<std::string>& schedule_columns() {
    static const std::vector<std::string> cols{"entity_id",  "t",      "e_sch_kwh",    "e_dch_kwh",
                                               "e_fch_kwh",  "soe_kwh", "delivered_kwh", "imbalance_kwh"};
    return cols;
}

inline std::string join(const std::vector<std::string>& cells, char sep = ',') {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += sep;
        out += cells[i];
    }
    return out;
}

/// Scheduled energies per EV and step with the simulated true SOE.
inline std::string schedule_csv(const Scenario& s, const DeliveryResult& d) {
    std::string out = join(schedule_columns()) + "\n";
    for (std::size_t v = 0; v < d.evs.size(); ++v) {
        for (std::size_t t = 0; t < d.evs[v].size(); ++t) {
            const auto& r = d.evs[v][t];
            out += join({s.evs[v].id, std::to_string(t), fmt(r.scheduled_sch), fmt(r.scheduled_dch),
                         fmt(r.scheduled_fch), fmt(r.soe), fmt(r.delivered()), fmt(r.imbalance())}) +
                   "\n";
        }
    }
    return out;
}

inline std::vector<std::pair<std::string, double>> cost_fields(const CostBreakdown& c) {
    return {{"energy_cost", c.energy_cost},
            {"grid_fees", c.grid_fees},
            {"utilization_fees", c.utilization_fees},
            {"degradation_cost", c.degradation_cost},
            {"imbalance_cost", c.imbalance_cost},
            {"mobility_deficit", c.mobility_deficit},
            {"total_system_cost", c.total_system_cost},
            {"total_ev_perspective_cost", c.total_ev_perspective_cost}};
}

inline std::string summary_csv(const CostBreakdown& c) {
    std::string out = "field,value\n";
    for (const auto& [name, value] : cost_fields(c)) out += name + "," + fmt(value) + "\n";
    return out;
}

/// UTC time, or SOURCE_DATE_EPOCH when set so manifests can be reproduced.
inline std::string utc_timestamp() {
    std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) now = static_cast<std::time_t>(std::atoll(epoch));
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline Json costs_json(const CostOptions& c) {
    return {{"grid_fee", c.grid_fee},
            {"utilization_fee", c.utilization_fee},
            {"degradation_fee", c.degradation_fee},
            {"discharge_grid_fee", c.discharge_grid_fee}};
}

inline Json config_json(const ExperimentConfig& c, std::uint64_t seed) {
    return {{"model", to_string(c.model)},
            {"boundary", to_string(c.boundary)},
            {"obc_known", c.obc_known},
            {"noise", c.noise},
            {"seed", seed},
            {"costs", costs_json(c.costs)}};
}

/// Run manifest: the command line, the full scenario and the configuration.
inline std::string manifest_json(const std::vector<std::string>& command_line, const std::string& scenario_source,
                                 const Scenario& s, const Json& config) {
    Json j;
    j["tool"] = "evsched";
    j["version"] = kToolVersion;
    j["command_line"] = command_line;
    j["scenario_source"] = scenario_source;
    j["scenario_hash"] = scenario_hash(s);
    j["scenario"] = to_json(s);
    j["config"] = config;
    j["timestamp"] = utc_timestamp();
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Comparison outputs

inline std::vector<std::string> metric_columns() {
    std::vector<std::string> cols;
    for (const auto& [name, value] : cost_fields({})) cols.push_back(name);
    for (const char* c : {"imbalance_kwh", "deficit_kwh", "end_shortfall_kwh", "v2g_kwh", "lp_objective", "delta_system",
                          "delta_ev_perspective", "dropped_sessions", "relaxed_sessions"})
        cols.emplace_back(c);
    return cols;
}

inline std::vector<std::string> metric_cells(const RunMetrics& m) {
    std::vector<std::string> cells;
    for (const auto& [name, value] : cost_fields(m.cost)) cells.push_back(fmt(value));
    for (double x : {m.imbalance_kwh, m.deficit_kwh, m.end_shortfall_kwh, m.v2g_kwh, m.lp_objective, m.delta_system,
                     m.delta_ev_perspective})
        cells.push_back(fmt(x));
    cells.push_back(std::to_string(m.dropped_sessions));
    cells.push_back(std::to_string(m.relaxed_sessions));
    return cells;
}

/// One row per seed ("run"), then "mean" and "std", per variant; a
/// "baseline" row carries the EV-based reference of each variant.
inline std::string issue_csv(const IssueReport& rep) {
    std::vector<std::string> head{"variant", "row", "seed"};
    for (auto& c : metric_columns()) head.push_back(c);
    head.push_back("note");
    std::string out = join(head) + "\n";
    for (const auto& var : rep.variants) {
        const auto& r = var.report;
        auto line = [&](const char* kind, const std::string& seed, const RunMetrics& m, bool counts) {
            std::vector<std::string> cells{r.config.label, kind, seed};
            for (auto& c : metric_cells(m)) cells.push_back(c);
            if (!counts) cells[cells.size() - 1] = cells[cells.size() - 2] = "";
            cells.push_back(var.scenario_note);
            out += join(cells) + "\n";
        };
        for (const auto& row : r.rows) line("run", std::to_string(row.seed), row, true);
        line("mean", "", r.mean, false);
        line("std", "", r.stddev, false);
        line("baseline", std::to_string(r.baseline.seed), r.baseline, true);
    }
    return out;
}

inline std::string comparison_csv(const std::vector<IssueReport>& reports) {
    std::string out =
        "issue,variant,model,boundary,obc_known,noise,fees,seeds,total_system_cost_mean,baseline_total_system_cost,"
        "delta_system_mean,delta_system_std,delta_ev_perspective_mean,imbalance_kwh_mean,deficit_kwh_mean,"
        "end_shortfall_kwh_mean,v2g_kwh_mean\n";
    for (const auto& rep : reports) {
        for (const auto& var : rep.variants) {
            const auto& r = var.report;
            const auto& c = r.config.costs;
            const bool fees = c.grid_fee || c.utilization_fee || c.degradation_fee;
            out += join({std::to_string(rep.issue), r.config.label, to_string(r.config.model),
                         r.config.model == Model::Evca ? to_string(r.config.boundary) : "",
                         r.config.obc_known ? "true" : "false", r.config.noise ? "on" : "off", fees ? "on" : "off",
                         std::to_string(r.rows.size()), fmt(r.mean.cost.total_system_cost),
                         fmt(r.baseline.cost.total_system_cost), fmt(r.mean.delta_system),
                         fmt(r.stddev.delta_system), fmt(r.mean.delta_ev_perspective), fmt(r.mean.imbalance_kwh),
                         fmt(r.mean.deficit_kwh), fmt(r.mean.end_shortfall_kwh), fmt(r.mean.v2g_kwh)}) +
                   "\n";
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Charts

/// One schedule.csv row as read back for charting.
struct ScheduleRow {
    std::string entity_id;
    int t = 0;
    double e_sch = 0.0, e_dch = 0.0, e_fch = 0.0, soe = 0.0;
};

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) out.push_back(std::move(cur)), cur.clear();
        else if (c != '\r') cur += c;
    }
    out.push_back(std::move(cur));
    return out;
}

inline double parse_number(const std::string& text, const std::string& where) {
    double x = 0.0;
    const auto r = std::from_chars(text.data(), text.data() + text.size(), x);
    if (r.ec != std::errc{} || r.ptr != text.data() + text.size())
        throw ParseError(where + ": not a number: '" + text + "'");
    return x;
}

inline std::vector<ScheduleRow> parse_schedule_csv(const std::string& text, const std::string& source) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || split(line) != schedule_columns())
        throw ParseError(source + ":1: unexpected header");
    std::vector<ScheduleRow> rows;
    int n = 1;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        const auto cells = split(line);
        const std::string where = source + ":" + std::to_string(n);
        if (cells.size() != schedule_columns().size()) throw ParseError(where + ": wrong number of columns");
        ScheduleRow r;
        r.entity_id = cells[0];
        r.t = static_cast<int>(parse_number(cells[1], where));
        r.e_sch = parse_number(cells[2], where);
        r.e_dch = parse_number(cells[3], where);
        r.e_fch = parse_number(cells[4], where);
        r.soe = parse_number(cells[5], where);
        rows.push_back(r);
    }
    return rows;
}

enum class ChartView { Ev, Cs, Aggregate };
enum class ChartGroup { Ev, Cs };

/// Per-step power series regrouped from schedule rows. Totals are summed in
/// file (EV) order whatever the grouping, so outlines never depend on it.
struct ChartData {
    struct Series {
        std::string id;
        double limit_kw = 0.0;
        std::vector<double> charge_kw, discharge_kw, soe_kwh;
    };
    std::vector<Series> series;
    std::vector<double> total_charge_kw, total_discharge_kw;
    int horizon = 0;

    std::vector<double> outline_kw() const {
        std::vector<double> n(total_charge_kw.size());
        for (std::size_t t = 0; t < n.size(); ++t) n[t] = total_charge_kw[t] - total_discharge_kw[t];
        return n;
    }
};

inline ChartData chart_data(const Scenario& s, const std::vector<ScheduleRow>& rows, ChartGroup group) {
    const int T = s.horizon();
    const double dt = s.step_hours();
    ChartData d;
    d.horizon = T;
    d.total_charge_kw.assign(static_cast<std::size_t>(T), 0.0);
    d.total_discharge_kw.assign(static_cast<std::size_t>(T), 0.0);
    auto blank = [&](std::string id, double limit) {
        return ChartData::Series{std::move(id), limit, std::vector<double>(static_cast<std::size_t>(T), 0.0),
                                 std::vector<double>(static_cast<std::size_t>(T), 0.0),
                                 std::vector<double>(static_cast<std::size_t>(T), 0.0)};
    };
    if (group == ChartGroup::Ev)
        for (const auto& ev : s.evs) d.series.push_back(blank(ev.id, ev.obc_limit));
    else
        for (const auto& cs : s.stations) d.series.push_back(blank(cs.id, cs.num_cps * cs.cp_limit));

    for (const auto& r : rows) {
        if (r.t < 0 || r.t >= T) throw ParseError("schedule step " + std::to_string(r.t) + " outside the horizon");
        const auto t = static_cast<std::size_t>(r.t);
        const double in = (r.e_sch + r.e_fch) / dt, out = r.e_dch / dt;
        d.total_charge_kw[t] += in;
        d.total_discharge_kw[t] += out;
        const std::size_t v = s.ev_index(r.entity_id);
        std::size_t k = v;
        if (group == ChartGroup::Cs) {
            const std::string* id = station_of(s.itinerary_of(r.entity_id).states[t]);
            if (!id) continue;
            k = s.station_index(*id);
        } else {
            d.series[k].soe_kwh[t] = r.soe;
        }
        d.series[k].charge_kw[t] += in;
        d.series[k].discharge_kw[t] += out;
    }
    return d;
}

namespace detail {

struct Frame {
    double x0, y0, w, h;  // plot area
    double vmax;          // symmetric kW range
    int T;
    double x(double t) const { return x0 + w * t / T; }
    double y(double kw) const { return y0 + h / 2 - (h / 2) * kw / vmax; }
};

inline std::string n3(double x) { return fmt(x, 3); }

inline void axes(std::string& o, const Frame& f, const std::string& title) {
    o += "  <text class=\"title\" x=\"" + n3(f.x0) + "\" y=\"" + n3(f.y0 - 6) + "\">" + title + "</text>\n";
    o += "  <rect class=\"frame\" x=\"" + n3(f.x0) + "\" y=\"" + n3(f.y0) + "\" width=\"" + n3(f.w) +
         "\" height=\"" + n3(f.h) + "\" fill=\"none\" stroke=\"#999\"/>\n";
    o += "  <line class=\"zero\" x1=\"" + n3(f.x0) + "\" y1=\"" + n3(f.y(0)) + "\" x2=\"" + n3(f.x0 + f.w) +
         "\" y2=\"" + n3(f.y(0)) + "\" stroke=\"#444\"/>\n";
    for (int t = 0; t <= f.T; t += std::max(1, f.T / 8))
        o += "  <text class=\"tick\" x=\"" + n3(f.x(t)) + "\" y=\"" + n3(f.y0 + f.h + 12) + "\">" +
             std::to_string(t) + "</text>\n";
}

inline void limit_lines(std::string& o, const Frame& f, double kw) {
    for (double v : {kw, -kw})
        o += "  <line class=\"limit\" data-kw=\"" + n3(kw) + "\" x1=\"" + n3(f.x0) + "\" y1=\"" + n3(f.y(v)) +
             "\" x2=\"" + n3(f.x0 + f.w) + "\" y2=\"" + n3(f.y(v)) + "\" stroke=\"#c00\" stroke-dasharray=\"4 3\"/>\n";
}

inline void bar(std::string& o, const Frame& f, int t, double from, double to, const std::string& cls,
                const std::string& id, const char* color) {
    const double top = f.y(std::max(from, to)), bottom = f.y(std::min(from, to));
    o += "  <rect class=\"" + cls + "\" data-id=\"" + id + "\" data-t=\"" + std::to_string(t) + "\" x=\"" +
         n3(f.x(t) + 1) + "\" y=\"" + n3(top) + "\" width=\"" + n3(f.w / f.T - 2) + "\" height=\"" +
         n3(bottom - top) + "\" fill=\"" + color + "\"/>\n";
}

inline std::string polyline(const Frame& f, const std::vector<double>& v, const std::string& cls, double scale) {
    std::string pts;
    for (std::size_t t = 0; t < v.size(); ++t) {
        if (t) pts += ' ';
        pts += n3(f.x(static_cast<double>(t) + 0.5)) + "," + n3(f.y(v[t] * scale));
    }
    return "  <polyline class=\"" + cls + "\" points=\"" + pts + "\" fill=\"none\" stroke=\"#000\"/>\n";
}

inline const char* palette(std::size_t i) {
    static const char* colors[] = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948"};
    return colors[i % 6];
}

inline double peak(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (double x : a) m = std::max(m, std::abs(x));
    for (double x : b) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace detail

/// Static SVG mirroring the daily-profile figure layout. `ev`: one panel per
/// EV with the OBC limit and SOE overlay; `cs`: one panel per station with
/// stacked EV contributions and the station limit; `aggregate`: stacked
/// contributions of the chosen grouping plus the fleet outline.
inline std::string chart_svg(const Scenario& s, const std::vector<ScheduleRow>& rows, ChartView view,
                             ChartGroup group = ChartGroup::Ev) {
    using detail::Frame;
    const int T = s.horizon();
    const double width = 720, panel_h = 200, gap = 40, left = 50;
    std::string body;
    int panels = 0;

    auto frame_for = [&](int i, double vmax) {
        return Frame{left, gap + i * (panel_h + gap), width - left - 20, panel_h, std::max(vmax, 1.0) * 1.1, T};
    };

    if (view == ChartView::Ev) {
        const auto d = chart_data(s, rows, ChartGroup::Ev);
        for (std::size_t i = 0; i < d.series.size(); ++i) {
            const auto& ser = d.series[i];
            const Frame f = frame_for(static_cast<int>(i), std::max(ser.limit_kw, detail::peak(ser.charge_kw, ser.discharge_kw)));
            body += " <g class=\"panel\" data-id=\"" + ser.id + "\">\n";
            detail::axes(body, f, ser.id + " (OBC " + detail::n3(ser.limit_kw) + " kW)");
            for (int t = 0; t < T; ++t) {
                const auto ut = static_cast<std::size_t>(t);
                if (ser.charge_kw[ut] > 0) detail::bar(body, f, t, 0, ser.charge_kw[ut], "charge", ser.id, "#4e79a7");
                if (ser.discharge_kw[ut] > 0)
                    detail::bar(body, f, t, 0, -ser.discharge_kw[ut], "discharge", ser.id, "#e15759");
            }
            detail::limit_lines(body, f, ser.limit_kw);
            // SOE drawn on the upper half, scaled to the EV's capacity.
            const double cap = s.evs[s.ev_index(ser.id)].capacity;
            body += detail::polyline(f, ser.soe_kwh, "soe", cap > 0 ? f.vmax / cap : 0.0);
            body += " </g>\n";
            ++panels;
        }
    } else if (view == ChartView::Cs) {
        const auto by_ev = chart_data(s, rows, ChartGroup::Ev);
        for (std::size_t k = 0; k < s.stations.size(); ++k) {
            const auto& cs = s.stations[k];
            const double limit = cs.num_cps * cs.cp_limit;
            // Per-EV contributions while parked here, stacked in EV order.
            std::vector<std::vector<double>> in(by_ev.series.size()), out(by_ev.series.size());
            std::vector<double> up(static_cast<std::size_t>(T), 0.0), down(static_cast<std::size_t>(T), 0.0);
            for (std::size_t v = 0; v < by_ev.series.size(); ++v) {
                in[v].assign(static_cast<std::size_t>(T), 0.0);
                out[v].assign(static_cast<std::size_t>(T), 0.0);
                const auto& it = s.itinerary_of(by_ev.series[v].id);
                for (std::size_t t = 0; t < static_cast<std::size_t>(T); ++t) {
                    const std::string* id = station_of(it.states[t]);
                    if (!id || *id != cs.id) continue;
                    in[v][t] = by_ev.series[v].charge_kw[t];
                    out[v][t] = by_ev.series[v].discharge_kw[t];
                    up[t] += in[v][t];
                    down[t] += out[v][t];
                }
            }
            const Frame f = frame_for(static_cast<int>(k), std::max(limit, detail::peak(up, down)));
            body += " <g class=\"panel\" data-id=\"" + cs.id + "\">\n";
            detail::axes(body, f, cs.id + " (" + std::to_string(cs.num_cps) + " x " + detail::n3(cs.cp_limit) + " kW)");
            for (int t = 0; t < T; ++t) {
                const auto ut = static_cast<std::size_t>(t);
                double a = 0.0, b = 0.0;
                for (std::size_t v = 0; v < in.size(); ++v) {
                    if (in[v][ut] > 0) detail::bar(body, f, t, a, a + in[v][ut], "charge", by_ev.series[v].id, detail::palette(v)), a += in[v][ut];
                    if (out[v][ut] > 0) detail::bar(body, f, t, -b, -b - out[v][ut], "discharge", by_ev.series[v].id, detail::palette(v)), b += out[v][ut];
                }
            }
            detail::limit_lines(body, f, limit);
            body += " </g>\n";
            ++panels;
        }
    } else {
        const auto d = chart_data(s, rows, group);
        const Frame f = frame_for(0, detail::peak(d.total_charge_kw, d.total_discharge_kw));
        body += " <g class=\"panel\" data-id=\"fleet\" data-group=\"" + std::string(group == ChartGroup::Ev ? "ev" : "cs") + "\">\n";
        detail::axes(body, f, std::string("fleet by ") + (group == ChartGroup::Ev ? "EV" : "station"));
        for (int t = 0; t < T; ++t) {
            const auto ut = static_cast<std::size_t>(t);
            double a = 0.0, b = 0.0;
            for (std::size_t i = 0; i < d.series.size(); ++i) {
                const auto& ser = d.series[i];
                if (ser.charge_kw[ut] > 0) detail::bar(body, f, t, a, a + ser.charge_kw[ut], "charge", ser.id, detail::palette(i)), a += ser.charge_kw[ut];
                if (ser.discharge_kw[ut] > 0) detail::bar(body, f, t, -b, -b - ser.discharge_kw[ut], "discharge", ser.id, detail::palette(i)), b += ser.discharge_kw[ut];
            }
        }
        body += detail::polyline(f, d.outline_kw(), "outline", 1.0);
        body += " </g>\n";
        panels = 1;
    }

    const double height = gap + panels * (panel_h + gap);
    std::string o = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::n3(width) + "\" height=\"" + detail::n3(height) +
         "\" viewBox=\"0 0 " + detail::n3(width) + " " + detail::n3(height) + "\" font-family=\"sans-serif\" font-size=\"10\">\n";
    o += body;
    o += "</svg>\n";
    return o;
}

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ParseError(p.string() + ": cannot open file");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

/// Writes (name, content) pairs into `dir`, creating it if needed.
inline void write_files(const std::filesystem::path& dir, const std::vector<std::pair<std::string, std::string>>& files) {
    std::filesystem::create_directories(dir);
    for (const auto& [name, content] : files) {
        std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error((dir / name).string() + ": cannot write");
        out << content;
        if (!out) throw std::runtime_error((dir / name).string() + ": write failed");
    }
}

}  // namespace evsched

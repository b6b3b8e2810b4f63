#pragma once

// Command-line front end: `run`, `compare`, `chart` and `builtin`.
// Exit codes: 0 success, 1 input or validation error, 2 infeasible model.

#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "builtin.hpp"
#include "experiments.hpp"
#include "log.hpp"
#include "lp.hpp"
#include "report.hpp"

namespace evsched::cli {

inline constexpr int kOk = 0;
inline constexpr int kInputError = 1;
inline constexpr int kInfeasible = 2;

/// Bad flags or arguments.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunArgs {
    std::string scenario = "builtin";
    std::string model = "evba";
    std::string boundary = "naive";
    bool obc_known = true;
    bool noise = false;
    std::optional<std::uint64_t> seed;
    CostOptions costs;
    std::string out;
    std::vector<std::string> command_line;
};

struct CompareArgs {
    std::string scenario = "builtin";
    std::string issues = "1,2,3,4";
    int seeds = 100;
    std::optional<std::uint64_t> base_seed;
    unsigned threads = 1;
    std::string out;
};

struct ChartArgs {
    std::string in;
    std::string view = "aggregate";
    std::string group = "ev";
    std::string out;  // defaults to `in`
};

inline Scenario resolve_scenario(const std::string& ref) {
    return ref == "builtin" ? builtin_illustrative() : load_scenario(ref);
}

inline Model parse_model(const std::string& m) {
    if (m == "evba") return Model::Evba;
    if (m == "evca") return Model::Evca;
    if (m == "central") return Model::Central;
    throw UsageError("unknown model '" + m + "'");
}

inline BoundaryPolicy parse_boundary(const std::string& b) {
    if (b == "naive") return BoundaryPolicy::Naive;
    if (b == "oracle") return BoundaryPolicy::Oracle;
    throw UsageError("unknown boundary policy '" + b + "'");
}

inline std::vector<int> parse_issues(const std::string& list) {
    std::vector<int> ids;
    std::set<int> seen;
    for (const auto& item : split(list)) {
        int id = 0;
        const auto r = std::from_chars(item.data(), item.data() + item.size(), id);
        const auto& known = known_issues();
        if (item.empty() || r.ec != std::errc{} || r.ptr != item.data() + item.size() ||
            std::find(known.begin(), known.end(), id) == known.end())
            throw UsageError("unknown issue id '" + item + "'");
        if (seen.insert(id).second) ids.push_back(id);
    }
    return ids;
}

/// Maps an exception to an exit code and prints it.
inline int report_error(const std::exception_ptr& ep, std::ostream& err) {
    try {
        std::rethrow_exception(ep);
    } catch (const InfeasibleMobility& e) {
        err << "infeasible: " << e.what() << "\n";
        return kInfeasible;
    } catch (const InfeasibleSession& e) {
        err << "infeasible: " << e.what() << "\n";
        return kInfeasible;
    } catch (const ExperimentError& e) {
        err << (e.infeasible() ? "infeasible: " : "error: ") << e.what() << "\n";
        return e.infeasible() ? kInfeasible : kInputError;
    } catch (const lp::LpError& e) {
        err << "solver failure: " << e.what() << "\n";
        return kInfeasible;
    } catch (const ValidationError& e) {
        err << "invalid scenario: " << e.what() << "\n";
        return kInputError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kInputError;
    }
}

inline int cmd_run(const RunArgs& a, std::ostream& err = std::cerr) {
    try {
        if (a.out.empty()) throw UsageError("--out is required");
        const Scenario s = resolve_scenario(a.scenario);
        ExperimentConfig cfg;
        cfg.model = parse_model(a.model);
        cfg.boundary = parse_boundary(a.boundary);
        cfg.obc_known = a.obc_known;
        cfg.noise = a.noise;
        cfg.costs = a.costs;
        const std::uint64_t seed = a.seed.value_or(s.rng_seed);

        ScopedWarningHandler to_err([&err](const std::string& m) { err << "warning: " << m << "\n"; });
        const RunOutcome r = run_once(s, cfg, seed);
        std::vector<std::pair<std::string, std::string>> files{
            {"schedule.csv", schedule_csv(s, r.delivery)},
            {"summary.csv", summary_csv(r.cost)},
            {"manifest.json", manifest_json(a.command_line, a.scenario, s, config_json(cfg, seed))}};
        write_files(a.out, files);
        return kOk;
    } catch (...) {
        return report_error(std::current_exception(), err);
    }
}

inline int cmd_compare(const CompareArgs& a, const std::vector<std::string>& command_line = {},
                       std::ostream& err = std::cerr) {
    try {
        if (a.out.empty()) throw UsageError("--out is required");
        if (a.seeds < 1) throw UsageError("--seeds must be at least 1");
        const auto ids = parse_issues(a.issues);
        const Scenario s = resolve_scenario(a.scenario);
        const std::uint64_t base = a.base_seed.value_or(s.rng_seed);

        // Relaxed and dropped sessions are counted in the reports; print only a
        // handful of the underlying warnings.
        constexpr std::size_t kShownWarnings = 5;
        std::size_t warnings = 0;
        std::vector<IssueReport> reports;
        {
            ScopedWarningHandler counted([&](const std::string& m) {
                if (warnings++ < kShownWarnings) err << "warning: " << m << "\n";
            });
            for (int id : ids) reports.push_back(run_issue(s, id, a.seeds, base, a.threads));
        }
        if (warnings > kShownWarnings)
            err << "warning: " << warnings - kShownWarnings << " more session warnings not shown\n";
        std::vector<std::pair<std::string, std::string>> files;
        for (const auto& rep : reports) files.emplace_back("issue" + std::to_string(rep.issue) + ".csv", issue_csv(rep));
        files.emplace_back("comparison.csv", comparison_csv(reports));
        Json cfg{{"issues", ids}, {"seeds", a.seeds}, {"base_seed", base}};
        files.emplace_back("manifest.json", manifest_json(command_line, a.scenario, s, cfg));
        write_files(a.out, files);
        return kOk;
    } catch (...) {
        return report_error(std::current_exception(), err);
    }
}

inline int cmd_chart(const ChartArgs& a, std::ostream& err = std::cerr) {
    try {
        ChartView view;
        if (a.view == "ev") view = ChartView::Ev;
        else if (a.view == "cs") view = ChartView::Cs;
        else if (a.view == "aggregate") view = ChartView::Aggregate;
        else throw UsageError("unknown view '" + a.view + "'");
        ChartGroup group;
        if (a.group == "ev") group = ChartGroup::Ev;
        else if (a.group == "cs") group = ChartGroup::Cs;
        else throw UsageError("unknown group '" + a.group + "'");

        const std::filesystem::path in(a.in);
        const auto schedule = read_file(in / "schedule.csv");
        // The manifest carries the scenario the schedule was computed for.
        const Json manifest = Json::parse(read_file(in / "manifest.json"));
        if (!manifest.contains("scenario")) throw ParseError((in / "manifest.json").string() + ": no scenario");
        Scenario s = from_json(manifest.at("scenario"));
        validate(s);
        const auto rows = parse_schedule_csv(schedule, (in / "schedule.csv").string());
        const auto svg = chart_svg(s, rows, view, group);
        write_files(a.out.empty() ? in : std::filesystem::path(a.out), {{"chart_" + a.view + ".svg", svg}});
        return kOk;
    } catch (...) {
        return report_error(std::current_exception(), err);
    }
}

/// Parses `args` (program name first) and dispatches to a subcommand.
inline int main(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"EV charging schedules: EV-based vs station-based aggregation"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);

    const std::set<std::string> on_off{"on", "off"}, true_false{"true", "false"};

    RunArgs run;
    std::string obc = "true", noise = "off";
    bool no_grid = false, no_util = false, no_deg = false, dch_grid = false;
    std::uint64_t run_seed = 0;
    auto* run_cmd = app.add_subcommand("run", "optimize, deliver and settle one scenario");
    run_cmd->add_option("--scenario", run.scenario, "scenario JSON file or 'builtin'")->capture_default_str();
    run_cmd->add_option("--model", run.model, "evba | evca | central")
        ->check(CLI::IsMember({"evba", "evca", "central"}))
        ->capture_default_str();
    run_cmd->add_option("--boundary", run.boundary, "naive | oracle (evca only)")
        ->check(CLI::IsMember({"naive", "oracle"}))
        ->capture_default_str();
    run_cmd->add_option("--obc-known", obc, "stations know each EV's OBC limit")
        ->check(CLI::IsMember(true_false))
        ->capture_default_str();
    run_cmd->add_option("--noise", noise, "forecast errors on the station sessions")
        ->check(CLI::IsMember(on_off))
        ->capture_default_str();
    auto* seed_opt = run_cmd->add_option("--seed", run_seed, "noise seed (default: scenario rng_seed)");
    run_cmd->add_flag("--no-grid-fee", no_grid, "drop grid fees");
    run_cmd->add_flag("--no-utilization-fee", no_util, "drop utilization fees");
    run_cmd->add_flag("--no-degradation-fee", no_deg, "drop degradation fees");
    run_cmd->add_flag("--discharge-grid-fee", dch_grid, "V2G discharge also pays the grid fee");
    run_cmd->add_option("--out", run.out, "output directory")->required();

    CompareArgs cmp;
    std::uint64_t cmp_seed = 0;
    auto* cmp_cmd = app.add_subcommand("compare", "run the issue studies");
    cmp_cmd->add_option("--scenario", cmp.scenario, "scenario JSON file or 'builtin'")->capture_default_str();
    cmp_cmd->add_option("--issues", cmp.issues, "comma-separated issue ids (1-4)")->capture_default_str();
    cmp_cmd->add_option("--seeds", cmp.seeds, "Monte-Carlo seeds for noisy runs")->capture_default_str();
    auto* base_opt = cmp_cmd->add_option("--base-seed", cmp_seed, "first seed (default: scenario rng_seed)");
    cmp_cmd->add_option("--threads", cmp.threads, "worker threads, 0 = all cores")->capture_default_str();
    cmp_cmd->add_option("--out", cmp.out, "output directory")->required();

    ChartArgs chart;
    auto* chart_cmd = app.add_subcommand("chart", "render SVG profiles of a run directory");
    chart_cmd->add_option("--in", chart.in, "run directory with schedule.csv and manifest.json")->required();
    chart_cmd->add_option("--view", chart.view, "ev | cs | aggregate")
        ->check(CLI::IsMember({"ev", "cs", "aggregate"}))
        ->capture_default_str();
    chart_cmd->add_option("--group", chart.group, "aggregate grouping: ev | cs")
        ->check(CLI::IsMember({"ev", "cs"}))
        ->capture_default_str();
    chart_cmd->add_option("--out", chart.out, "output directory (default: --in)");

    std::string builtin_out;
    auto* builtin_cmd = app.add_subcommand("builtin", "write the builtin scenario as JSON");
    builtin_cmd->add_option("--out", builtin_out, "output file (default: stdout)");

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kInputError;
    }

    if (*run_cmd) {
        run.obc_known = obc == "true";
        run.noise = noise == "on";
        if (*seed_opt) run.seed = run_seed;
        run.costs.grid_fee = !no_grid;
        run.costs.utilization_fee = !no_util;
        run.costs.degradation_fee = !no_deg;
        run.costs.discharge_grid_fee = dch_grid;
        run.command_line = args;
        return cmd_run(run, err);
    }
    if (*cmp_cmd) {
        if (*base_opt) cmp.base_seed = cmp_seed;
        return cmd_compare(cmp, args, err);
    }
    if (*chart_cmd) return cmd_chart(chart, err);
    if (*builtin_cmd) {
        const std::string text = to_json(builtin_illustrative()).dump(2) + "\n";
        if (builtin_out.empty()) {
            out << text;
            return kOk;
        }
        try {
            std::filesystem::path p(builtin_out);
            write_files(p.has_parent_path() ? p.parent_path() : ".", {{p.filename().string(), text}});
        } catch (...) {
            return report_error(std::current_exception(), err);
        }
    }
    return kOk;
}

}  // namespace evsched::cli

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ennopt/benders.hpp"
#include "ennopt/bnb.hpp"
#include "ennopt/common.hpp"
#include "ennopt/formulation.hpp"
#include "ennopt/lagrange.hpp"
#include "ennopt/model.hpp"
#include "ennopt/tighten.hpp"

namespace ennopt {

enum class RunMode { baseline, two_phase };

inline const char* to_string(RunMode m) { return m == RunMode::baseline ? "baseline" : "two_phase"; }

inline RunMode parse_run_mode(const std::string& s)
{
    if (s == "baseline")
        return RunMode::baseline;
    if (s == "two_phase")
        return RunMode::two_phase;
    throw PreconditionError("unknown mode '" + s + "' (expected baseline or two_phase)");
}

struct RunConfig {
    RunMode mode = RunMode::two_phase;
    double phase1_limit = 180.0;
    double total_limit = 3600.0;
    TightenParams tighten;
    Phase2Params phase2;
    std::uint64_t seed = 0;
    int threads = 1;

    void validate() const
    {
        if (!(phase1_limit > 0.0) || !(total_limit > 0.0) || phase1_limit > total_limit)
            throw PreconditionError("RunConfig: need 0 < phase1_limit <= total_limit");
        if (threads < 1)
            throw PreconditionError("RunConfig: threads must be >= 1");
        tighten.validate();
        phase2.validate();
    }
};

struct RunReport {
    std::string instance;
    RunMode mode = RunMode::two_phase;
    int e = 0;
    int L = 0; // hidden layers of the first network
    int n = 0;
    std::uint64_t seed = 0;
    std::string sense = "max";

    double t_preprocess = 0.0;
    double t_phase1 = 0.0;
    double t_phase2 = 0.0;
    double t_total = 0.0;

    bool solved = false;
    std::string status;
    std::vector<double> x;          // scaled units
    std::vector<double> x_unscaled;
    double objective = 0.0;         // scaled, in the model's sense
    double objective_unscaled = 0.0;
    double bound = 0.0;             // scaled, in the model's sense
    double gap = kInf;              // fraction
    double time_gap = kInf;

    long nodes_phase1 = 0;
    long nodes_phase2 = 0;
    long fallbacks = 0;
    long lp_iterations = 0;
    int cuts_generated = 0;
    int cuts_added = 0;
    int critical_neurons = 0;
    std::string timestamp;
};

/// Everything needed to audit a run after the fact.
struct RunArtifacts {
    NeuronBounds bounds;
    std::optional<MilpModel> phase1_model; // internal (maximization) model
    std::vector<BendersCutGenerator::Record> cuts;
};

inline double time_gap(double t, double gap)
{
    if (t < 0.0 || gap < 0.0)
        throw PreconditionError("time_gap: t and gap must be nonnegative");
    return gap == 0.0 ? t : t + 3600.0 * gap;
}

namespace detail {

inline std::string utc_timestamp()
{
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return buf;
}

inline RunReport start_report(const EnsembleModel& model, const RunConfig& cfg, const std::string& instance)
{
    RunReport r;
    r.instance = instance;
    r.mode = cfg.mode;
    r.e = model.size();
    r.L = model.networks.empty() ? 0 : model.networks[0].hidden_layers();
    r.n = model.input_dim;
    r.seed = cfg.seed;
    r.sense = model.sense == ObjectiveSense::maximize ? "max" : "min";
    r.timestamp = utc_timestamp();
    return r;
}

/// Fills the solution fields from an internal (maximization) point and bound.
inline void finish_report(RunReport& r, const EnsembleModel& model, const EnsembleModel& internal,
                          const std::vector<double>& x, double bound, bool solved, const Stopwatch& clock)
{
    const double s = sense_sign(model);
    r.x = x;
    const double v = forward_ensemble(internal, x);
    r.objective = s * v;
    r.objective_unscaled = unscale_objective(model, r.objective);
    r.x_unscaled = model.scaler.unscale_input(x);
    r.solved = solved;
    r.bound = s * (solved ? v : std::max(bound, v));
    r.gap = solved ? 0.0 : compute_gap(std::max(bound, v), v);
    r.status = solved ? "optimal" : "time_limit";
    r.t_total = clock.seconds();
    r.time_gap = time_gap(r.t_total, std::isfinite(r.gap) ? r.gap : 1.0);
}

} // namespace detail

/// Plain big-M over LP bounds, no cuts.
inline RunReport optimize_baseline(const EnsembleModel& model, const RunConfig& cfg, const std::string& instance = "",
                                   RunArtifacts* artifacts = nullptr)
{
    cfg.validate();
    model.validate();
    const Stopwatch clock;
    const Deadline deadline(cfg.total_limit);
    auto report = detail::start_report(model, cfg, instance);
    const auto internal = as_maximization(model);

    const auto bounds = lp_tighten_all(internal, internal.box, cfg.threads);
    report.t_preprocess = clock.seconds();

    const auto m = build_bigm(internal, bounds, internal.box);
    BnbParams bp;
    bp.time_limit = std::max(0.0, deadline.remaining());
    const auto r = solve_milp(m, bp);
    report.t_phase1 = clock.seconds() - report.t_preprocess;
    report.nodes_phase1 = r.stats.nodes_processed;
    report.lp_iterations = r.stats.lp_iterations;

    const auto x = r.incumbent ? m.x_of(r.incumbent->values) : internal.box.center();
    detail::finish_report(report, model, internal, x, r.stats.best_bound, r.stats.status == BnbStatus::optimal,
                          clock);
    if (artifacts) {
        artifacts->bounds = bounds;
        artifacts->phase1_model = m;
        artifacts->cuts.clear();
    }
    return report;
}

/// Pre-processing with targeted bounds, Phase One big-M with lazy Benders cuts,
/// then Phase Two on the remaining budget.
inline RunReport optimize_two_phase(const EnsembleModel& model, const RunConfig& cfg, const std::string& instance = "",
                                    RunArtifacts* artifacts = nullptr)
{
    cfg.validate();
    model.validate();
    const Stopwatch clock;
    const Deadline deadline(cfg.total_limit);
    auto report = detail::start_report(model, cfg, instance);
    const auto internal = as_maximization(model);

    // Step 1: bounds. The survey and MILPs share the Phase One budget.
    auto tp = cfg.tighten;
    tp.threads = cfg.threads;
    tp.survey_time_limit = std::min(tp.survey_time_limit, cfg.phase1_limit / 2);
    tp.time_budget = std::min(tp.time_budget, cfg.phase1_limit / 2);
    const auto staged = targeted_bounds_staged(internal, internal.box, tp);
    const auto& bounds = staged.targeted;
    report.critical_neurons = static_cast<int>(staged.critical.size());
    report.t_preprocess = clock.seconds();

    // Step 2: Phase One. A single network keeps going to the total limit.
    const bool phase_two = internal.size() >= 2;
    const auto m = build_bigm(internal, bounds, internal.box);
    BendersCutGenerator cuts;
    BnbParams bp;
    bp.time_limit = std::max(0.0, phase_two ? std::min(cfg.phase1_limit, deadline.remaining()) : deadline.remaining());
    const auto r1 = solve_milp(m, bp, cuts.callback());
    report.t_phase1 = clock.seconds() - report.t_preprocess;
    report.nodes_phase1 = r1.stats.nodes_processed;
    report.lp_iterations = r1.stats.lp_iterations;
    report.cuts_generated = static_cast<int>(cuts.records().size());
    report.cuts_added = r1.stats.cuts_added;
    if (artifacts) {
        artifacts->bounds = bounds;
        artifacts->phase1_model = m;
        artifacts->cuts = cuts.records();
    }

    std::vector<double> x = r1.incumbent ? m.x_of(r1.incumbent->values) : internal.box.center();
    if (r1.stats.status == BnbStatus::optimal || !phase_two || deadline.expired()) {
        detail::finish_report(report, model, internal, x, r1.stats.best_bound,
                              r1.stats.status == BnbStatus::optimal, clock);
        return report;
    }

    // Step 3: Phase Two, seeded with the Phase One point and its pattern.
    const auto zbar = r1.incumbent ? activation_fix_from(m, r1.incumbent->values)
                                   : activation_fix_at(internal, bounds, x);
    auto p2 = cfg.phase2;
    p2.threads = cfg.threads;
    p2.time_limit = std::max(0.0, deadline.remaining());
    const auto r2 = phase_two_solve(internal, bounds, x, zbar, p2);
    report.t_phase2 = clock.seconds() - report.t_preprocess - report.t_phase1;
    report.nodes_phase2 = r2.nodes;
    report.fallbacks = r2.fallbacks;

    const bool solved = r2.status == BnbStatus::optimal;
    const double bound = std::min(r1.stats.best_bound, r2.best_bound);
    detail::finish_report(report, model, internal, r2.x, bound, solved, clock);
    return report;
}

inline RunReport optimize(const EnsembleModel& model, const RunConfig& cfg, const std::string& instance = "",
                          RunArtifacts* artifacts = nullptr)
{
    return cfg.mode == RunMode::baseline ? optimize_baseline(model, cfg, instance, artifacts)
                                         : optimize_two_phase(model, cfg, instance, artifacts);
}

// Reports

namespace detail {

/// Infinite values are written as null.
inline nlohmann::json num(double v)
{
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

inline double num_from(const nlohmann::json& j, const char* key)
{
    if (!j.contains(key) || j.at(key).is_null())
        return kInf;
    return j.at(key).get<double>();
}

} // namespace detail

inline nlohmann::json report_to_json(const RunReport& r)
{
    using detail::num;
    return {
        {"instance", r.instance},
        {"mode", to_string(r.mode)},
        {"e", r.e},
        {"L", r.L},
        {"n", r.n},
        {"seed", r.seed},
        {"sense", r.sense},
        {"solved", r.solved},
        {"status", r.status},
        {"x", r.x},
        {"x_unscaled", r.x_unscaled},
        {"objective", num(r.objective)},
        {"objective_unscaled", num(r.objective_unscaled)},
        {"bound", num(r.bound)},
        {"gap", num(r.gap)},
        {"nodes", {{"phase1", r.nodes_phase1}, {"phase2", r.nodes_phase2}, {"fallbacks", r.fallbacks}}},
        {"lp_iterations", r.lp_iterations},
        {"cuts", {{"generated", r.cuts_generated}, {"added", r.cuts_added}}},
        {"critical_neurons", r.critical_neurons},
        // wall-clock dependent values live together so runs can be compared without them
        {"timing",
         {{"timestamp", r.timestamp},
          {"preprocess", r.t_preprocess},
          {"phase1", r.t_phase1},
          {"phase2", r.t_phase2},
          {"total", r.t_total},
          {"time_gap", num(r.time_gap)}}},
    };
}

inline RunReport report_from_json(const nlohmann::json& j)
{
    try {
        RunReport r;
        r.instance = j.at("instance").get<std::string>();
        r.mode = parse_run_mode(j.at("mode").get<std::string>());
        r.e = j.at("e").get<int>();
        r.L = j.at("L").get<int>();
        r.n = j.at("n").get<int>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.sense = j.at("sense").get<std::string>();
        const auto& t = j.at("timing");
        r.t_preprocess = t.at("preprocess").get<double>();
        r.t_phase1 = t.at("phase1").get<double>();
        r.t_phase2 = t.at("phase2").get<double>();
        r.t_total = t.at("total").get<double>();
        r.solved = j.at("solved").get<bool>();
        r.status = j.at("status").get<std::string>();
        r.x = j.at("x").get<std::vector<double>>();
        r.x_unscaled = j.at("x_unscaled").get<std::vector<double>>();
        r.objective = detail::num_from(j, "objective");
        r.objective_unscaled = detail::num_from(j, "objective_unscaled");
        r.bound = detail::num_from(j, "bound");
        r.gap = detail::num_from(j, "gap");
        const auto& n = j.at("nodes");
        r.nodes_phase1 = n.at("phase1").get<long>();
        r.nodes_phase2 = n.at("phase2").get<long>();
        r.fallbacks = n.at("fallbacks").get<long>();
        r.lp_iterations = j.at("lp_iterations").get<long>();
        r.cuts_generated = j.at("cuts").at("generated").get<int>();
        r.cuts_added = j.at("cuts").at("added").get<int>();
        r.critical_neurons = j.value("critical_neurons", 0);
        r.time_gap = detail::num_from(t, "time_gap");
        r.timestamp = t.value("timestamp", "");
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("run report: ") + e.what());
    }
}

/// Column order of report_csv_row.
inline std::string report_csv_header()
{
    return "instance,mode,e,L,n,seed,sense,t_preprocess,t_phase1,t_phase2,t_total,solved,objective,"
           "objective_unscaled,bound,gap_pct,time_gap,nodes_phase1,nodes_phase2,cuts_generated,cuts_added";
}

inline std::string report_csv_row(const RunReport& r)
{
    std::ostringstream os;
    os.precision(10);
    os << r.instance << ',' << to_string(r.mode) << ',' << r.e << ',' << r.L << ',' << r.n << ',' << r.seed << ','
       << r.sense << ',' << r.t_preprocess << ',' << r.t_phase1 << ',' << r.t_phase2 << ',' << r.t_total << ','
       << (r.solved ? 1 : 0) << ',' << r.objective << ',' << r.objective_unscaled << ',' << r.bound << ','
       << 100.0 * r.gap << ',' << r.time_gap << ',' << r.nodes_phase1 << ',' << r.nodes_phase2 << ','
       << r.cuts_generated << ',' << r.cuts_added;
    return os.str();
}

} // namespace ennopt

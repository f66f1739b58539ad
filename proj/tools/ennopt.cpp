// ennopt command-line interface: sample, train, optimize, oracle, report.

#include <glob.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ennopt/ennopt.hpp"

namespace {

using namespace ennopt;
using nlohmann::json;

void write_json(const json& j, const std::string& path)
{
    std::ofstream os(path);
    if (!os)
        throw ParseError("cannot write '" + path + "'");
    os << j.dump(2) << '\n';
}

json read_json(const std::string& path)
{
    std::ifstream is(path);
    if (!is)
        throw ParseError("cannot open '" + path + "'");
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

std::vector<int> parse_widths(const std::string& s)
{
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t used = 0;
            const int w = std::stoi(tok, &used);
            if (used != tok.size() || w < 1)
                throw std::invalid_argument(tok);
            out.push_back(w);
        } catch (const std::exception&) {
            throw PreconditionError("--layers: '" + tok + "' is not a positive integer");
        }
    }
    if (out.empty())
        throw PreconditionError("--layers: give at least one width, e.g. 20,20");
    return out;
}

std::vector<std::string> expand_glob(const std::string& pattern)
{
    glob_t g{};
    std::vector<std::string> out;
    if (::glob(pattern.c_str(), 0, nullptr, &g) == 0)
        for (std::size_t k = 0; k < g.gl_pathc; ++k)
            out.emplace_back(g.gl_pathv[k]);
    globfree(&g);
    std::sort(out.begin(), out.end());
    return out;
}

struct SampleArgs {
    std::string fn, method = "lhs", out;
    int n = 0;
};

struct TrainArgs {
    std::string data, out, layers = "20", sense = "max";
    TrainConfig cfg;
};

struct OptimizeArgs {
    std::string model, out, instance, mode = "two_phase";
    RunConfig cfg;
};

struct OracleArgs {
    std::string model, out;
    int grid = 0;
};

struct ReportArgs {
    std::string pattern, out;
};

void run_sample(const SampleArgs& a, std::uint64_t seed)
{
    const auto f = benchmark(a.fn);
    const int n = a.n > 0 ? a.n : 2000 + 1000 * (f.domain.dim() - 2);
    Dataset d;
    if (a.method == "lhs")
        d = sample_lhs(f, n, seed);
    else if (a.method == "mvn")
        d = sample_mvn(f, n, seed);
    else
        throw PreconditionError("--method must be lhs or mvn");
    write_dataset_csv(d, a.out);
}

void run_train(TrainArgs a, std::uint64_t seed, int threads)
{
    a.cfg.layers = parse_widths(a.layers);
    a.cfg.seed = seed;
    a.cfg.threads = threads;
    if (a.sense != "max" && a.sense != "min")
        throw PreconditionError("--sense must be max or min");
    a.cfg.sense = a.sense == "max" ? ObjectiveSense::maximize : ObjectiveSense::minimize;
    const auto data = read_dataset_csv(a.data);
    save_model(train_ensemble(data, a.cfg), a.out);
}

void run_optimize(OptimizeArgs a, std::uint64_t seed, int threads)
{
    a.cfg.mode = parse_run_mode(a.mode);
    a.cfg.seed = seed;
    a.cfg.threads = threads;
    a.cfg.phase1_limit = std::min(a.cfg.phase1_limit, a.cfg.total_limit);
    const auto model = load_model(a.model);
    const std::string instance =
        a.instance.empty() ? std::filesystem::path(a.model).stem().string() : a.instance;
    const auto r = optimize(model, a.cfg, instance);
    write_json(report_to_json(r), a.out);
    std::cout << report_csv_row(r) << '\n';
}

void run_oracle(const OracleArgs& a, std::uint64_t seed, int threads)
{
    const auto model = load_model(a.model);
    const auto r = a.grid > 0 ? grid_search(model, model.box, a.grid)
                              : enumerate_patterns_exact(model, model.box, threads);
    json j{{"method", a.grid > 0 ? "grid" : "patterns"},
           {"seed", seed},
           {"x", r.x},
           {"x_unscaled", model.scaler.unscale_input(r.x)},
           {"value", r.value},
           {"value_unscaled", unscale_objective(model, r.value)},
           {"free_neurons", r.free_neurons},
           {"evaluated", r.patterns},
           {"feasible_patterns", r.feasible_patterns}};
    write_json(j, a.out);
}

/// One row per (instance, mode, e, L) with run count, solved count and mean time, gap and time-gap.
void run_report(const ReportArgs& a)
{
    const auto files = expand_glob(a.pattern);
    if (files.empty())
        throw PreconditionError("--glob '" + a.pattern + "' matched no files");
    struct Group {
        int runs = 0, solved = 0;
        double time = 0, gap = 0, tg = 0;
    };
    std::map<std::tuple<std::string, std::string, int, int>, Group> groups;
    for (const auto& f : files) {
        const auto r = report_from_json(read_json(f));
        auto& g = groups[{r.instance, to_string(r.mode), r.e, r.L}];
        ++g.runs;
        g.solved += r.solved;
        g.time += r.t_total;
        g.gap += std::isfinite(r.gap) ? r.gap : 1.0;
        g.tg += r.time_gap;
    }
    std::ofstream os(a.out);
    if (!os)
        throw ParseError("cannot write '" + a.out + "'");
    os << "instance,mode,e,L,runs,time,solved,gap_pct,time_gap\n";
    for (const auto& [key, g] : groups) {
        const auto& [inst, mode, e, L] = key;
        os << inst << ',' << mode << ',' << e << ',' << L << ',' << g.runs << ',' << g.time / g.runs << ','
           << g.solved << ',' << 100.0 * g.gap / g.runs << ',' << g.tg / g.runs << '\n';
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Optimize over ensembles of ReLU networks"};
    app.require_subcommand(1);
    std::uint64_t seed = 0;
    int threads = 1;
    app.add_option("--seed", seed, "Random seed")->capture_default_str();
    app.add_option("--threads", threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);

    auto with_common = [&](CLI::App* sub) {
        sub->add_option("--seed", seed, "Random seed")->capture_default_str();
        sub->add_option("--threads", threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    };

    SampleArgs sa;
    auto* sample = app.add_subcommand("sample", "Sample a benchmark function into a CSV dataset");
    sample->add_option("--fn", sa.fn, "peaks, beale, perm3 or spring5")->required();
    sample->add_option("--method", sa.method, "lhs or mvn")->capture_default_str();
    sample->add_option("--n", sa.n, "Number of samples (default 2000 + 1000 (n - 2))")->check(CLI::PositiveNumber);
    sample->add_option("--out", sa.out, "Output CSV")->required();
    with_common(sample);

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "Train a bagged ensemble on a CSV dataset");
    train->add_option("--data", ta.data, "Input CSV (last column is the target)")->required();
    train->add_option("--e", ta.cfg.e, "Ensemble size")->capture_default_str()->check(CLI::PositiveNumber);
    train->add_option("--layers", ta.layers, "Hidden widths, e.g. 20,20")->capture_default_str();
    train->add_option("--lr", ta.cfg.learning_rate, "Adam learning rate")->capture_default_str();
    train->add_option("--batch-size", ta.cfg.batch_size, "Mini-batch size")->capture_default_str();
    train->add_option("--epochs", ta.cfg.max_epochs, "Maximum epochs")->capture_default_str();
    train->add_option("--patience", ta.cfg.patience, "Early stopping patience")->capture_default_str();
    train->add_option("--sense", ta.sense, "Objective sense stored in the model: max or min")->capture_default_str();
    train->add_option("--out", ta.out, "Output model JSON")->required();
    with_common(train);

    OptimizeArgs oa;
    auto* opt = app.add_subcommand("optimize", "Optimize a trained ensemble");
    opt->add_option("--model", oa.model, "Model JSON")->required()->check(CLI::ExistingFile);
    opt->add_option("--mode", oa.mode, "two_phase or baseline")->capture_default_str();
    opt->add_option("--time-limit", oa.cfg.total_limit, "Total time limit (s)")->capture_default_str();
    opt->add_option("--phase1-limit", oa.cfg.phase1_limit, "Phase One time limit (s)")->capture_default_str();
    opt->add_option("--K", oa.cfg.tighten.K, "Survey node count")->capture_default_str();
    opt->add_option("--tau", oa.cfg.tighten.tau, "Critical neuron threshold")->capture_default_str();
    opt->add_option("--delta", oa.cfg.phase2.delta, "Small-domain width")->capture_default_str();
    opt->add_option("--epsilon", oa.cfg.phase2.epsilon, "Primal heuristic radius")->capture_default_str();
    opt->add_option("--mu0", oa.cfg.phase2.mu0, "Initial subgradient step")->capture_default_str();
    opt->add_option("--Q", oa.cfg.phase2.Q, "Subgradient iterations at the root")->capture_default_str();
    opt->add_option("--instance", oa.instance, "Instance name for the report (default: model file stem)");
    opt->add_option("--out", oa.out, "Output report JSON")->required();
    with_common(opt);

    OracleArgs ora;
    auto* oracle = app.add_subcommand("oracle", "Exact optimum by activation-pattern enumeration");
    oracle->add_option("--model", ora.model, "Model JSON")->required()->check(CLI::ExistingFile);
    oracle->add_option("--grid", ora.grid, "Use a grid search with this many points per coordinate instead")
        ->check(CLI::PositiveNumber);
    oracle->add_option("--out", ora.out, "Output JSON")->required();
    with_common(oracle);

    ReportArgs ra;
    auto* report = app.add_subcommand("report", "Aggregate run reports into a CSV table");
    report->add_option("--glob", ra.pattern, "Pattern matching report JSON files")->required();
    report->add_option("--out", ra.out, "Output CSV")->required();
    with_common(report);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "ennopt: " << e.what() << '\n';
        return 2;
    }

    try {
        if (*sample)
            run_sample(sa, seed);
        else if (*train)
            run_train(ta, seed, threads);
        else if (*opt)
            run_optimize(oa, seed, threads);
        else if (*oracle)
            run_oracle(ora, seed, threads);
        else if (*report)
            run_report(ra);
    } catch (const std::exception& e) {
        std::cerr << "ennopt: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

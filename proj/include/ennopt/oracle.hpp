#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ennopt/common.hpp"
#include "ennopt/driver.hpp"
#include "ennopt/lp.hpp"
#include "ennopt/model.hpp"
#include "ennopt/tighten.hpp"

namespace ennopt {

struct OracleResult {
    std::vector<double> x;
    double value = 0.0; // scaled, in the model's sense
    int free_neurons = 0;
    std::uint64_t patterns = 0;
    std::uint64_t feasible_patterns = 0;
};

inline constexpr int kOracleMaxFree = 20;

namespace detail {

/// LP over (x, h) for one activation pattern. Active neurons get h >= 0 and pass h
/// on; inactive ones get h <= 0 and pass 0. `active` is indexed like NeuronBounds.
inline lp::LpProblem pattern_lp(const EnsembleModel& m, const InputBox& box,
                                const std::vector<std::vector<std::vector<char>>>& active)
{
    lp::LpProblem p;
    p.sense = lp::Sense::maximize;
    const int n = m.input_dim;
    std::vector<int> xcol(n);
    for (int j = 0; j < n; ++j)
        xcol[j] = p.add_col(box.lo[j], box.hi[j], 0.0);
    const double w = 1.0 / m.size();
    for (int i = 0; i < m.size(); ++i) {
        const auto& net = m.networks[i];
        // prev[c] is the column feeding input c; prev_on[c] is 0 when that input is a dead ReLU
        std::vector<int> prev = xcol;
        std::vector<char> prev_on(n, 1);
        for (int k = 0; k < static_cast<int>(net.layers.size()); ++k) {
            const auto& L = net.layers[k];
            const bool output = net.is_output_layer(k);
            std::vector<int> cur(L.outputs());
            for (int r = 0; r < L.outputs(); ++r) {
                if (output) {
                    for (int c = 0; c < L.inputs(); ++c)
                        if (prev_on[c])
                            p.objective[prev[c]] += w * L.W(r, c);
                    continue;
                }
                const bool on = active[i][k][r] != 0;
                cur[r] = p.add_col(on ? 0.0 : -kInf, on ? kInf : 0.0, 0.0);
                std::vector<int> idx{cur[r]};
                std::vector<double> val{1.0};
                for (int c = 0; c < L.inputs(); ++c)
                    if (prev_on[c] && L.W(r, c) != 0.0) {
                        idx.push_back(prev[c]);
                        val.push_back(-L.W(r, c));
                    }
                p.add_row(idx, val, lp::Relation::eq, L.b[r]);
            }
            if (!output) {
                prev = cur;
                prev_on.assign(L.outputs(), 0);
                for (int r = 0; r < L.outputs(); ++r)
                    prev_on[r] = active[i][k][r];
            }
        }
    }
    return p;
}

} // namespace detail

/// Exact optimum by solving one LP per activation pattern of the free neurons.
/// Neurons fixed by interval bounds on the box keep their forced state.
inline OracleResult enumerate_patterns_exact(const EnsembleModel& model, const InputBox& box, int threads = 1)
{
    model.validate();
    box.validate();
    const auto internal = as_maximization(model);
    const auto bounds = interval_bounds(internal, box);

    std::vector<NeuronId> free;
    std::vector<std::vector<std::vector<char>>> base(internal.size());
    for (int i = 0; i < internal.size(); ++i) {
        const auto& net = internal.networks[i];
        base[i].resize(net.layers.size());
        for (int k = 0; k < net.hidden_layers(); ++k) {
            base[i][k].assign(net.layers[k].outputs(), 0);
            for (int j = 0; j < net.layers[k].outputs(); ++j) {
                const NeuronId id{i, k, j};
                const auto s = bounds.status(id);
                if (s == NeuronStatus::free)
                    free.push_back(id);
                base[i][k][j] = s == NeuronStatus::always_active;
            }
        }
    }
    const int nf = static_cast<int>(free.size());
    if (nf > kOracleMaxFree)
        throw PreconditionError("oracle: " + std::to_string(nf) + " free neurons exceeds the cap of " +
                                std::to_string(kOracleMaxFree));

    // Pattern p sets free[t] active when bit (nf-1-t) is set, so numeric order is
    // lexicographic order over the free neuron list.
    const std::uint64_t total = std::uint64_t{1} << nf;
    struct Best {
        double value = -kInf;
        std::uint64_t pattern = 0;
        std::vector<double> x;
        std::uint64_t feasible = 0;
    };
    threads = std::max(1, threads);
    std::vector<Best> best(threads);
    const std::uint64_t chunk = (total + threads - 1) / threads;
    parallel_for(threads, threads, [&](int t) {
        auto act = base;
        Best& b = best[t];
        const std::uint64_t begin = chunk * t, end = std::min(total, begin + chunk);
        for (std::uint64_t p = begin; p < end; ++p) {
            for (int f = 0; f < nf; ++f)
                act[free[f].net][free[f].layer][free[f].index] = (p >> (nf - 1 - f)) & 1;
            const auto lp = detail::pattern_lp(internal, box, act);
            const auto s = lp::solve_lp(lp);
            if (s.status != lp::LpStatus::optimal)
                continue;
            ++b.feasible;
            std::vector<double> x(s.x.begin(), s.x.begin() + internal.input_dim);
            for (int j = 0; j < internal.input_dim; ++j)
                x[j] = std::clamp(x[j], box.lo[j], box.hi[j]);
            const double v = forward_ensemble(internal, x);
            if (v > b.value) {
                b.value = v;
                b.pattern = p;
                b.x = std::move(x);
            }
        }
    });

    OracleResult r;
    r.free_neurons = nf;
    r.patterns = total;
    double v = -kInf;
    for (const auto& b : best) { // blocks are in pattern order; strict > keeps the smallest pattern on ties
        r.feasible_patterns += b.feasible;
        if (b.value > v) {
            v = b.value;
            r.x = b.x;
        }
    }
    if (r.x.empty())
        throw NumericError("oracle: no feasible activation pattern");
    r.value = sense_sign(model) * v;
    return r;
}

/// Best forward value over a uniform grid with `points_per_dim` points per
/// coordinate (one point means the box center). A lower bound on the optimum.
inline OracleResult grid_search(const EnsembleModel& model, const InputBox& box, int points_per_dim)
{
    if (points_per_dim < 1)
        throw PreconditionError("grid_search: points_per_dim must be >= 1");
    const auto internal = as_maximization(model);
    const int n = box.dim();
    std::vector<int> k(n, 0);
    std::vector<double> x(n);
    OracleResult r;
    double best = -kInf;
    while (true) {
        for (int j = 0; j < n; ++j)
            x[j] = points_per_dim == 1 ? 0.5 * (box.lo[j] + box.hi[j])
                                       : box.lo[j] + (box.hi[j] - box.lo[j]) * k[j] / (points_per_dim - 1);
        ++r.patterns;
        const double v = forward_ensemble(internal, x);
        if (v > best) {
            best = v;
            r.x = x;
        }
        int j = 0;
        while (j < n && ++k[j] == points_per_dim)
            k[j++] = 0;
        if (j == n)
            break;
    }
    r.value = sense_sign(model) * best;
    return r;
}

struct Verdict {
    bool ok = true;
    std::vector<std::string> failures;

    void fail(std::string what)
    {
        ok = false;
        failures.push_back(std::move(what));
    }
};

/// Re-evaluates the reported point. `oracle_value` is compared when given.
inline Verdict verify_solution(const EnsembleModel& model, const RunReport& report, double tol,
                               std::optional<double> oracle_value = std::nullopt)
{
    Verdict v;
    if (static_cast<int>(report.x.size()) != model.input_dim) {
        v.fail("dimension: report has " + std::to_string(report.x.size()) + " coordinates, model expects " +
               std::to_string(model.input_dim));
        return v;
    }
    if (!model.box.contains(report.x)) {
        v.fail("box: reported x lies outside the input box");
        return v;
    }
    const double value = forward_ensemble(model, report.x);
    if (!(std::abs(value - report.objective) <= tol))
        v.fail("objective: forward value " + std::to_string(value) + " differs from reported " +
               std::to_string(report.objective));
    if (!(std::abs(unscale_objective(model, value) - report.objective_unscaled) <=
          tol * std::max(1.0, model.scaler.output_max - model.scaler.output_min)))
        v.fail("unscaled objective: does not match the scaler");
    if (oracle_value && !(std::abs(value - *oracle_value) <= tol))
        v.fail("oracle: forward value " + std::to_string(value) + " differs from oracle " +
               std::to_string(*oracle_value));
    return v;
}

} // namespace ennopt

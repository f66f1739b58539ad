#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <vector>

#include "ennopt/bnb.hpp"
#include "ennopt/common.hpp"
#include "ennopt/formulation.hpp"
#include "ennopt/lp.hpp"
#include "ennopt/model.hpp"

namespace ennopt {

struct TightenParams {
    long K = 1000;
    double tau = 0.01;
    double milp_time_limit = 5.0;
    double survey_time_limit = kInf;
    double time_budget = kInf; // caps the whole MILP tightening stage
    int threads = 1;

    void validate() const
    {
        if (K < 1 || !(tau >= 0.0) || !(milp_time_limit > 0.0))
            throw PreconditionError("TightenParams: need K >= 1, tau >= 0, milp_time_limit > 0");
    }
};

/// Interval propagation layer by layer. Hidden outputs enter the next layer
/// through their ReLU range [max(0, LB), max(0, UB)].
inline NeuronBounds interval_bounds(const EnsembleModel& model, const InputBox& box)
{
    box.validate();
    if (box.dim() != model.input_dim)
        throw ShapeError("interval_bounds: box dimension mismatch");
    auto b = NeuronBounds::shaped_like(model);
    for (int i = 0; i < model.size(); ++i) {
        const auto& net = model.networks[i];
        std::vector<double> lo = box.lo, hi = box.hi;
        for (int k = 0; k < static_cast<int>(net.layers.size()); ++k) {
            const auto& L = net.layers[k];
            std::vector<double> nlo(L.outputs()), nhi(L.outputs());
            for (int j = 0; j < L.outputs(); ++j) {
                double a = L.b[j], c = L.b[j];
                for (int q = 0; q < L.inputs(); ++q) {
                    const double w = L.W(j, q);
                    a += lo[q] * std::max(0.0, w) + hi[q] * std::min(0.0, w);
                    c += hi[q] * std::max(0.0, w) + lo[q] * std::min(0.0, w);
                }
                b.set({i, k, j}, a, c, BoundMethod::interval);
                nlo[j] = std::max(0.0, a);
                nhi[j] = std::max(0.0, c);
            }
            lo = std::move(nlo);
            hi = std::move(nhi);
        }
    }
    return b;
}

namespace detail {

inline double pad(double v) { return 1e-9 * (1.0 + std::abs(v)); }

/// Recomputes interval bounds of layer k from the (possibly tightened) bounds of layer k-1.
inline void interval_layer(const EnsembleModel& model, const InputBox& box, NeuronBounds& b, int i, int k,
                           std::vector<double>& lo, std::vector<double>& hi)
{
    const auto& L = model.networks[i].layers[k];
    std::vector<double> plo, phi;
    if (k == 0) {
        plo = box.lo;
        phi = box.hi;
    } else {
        for (int q = 0; q < L.inputs(); ++q) {
            plo.push_back(std::max(0.0, b.nets[i][k - 1].lo[q]));
            phi.push_back(std::max(0.0, b.nets[i][k - 1].hi[q]));
        }
    }
    lo.assign(L.outputs(), 0.0);
    hi.assign(L.outputs(), 0.0);
    for (int j = 0; j < L.outputs(); ++j) {
        double a = L.b[j], c = L.b[j];
        for (int q = 0; q < L.inputs(); ++q) {
            const double w = L.W(j, q);
            a += plo[q] * std::max(0.0, w) + phi[q] * std::min(0.0, w);
            c += phi[q] * std::max(0.0, w) + plo[q] * std::min(0.0, w);
        }
        lo[j] = a;
        hi[j] = c;
    }
}

} // namespace detail

/// LP-based progressive tightening, intersected with interval bounds.
inline NeuronBounds lp_tighten_all(const EnsembleModel& model, const InputBox& box, int threads = 1)
{
    const auto base = interval_bounds(model, box);
    auto b = base;
    for (int i = 0; i < model.size(); ++i) {
        const auto& net = model.networks[i];
        for (int k = 0; k < static_cast<int>(net.layers.size()); ++k) {
            const int width = net.layers[k].outputs();
            std::vector<double> ilo, ihi;
            detail::interval_layer(model, box, b, i, k, ilo, ihi);
            std::vector<double> lo(width), hi(width);
            std::vector<bool> ok(width, true);
            const int workers = std::max(1, std::min(threads, width));
            parallel_for(workers, workers, [&](int w) {
                auto m = build_layer_bound_problem(model, i, k, true, b, box);
                lp::Basis basis;
                bool have_basis = false;
                for (int j = w * width / workers; j < (w + 1) * width / workers; ++j) {
                    const int col = m.var_index.H({i, k, j});
                    double v[2];
                    for (int d = 0; d < 2; ++d) {
                        std::fill(m.lp.objective.begin(), m.lp.objective.end(), 0.0);
                        m.lp.objective[col] = d == 0 ? -1.0 : 1.0;
                        const auto s = have_basis ? lp::warm_start_solve(m.lp, basis) : lp::solve_lp(m.lp);
                        if (s.status != lp::LpStatus::optimal) {
                            ok[j] = false;
                            break;
                        }
                        basis = s.basis;
                        have_basis = true;
                        v[d] = d == 0 ? -s.objective : s.objective;
                    }
                    if (ok[j]) {
                        lo[j] = v[0] - detail::pad(v[0]);
                        hi[j] = v[1] + detail::pad(v[1]);
                    }
                }
            });
            for (int j = 0; j < width; ++j) {
                const NeuronId id{i, k, j};
                double nlo = std::max({base.lo(id), ilo[j]});
                double nhi = std::min({base.hi(id), ihi[j]});
                BoundMethod how = BoundMethod::interval;
                if (ok[j]) {
                    if (lo[j] > nlo) {
                        nlo = lo[j];
                        how = BoundMethod::lp;
                    }
                    if (hi[j] < nhi) {
                        nhi = hi[j];
                        how = BoundMethod::lp;
                    }
                } else {
                    log().info("lp_tighten_all: LP failed at neuron ({},{},{}), keeping interval bound", i, k, j);
                }
                if (nlo > nhi) // both sides agree up to round-off
                    nlo = nhi = 0.5 * (nlo + nhi);
                b.set(id, nlo, nhi, how);
            }
        }
    }
    return b;
}

/// Per-neuron sums of ReLU overestimation over surveyed fractional nodes.
struct DiscrepancyLedger {
    std::vector<std::vector<std::vector<double>>> sum; // [net][layer][neuron]
    long surveyed_nodes = 0;

    static DiscrepancyLedger shaped_like(const EnsembleModel& model)
    {
        DiscrepancyLedger d;
        for (const auto& net : model.networks) {
            std::vector<std::vector<double>> layers;
            for (const auto& L : net.layers)
                layers.emplace_back(static_cast<std::size_t>(L.outputs()), 0.0);
            d.sum.push_back(std::move(layers));
        }
        return d;
    }
};

/// y if h < 0, otherwise y - h.
inline double discrepancy(double h, double y) { return h < 0.0 ? y : y - h; }

inline DiscrepancyLedger survey_discrepancies(const EnsembleModel& model, const NeuronBounds& lp_bounds,
                                              const InputBox& box, const TightenParams& params)
{
    params.validate();
    auto ledger = DiscrepancyLedger::shaped_like(model);
    const auto m = build_bigm(model, lp_bounds, box);
    BnbParams bp;
    bp.node_limit = params.K;
    bp.time_limit = params.survey_time_limit;
    const auto r = solve_milp(m, bp, {}, [&](const MilpModel& mm, const lp::LpSolution& s) {
        for (const auto& id : mm.z_neuron) {
            const double d = discrepancy(s.x[mm.var_index.H(id)], s.x[mm.var_index.Y(id)]);
            ledger.sum[id.net][id.layer][id.index] += std::max(0.0, d);
        }
    });
    ledger.surveyed_nodes = r.stats.nodes_processed;
    log().info("survey: {} nodes, status {}", r.stats.nodes_processed, to_string(r.stats.status));
    return ledger;
}

/// Neurons whose mean discrepancy over the surveyed nodes reaches tau.
inline std::vector<NeuronId> select_critical(const DiscrepancyLedger& ledger, const TightenParams& params)
{
    std::vector<NeuronId> out;
    if (ledger.surveyed_nodes <= 0)
        return out;
    const double n = static_cast<double>(ledger.surveyed_nodes);
    for (std::size_t i = 0; i < ledger.sum.size(); ++i)
        for (std::size_t k = 0; k < ledger.sum[i].size(); ++k)
            for (std::size_t j = 0; j < ledger.sum[i][k].size(); ++j) {
                const double s = ledger.sum[i][k][j];
                if (s > 0.0 && s / n >= params.tau)
                    out.push_back({static_cast<int>(i), static_cast<int>(k), static_cast<int>(j)});
            }
    return out;
}

/// Two MILPs per critical neuron over the preceding layers; the dual bound is used
/// when a solve is interrupted. Earlier layers keep their incoming bounds.
inline NeuronBounds milp_tighten_critical(const EnsembleModel& model, const std::vector<NeuronId>& critical,
                                          const NeuronBounds& bounds, const InputBox& box,
                                          const TightenParams& params)
{
    params.validate();
    auto out = bounds;
    const int n = static_cast<int>(critical.size());
    std::vector<double> lo(n, -kInf), hi(n, kInf);
    const Deadline budget(params.time_budget);
    parallel_for(n, params.threads, [&](int c) {
        const auto& id = critical[c];
        BnbParams bp;
        bp.time_limit = std::min(params.milp_time_limit, budget.remaining());
        if (bp.time_limit <= 0.0)
            return;
        for (auto dir : {BoundDirection::lower, BoundDirection::upper}) {
            try {
                const auto m = build_bound_subproblem(model, id, dir, false, bounds, box);
                const auto r = solve_milp(m, bp);
                if (r.stats.status == BnbStatus::infeasible || !std::isfinite(r.stats.best_bound)) {
                    log().info("milp_tighten_critical: no bound for ({},{},{})", id.net, id.layer, id.index);
                    continue;
                }
                const double v = r.stats.best_bound;
                if (dir == BoundDirection::upper)
                    hi[c] = v + detail::pad(v);
                else
                    lo[c] = -v - detail::pad(v);
            } catch (const Error& e) {
                log().info("milp_tighten_critical: ({},{},{}) failed: {}", id.net, id.layer, id.index, e.what());
            }
        }
    });
    for (int c = 0; c < n; ++c) {
        const auto& id = critical[c];
        double nlo = bounds.lo(id), nhi = bounds.hi(id);
        bool changed = false;
        if (lo[c] > nlo) {
            nlo = lo[c];
            changed = true;
        }
        if (hi[c] < nhi) {
            nhi = hi[c];
            changed = true;
        }
        if (nlo > nhi)
            nlo = nhi = 0.5 * (nlo + nhi);
        out.set(id, nlo, nhi, changed ? BoundMethod::milp : bounds.method(id));
    }
    return out;
}

struct TightenResult {
    NeuronBounds interval;
    NeuronBounds lp;
    NeuronBounds targeted;
    DiscrepancyLedger ledger;
    std::vector<NeuronId> critical;
    double seconds = 0.0;
};

/// LP tightening, node survey, critical selection and MILP tightening, keeping every stage.
inline TightenResult targeted_bounds_staged(const EnsembleModel& model, const InputBox& box,
                                            const TightenParams& params)
{
    params.validate();
    const Stopwatch clock;
    TightenResult r;
    r.interval = interval_bounds(model, box);
    r.lp = lp_tighten_all(model, box, params.threads);
    r.ledger = survey_discrepancies(model, r.lp, box, params);
    r.critical = select_critical(r.ledger, params);
    r.targeted = milp_tighten_critical(model, r.critical, r.lp, box, params);
    r.seconds = clock.seconds();
    log().info("targeted bounds: {} critical neurons, {:.2f}s", r.critical.size(), r.seconds);
    return r;
}

inline NeuronBounds targeted_bounds(const EnsembleModel& model, const InputBox& box, const TightenParams& params)
{
    return targeted_bounds_staged(model, box, params).targeted;
}

/// CSV with columns i,l,j,LB,UB,status,method using 1-based network and neuron
/// indices and l = 2 for the first hidden layer.
inline void write_bounds_csv(const NeuronBounds& b, std::ostream& os)
{
    os.precision(17);
    os << "i,l,j,LB,UB,status,method\n";
    for (std::size_t i = 0; i < b.nets.size(); ++i)
        for (std::size_t k = 0; k < b.nets[i].size(); ++k) {
            const auto& L = b.nets[i][k];
            const bool output = k + 1 == b.nets[i].size();
            for (int j = 0; j < L.size(); ++j)
                os << i + 1 << ',' << k + 2 << ',' << j + 1 << ',' << L.lo[j] << ',' << L.hi[j] << ','
                   << (output ? "output" : to_string(L.status[j])) << ',' << to_string(L.method[j]) << '\n';
        }
}

} // namespace ennopt

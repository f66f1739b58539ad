#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <vector>

#include "ennopt/bnb.hpp"
#include "ennopt/common.hpp"
#include "ennopt/formulation.hpp"
#include "ennopt/model.hpp"
#include "ennopt/tighten.hpp"

namespace ennopt {

/// lambda[i-1][j] multiplies (x^1_j - x^i_j) for networks i = 2..e.
using Multipliers = std::vector<std::vector<double>>;

/// Fixed binary value per free neuron, keyed by neuron.
using ActivationFix = std::map<NeuronId, int>;

struct Phase2Params {
    double delta = 0.02;
    double epsilon = 0.02;
    double mu0 = 0.05;
    int Q = 20;
    double time_limit = kInf;
    double subproblem_time_limit = 10.0;
    double heuristic_time_limit = 5.0;
    int threads = 1;
    std::ostream* trace = nullptr; // CSV: node,widths,bound,incumbent,action

    void validate() const
    {
        if (!(delta > 0.0) || !(epsilon > 0.0) || !(mu0 > 0.0) || Q < 0)
            throw PreconditionError("Phase2Params: need delta > 0, epsilon > 0, mu0 > 0, Q >= 0");
    }
};

struct SubgradientState {
    double mu = 0.05;
    int q = 0;

    /// Advances q and applies mu <- mu / sqrt(q).
    double next()
    {
        ++q;
        mu /= std::sqrt(static_cast<double>(q));
        return mu;
    }
};

inline Multipliers zero_multipliers(const EnsembleModel& model)
{
    return Multipliers(static_cast<std::size_t>(std::max(0, model.size() - 1)),
                       std::vector<double>(static_cast<std::size_t>(model.input_dim), 0.0));
}

/// Rounded z values of a solution of a big-M model.
inline ActivationFix activation_fix_from(const MilpModel& m, std::span<const double> values)
{
    ActivationFix f;
    for (std::size_t k = 0; k < m.binary_cols.size(); ++k)
        f[m.z_neuron[k]] = values[m.binary_cols[k]] > 0.5 ? 1 : 0;
    return f;
}

/// Activation pattern of every free neuron at x.
inline ActivationFix activation_fix_at(const EnsembleModel& model, const NeuronBounds& bounds,
                                       std::span<const double> x)
{
    ActivationFix f;
    for (int i = 0; i < model.size(); ++i) {
        const auto pre = forward_preactivations(model.networks[i], x);
        for (int k = 0; k + 1 < static_cast<int>(pre.size()); ++k)
            for (int j = 0; j < static_cast<int>(pre[k].size()); ++j)
                if (bounds.status({i, k, j}) == NeuronStatus::free)
                    f[{i, k, j}] = pre[k][j] > 0.0 ? 1 : 0;
    }
    return f;
}

struct LagResult {
    bool feasible = false;
    double bound = -kInf;
    std::vector<std::vector<double>> x_copies;
    bool exact = true; // every subproblem solved to optimality
};

/// Objective term on x for network i under multipliers lambda.
inline std::vector<double> lagrangian_x_terms(const Multipliers& lambda, int i, int n)
{
    std::vector<double> c(static_cast<std::size_t>(n), 0.0);
    if (i == 0) {
        for (const auto& row : lambda)
            for (int j = 0; j < n; ++j)
                c[j] += row[j];
    } else {
        for (int j = 0; j < n; ++j)
            c[j] = -lambda[i - 1][j];
    }
    return c;
}

/// Sum of the e single-network problems. With `z_fixed`, each is an LP with the
/// binaries fixed (used for multiplier initialization; not a valid bound).
inline LagResult solve_lag_relaxation(const EnsembleModel& model, const NeuronBounds& bounds, const Multipliers& lambda,
                                      const InputBox& box, const ActivationFix* z_fixed = nullptr,
                                      double subproblem_time_limit = kInf, int threads = 1)
{
    const int e = model.size(), n = model.input_dim;
    if (static_cast<int>(lambda.size()) != e - 1)
        throw ShapeError("solve_lag_relaxation: lambda must have e-1 rows");
    for (const auto& row : lambda)
        if (static_cast<int>(row.size()) != n)
            throw ShapeError("solve_lag_relaxation: lambda rows must have input_dim entries");
    std::vector<double> value(e, -kInf);
    std::vector<std::vector<double>> copies(e);
    std::vector<char> feasible(e, 0), exact(e, 1);
    parallel_for(e, threads, [&](int i) {
        auto m = build_single_network_bigm(model, i, bounds, box, lagrangian_x_terms(lambda, i, n));
        if (z_fixed) {
            for (std::size_t k = 0; k < m.binary_cols.size(); ++k) {
                const auto it = z_fixed->find(m.z_neuron[k]);
                if (it == z_fixed->end())
                    throw PreconditionError("solve_lag_relaxation: fixing misses a free neuron");
                m.lp.col_lo[m.binary_cols[k]] = m.lp.col_hi[m.binary_cols[k]] = it->second;
            }
            const auto s = lp::solve_lp(m.lp);
            if (s.status != lp::LpStatus::optimal)
                return;
            feasible[i] = 1;
            value[i] = s.objective;
            copies[i] = m.x_of(s.x);
            return;
        }
        BnbParams bp;
        bp.time_limit = subproblem_time_limit;
        const auto r = solve_milp(m, bp);
        if (r.stats.status == BnbStatus::infeasible)
            return;
        feasible[i] = 1;
        value[i] = r.stats.best_bound;
        exact[i] = r.stats.status == BnbStatus::optimal;
        copies[i] = r.incumbent ? m.x_of(r.incumbent->values) : box.center();
    });
    LagResult out;
    out.feasible = std::all_of(feasible.begin(), feasible.end(), [](char f) { return f != 0; });
    if (!out.feasible)
        return out;
    out.bound = 0.0;
    for (int i = 0; i < e; ++i) {
        out.bound += value[i];
        out.exact = out.exact && exact[i];
    }
    out.x_copies = std::move(copies);
    return out;
}

/// lambda_i <- lambda_i - mu (x^1 - x^i) with mu taken from the state.
inline void subgradient_step(Multipliers& lambda, SubgradientState& state,
                             const std::vector<std::vector<double>>& copies)
{
    const double mu = state.next();
    for (std::size_t i = 1; i < copies.size(); ++i)
        for (std::size_t j = 0; j < copies[0].size(); ++j)
            lambda[i - 1][j] -= mu * (copies[0][j] - copies[i][j]);
}

/// Q subgradient iterations on LPs with z fixed at the Phase One pattern.
inline Multipliers subgradient_init(const EnsembleModel& model, const NeuronBounds& bounds, const ActivationFix& zbar,
                                    const InputBox& box, const Phase2Params& params,
                                    SubgradientState* state_out = nullptr)
{
    params.validate();
    auto lambda = zero_multipliers(model);
    SubgradientState state{params.mu0, 0};
    for (int q = 0; q < params.Q; ++q) {
        const auto r = solve_lag_relaxation(model, bounds, lambda, box, &zbar, kInf, params.threads);
        if (!r.feasible)
            break;
        subgradient_step(lambda, state, r.x_copies);
    }
    if (state_out)
        *state_out = state;
    return lambda;
}

struct SpatialNode {
    InputBox box;
    double bound = kInf;
    std::vector<std::vector<double>> x_copies;
    int depth = 0;
    long id = 0;
};

struct BranchDecision {
    int coordinate = -1;
    double split = 0.0;
    double disagreement = 0.0;
    InputBox left, right;
};

/// Coordinate of largest disagreement among the copies (ties to the lowest index),
/// split at the midpoint of the extreme copy values.
inline BranchDecision select_branch_and_split(const SpatialNode& node)
{
    BranchDecision d;
    const int n = node.box.dim();
    for (int j = 0; j < n; ++j) {
        double lo = kInf, hi = -kInf;
        for (const auto& x : node.x_copies) {
            lo = std::min(lo, x[j]);
            hi = std::max(hi, x[j]);
        }
        if (d.coordinate < 0 || hi - lo > d.disagreement) {
            d.coordinate = j;
            d.disagreement = hi - lo;
            d.split = 0.5 * (hi + lo);
        }
    }
    d.left = node.box;
    d.right = node.box;
    d.left.hi[d.coordinate] = d.split;
    d.right.lo[d.coordinate] = d.split;
    return d;
}

inline bool small_domain_check(const InputBox& box, double delta)
{
    for (int j = 0; j < box.dim(); ++j)
        if (box.hi[j] - box.lo[j] > delta)
            return false;
    return true;
}

/// Interval bounds on `box` intersected with `root`, statuses recomputed.
inline NeuronBounds restrict_bounds(const EnsembleModel& model, const NeuronBounds& root, const InputBox& box)
{
    auto b = interval_bounds(model, box);
    for (std::size_t i = 0; i < b.nets.size(); ++i)
        for (std::size_t k = 0; k < b.nets[i].size(); ++k)
            for (int j = 0; j < b.nets[i][k].size(); ++j) {
                const NeuronId id{static_cast<int>(i), static_cast<int>(k), j};
                double lo = std::max(b.lo(id), root.lo(id)), hi = std::min(b.hi(id), root.hi(id));
                if (lo > hi)
                    lo = hi = 0.5 * (lo + hi);
                const bool local = b.lo(id) > root.lo(id) || b.hi(id) < root.hi(id);
                b.set(id, lo, hi, local ? BoundMethod::interval : root.method(id));
            }
    return b;
}

inline InputBox intersect(const InputBox& a, const InputBox& b)
{
    InputBox c = a;
    for (int j = 0; j < a.dim(); ++j) {
        c.lo[j] = std::max(a.lo[j], b.lo[j]);
        c.hi[j] = std::min(a.hi[j], b.hi[j]);
        if (c.lo[j] > c.hi[j])
            c.lo[j] = c.hi[j] = 0.5 * (c.lo[j] + c.hi[j]);
    }
    return c;
}

struct HeuristicResult {
    std::vector<double> x;
    double value = -kInf;
};

/// Big-M of network 1 on [x1 - eps, x1 + eps] within the root box, then the full
/// ensemble is evaluated at the point found.
inline HeuristicResult primal_heuristic(const EnsembleModel& model, const NeuronBounds& root_bounds,
                                        const std::vector<double>& x1, double epsilon, double time_limit = 5.0)
{
    InputBox local{x1, x1};
    for (int j = 0; j < model.input_dim; ++j) {
        local.lo[j] -= epsilon;
        local.hi[j] += epsilon;
    }
    local = intersect(local, model.box);
    HeuristicResult h{x1, -kInf};
    for (int j = 0; j < model.input_dim; ++j)
        h.x[j] = std::clamp(h.x[j], model.box.lo[j], model.box.hi[j]);
    try {
        const auto b = restrict_bounds(model, root_bounds, local);
        const auto m = build_single_network_bigm(model, 0, b, local);
        BnbParams bp;
        bp.time_limit = time_limit;
        const auto r = solve_milp(m, bp);
        if (r.incumbent) {
            h.x = m.x_of(r.incumbent->values);
            for (int j = 0; j < model.input_dim; ++j)
                h.x[j] = std::clamp(h.x[j], model.box.lo[j], model.box.hi[j]);
        }
    } catch (const Error& e) {
        log().info("primal_heuristic: {}", e.what());
    }
    h.value = forward_ensemble(model, h.x);
    return h;
}

struct Phase2Result {
    std::vector<double> x;
    double objective = -kInf;
    double best_bound = kInf;
    double gap = kInf;
    BnbStatus status = BnbStatus::optimal;
    long nodes = 0;
    long fallbacks = 0;
    double wall_time = 0.0;
    Multipliers lambda;
};

namespace detail {

struct SpatialLess {
    bool operator()(const SpatialNode& a, const SpatialNode& b) const
    {
        if (a.bound != b.bound)
            return a.bound < b.bound;
        if (a.depth != b.depth)
            return a.depth > b.depth;
        return a.id > b.id;
    }
};

inline std::string widths(const InputBox& b)
{
    std::ostringstream os;
    os.precision(6);
    for (int j = 0; j < b.dim(); ++j)
        os << (j ? ";" : "") << b.hi[j] - b.lo[j];
    return os.str();
}

} // namespace detail

/// Spatial branch and bound on the input box with Lagrangian node bounds.
/// `incumbent_x` is the Phase One point; `zbar` its activation pattern.
inline Phase2Result phase_two_solve(const EnsembleModel& model, const NeuronBounds& bounds,
                                    const std::vector<double>& incumbent_x, const ActivationFix& zbar,
                                    const Phase2Params& params)
{
    params.validate();
    if (model.size() < 2)
        throw PreconditionError("phase_two_solve needs an ensemble of at least two networks");
    const Deadline deadline(params.time_limit);
    Phase2Result res;
    res.x = incumbent_x;
    res.objective = forward_ensemble(model, incumbent_x);

    auto offer = [&](const std::vector<double>& x, double v) {
        if (v > res.objective) {
            res.objective = v;
            res.x = x;
        }
    };
    auto trace = [&](const SpatialNode& n, const char* action) {
        if (params.trace)
            *params.trace << n.id << ',' << detail::widths(n.box) << ',' << n.bound << ',' << res.objective << ','
                          << action << '\n';
    };
    if (params.trace)
        *params.trace << "node,widths,bound,incumbent,action\n";

    SubgradientState state;
    auto lambda = subgradient_init(model, bounds, zbar, model.box, params, &state);
    double open_bound = -kInf; // bounds of nodes left unresolved

    auto sub_limit = [&] { return std::max(0.0, std::min(params.subproblem_time_limit, deadline.remaining())); };

    std::vector<SpatialNode> heap;
    long next_id = 0;
    {
        const auto r = solve_lag_relaxation(model, bounds, lambda, model.box, nullptr, sub_limit(), params.threads);
        if (!r.feasible)
            throw NumericError("phase_two_solve: root relaxation infeasible");
        heap.push_back(SpatialNode{model.box, r.bound, r.x_copies, 0, next_id++});
    }

    // Exact big-M on the node box. Returns the part of the node bound left open.
    auto fallback = [&](const SpatialNode& node) {
        ++res.fallbacks;
        const auto b = restrict_bounds(model, bounds, node.box);
        const auto m = build_bigm(model, b, node.box);
        BnbParams bp;
        bp.time_limit = std::max(0.0, deadline.remaining());
        bp.cutoff = res.objective;
        const auto r = solve_milp(m, bp);
        if (r.incumbent) {
            const auto x = m.x_of(r.incumbent->values);
            offer(x, forward_ensemble(model, x));
        }
        if (r.stats.status == BnbStatus::time_limit || r.stats.status == BnbStatus::node_limit)
            open_bound = std::max(open_bound, std::min(node.bound, r.stats.best_bound));
    };

    bool interrupted = false;
    while (!heap.empty()) {
        if (deadline.expired()) {
            interrupted = true;
            break;
        }
        std::pop_heap(heap.begin(), heap.end(), detail::SpatialLess{});
        SpatialNode node = std::move(heap.back());
        heap.pop_back();
        if (node.bound <= res.objective + 1e-9) {
            trace(node, "pruned");
            continue;
        }
        ++res.nodes;

        if (small_domain_check(node.box, params.delta)) {
            trace(node, "bigm-fallback");
            fallback(node);
            continue;
        }

        const auto h = primal_heuristic(model, bounds, node.x_copies[0], params.epsilon,
                                        std::min(params.heuristic_time_limit, std::max(0.0, deadline.remaining())));
        offer(h.x, h.value);

        auto d = select_branch_and_split(node);
        if (d.disagreement <= 1e-9) {
            const auto& x = node.x_copies[0];
            if (model.box.contains(x))
                offer(x, forward_ensemble(model, x));
            trace(node, "bigm-fallback");
            fallback(node);
            continue;
        }
        if (node.bound <= res.objective + 1e-9) {
            trace(node, "pruned");
            continue;
        }

        subgradient_step(lambda, state, node.x_copies);
        trace(node, "branch");
        for (const InputBox* child : {&d.left, &d.right}) {
            if (deadline.expired()) {
                open_bound = std::max(open_bound, node.bound);
                interrupted = true;
                break;
            }
            const auto b = restrict_bounds(model, bounds, *child);
            const auto r = solve_lag_relaxation(model, b, lambda, *child, nullptr, sub_limit(), params.threads);
            if (!r.feasible)
                continue;
            SpatialNode c{*child, std::min(node.bound, r.bound), r.x_copies, node.depth + 1, next_id++};
            if (c.bound <= res.objective + 1e-9)
                continue;
            heap.push_back(std::move(c));
            std::push_heap(heap.begin(), heap.end(), detail::SpatialLess{});
        }
    }

    for (const auto& n : heap)
        open_bound = std::max(open_bound, n.bound);
    res.best_bound = std::max(res.objective, open_bound);
    res.status = (interrupted || open_bound > res.objective + 1e-9) ? BnbStatus::time_limit : BnbStatus::optimal;
    if (res.status == BnbStatus::optimal)
        res.best_bound = res.objective;
    res.gap = compute_gap(res.best_bound, res.objective);
    res.lambda = lambda;
    res.wall_time = deadline.elapsed();
    return res;
}

} // namespace ennopt

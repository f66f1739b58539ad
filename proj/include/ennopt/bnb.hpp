#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "ennopt/common.hpp"
#include "ennopt/formulation.hpp"
#include "ennopt/lp.hpp"

namespace ennopt {

/// A global row `sum value * v[index] <= rhs`.
struct CutRow {
    std::vector<int> index;
    std::vector<double> value;
    double rhs = 0.0;

    double lhs(std::span<const double> v) const
    {
        double s = 0.0;
        for (std::size_t k = 0; k < index.size(); ++k)
            s += value[k] * v[index[k]];
        return s;
    }
    double violation(std::span<const double> v) const { return lhs(v) - rhs; }
};

struct Incumbent {
    std::vector<double> values; // one entry per model column
    double objective = -kInf;
};

/// (bound - obj) / max(|obj|, 1e-10), clamped at 0. Zero when both agree within 1e-9.
inline double compute_gap(double best_bound, double best_objective)
{
    if (!std::isfinite(best_objective))
        return kInf;
    if (std::abs(best_bound - best_objective) <= 1e-9)
        return 0.0;
    const double g = (best_bound - best_objective) / std::max(std::abs(best_objective), 1e-10);
    return std::max(0.0, g);
}

enum class BnbStatus { optimal, infeasible, time_limit, node_limit };

inline const char* to_string(BnbStatus s)
{
    switch (s) {
    case BnbStatus::optimal: return "optimal";
    case BnbStatus::infeasible: return "infeasible";
    case BnbStatus::time_limit: return "time_limit";
    case BnbStatus::node_limit: return "node_limit";
    }
    return "?";
}

struct SolveStats {
    BnbStatus status = BnbStatus::optimal;
    long nodes_processed = 0;
    long lp_iterations = 0;
    double wall_time = 0.0;
    double best_bound = -kInf;
    double best_objective = -kInf;
    double gap = kInf;
    int cuts_added = 0;
    int cuts_generated = 0;
};

struct BnbParams {
    double time_limit = kInf;
    long node_limit = -1; // negative: unlimited
    double int_tol = kIntTol;
    double prune_tol = 1e-9;
    /// Nodes whose bound cannot beat this value are pruned.
    double cutoff = -kInf;
    std::size_t cut_pool_cap = 5000;
    long purge_every = 500;
    lp::LpOptions lp;
    std::ostream* trace = nullptr; // CSV: node,depth,bound,incumbent,action
};

/// Data handed to the integer-solution callback.
struct IntegerSolutionView {
    const lp::LpSolution& node;               // integral node relaxation
    std::span<const double> polished;         // LP optimum with z fixed at the rounded values
    double polished_objective;
    std::span<const double> last_fractional;  // most recent fractional node solution (may be empty)
};

/// Returns cut rows to add globally. An empty result accepts the solution.
using IntegerCallback = std::function<std::vector<CutRow>(const MilpModel&, const IntegerSolutionView&)>;
using FractionCallback = std::function<void(const MilpModel&, const lp::LpSolution&)>;

struct MilpResult {
    std::optional<Incumbent> incumbent;
    SolveStats stats;
    std::vector<CutRow> cuts; // pool at termination
};

namespace detail {

struct BnbNode {
    std::vector<std::pair<int, std::int8_t>> fixings; // (binary slot, value)
    double parent_bound = kInf;
    int depth = 0;
    long id = 0;
    bool cold = false;
    std::shared_ptr<const lp::Basis> basis;
};

/// Heap order: larger bound first, then smaller depth, then earlier insertion.
struct NodeLess {
    bool operator()(const BnbNode& a, const BnbNode& b) const
    {
        if (a.parent_bound != b.parent_bound)
            return a.parent_bound < b.parent_bound;
        if (a.depth != b.depth)
            return a.depth > b.depth;
        return a.id > b.id;
    }
};

struct PoolCut {
    CutRow row;
    bool binding = false;
};

} // namespace detail

/// Best-first LP-based branch and bound (maximization) over the binary columns of m.
inline MilpResult solve_milp(const MilpModel& m, const BnbParams& params = {}, const IntegerCallback& on_integer = {},
                             const FractionCallback& on_fraction = {})
{
    using detail::BnbNode;
    m.lp.validate();
    if (m.lp.sense != lp::Sense::maximize)
        throw PreconditionError("solve_milp expects a maximization model");

    const Deadline deadline(params.time_limit);
    MilpResult result;
    SolveStats& st = result.stats;
    const int base_rows = m.lp.n_rows();
    const int nb = static_cast<int>(m.binary_cols.size());

    lp::LpProblem work = m.lp;
    std::vector<detail::PoolCut> pool;
    std::vector<double> last_fractional;

    std::optional<Incumbent> best;
    double cutoff = params.cutoff;
    double unresolved_bound = -kInf;

    std::vector<BnbNode> heap;
    long next_id = 0;
    heap.push_back(BnbNode{{}, kInf, 0, next_id++, false, nullptr});

    auto trace = [&](long id, int depth, double bound, const char* action) {
        if (params.trace)
            *params.trace << id << ',' << depth << ',' << bound << ','
                          << (best ? best->objective : -kInf) << ',' << action << '\n';
    };
    if (params.trace)
        *params.trace << "node,depth,bound,incumbent,action\n";

    auto rebuild_rows = [&] {
        work.rows.resize(static_cast<std::size_t>(base_rows));
        for (const auto& c : pool)
            work.add_row(c.row.index, c.row.value, lp::Relation::le, c.row.rhs);
    };

    auto solve = [&](const BnbNode& node) {
        lp::LpSolution s = (node.basis && !node.cold) ? lp::warm_start_solve(work, *node.basis, params.lp)
                                                      : lp::solve_lp(work, params.lp);
        st.lp_iterations += s.iterations;
        return s;
    };

    auto mark_binding = [&](const lp::LpSolution& s) {
        for (std::size_t k = 0; k < pool.size(); ++k)
            if (s.row_activity.size() > base_rows + k &&
                std::abs(s.row_activity[base_rows + k] - pool[k].row.rhs) <= 1e-6)
                pool[k].binding = true;
    };

    bool interrupted = false;
    while (!heap.empty()) {
        if (deadline.expired()) {
            st.status = BnbStatus::time_limit;
            interrupted = true;
            break;
        }
        if (params.node_limit >= 0 && st.nodes_processed >= params.node_limit) {
            st.status = BnbStatus::node_limit;
            interrupted = true;
            break;
        }
        std::pop_heap(heap.begin(), heap.end(), detail::NodeLess{});
        BnbNode node = std::move(heap.back());
        heap.pop_back();
        if (node.parent_bound <= cutoff + params.prune_tol) {
            trace(node.id, node.depth, node.parent_bound, "pruned");
            continue;
        }
        ++st.nodes_processed;

        if (params.purge_every > 0 && st.nodes_processed % params.purge_every == 0 && !pool.empty()) {
            const auto before = pool.size();
            std::erase_if(pool, [](const detail::PoolCut& c) { return !c.binding; });
            if (pool.size() != before) {
                rebuild_rows();
                log().trace("bnb: purged {} never-binding cuts", before - pool.size());
            }
        }

        work.col_lo = m.lp.col_lo;
        work.col_hi = m.lp.col_hi;
        for (const auto& [slot, v] : node.fixings)
            work.col_lo[m.binary_cols[slot]] = work.col_hi[m.binary_cols[slot]] = v;

        while (true) {
            lp::LpSolution s = solve(node);
            if (s.status == lp::LpStatus::iteration_limit) {
                if (!node.cold) {
                    node.cold = true;
                    trace(node.id, node.depth, node.parent_bound, "requeued");
                    heap.push_back(node);
                    std::push_heap(heap.begin(), heap.end(), detail::NodeLess{});
                } else {
                    unresolved_bound = std::max(unresolved_bound, node.parent_bound);
                    trace(node.id, node.depth, node.parent_bound, "unresolved");
                }
                break;
            }
            if (s.status == lp::LpStatus::infeasible) {
                trace(node.id, node.depth, node.parent_bound, "infeasible");
                break;
            }
            if (s.status == lp::LpStatus::unbounded)
                throw NumericError("solve_milp: LP relaxation is unbounded");
            mark_binding(s);
            const double bound = std::min(s.objective, node.parent_bound);
            if (bound <= cutoff + params.prune_tol) {
                trace(node.id, node.depth, bound, "pruned");
                break;
            }

            int branch = -1;
            double best_frac = params.int_tol;
            for (int k = 0; k < nb; ++k) {
                const double v = s.x[m.binary_cols[k]];
                const double f = std::min(v - std::floor(v), std::ceil(v) - v);
                if (f > best_frac) {
                    best_frac = f;
                    branch = k;
                }
            }

            if (branch >= 0) {
                if (on_fraction)
                    on_fraction(m, s);
                last_fractional = s.x;
                auto basis = std::make_shared<const lp::Basis>(s.basis);
                for (std::int8_t v : {std::int8_t{0}, std::int8_t{1}}) {
                    BnbNode child{node.fixings, bound, node.depth + 1, next_id++, false, basis};
                    child.fixings.emplace_back(branch, v);
                    heap.push_back(std::move(child));
                    std::push_heap(heap.begin(), heap.end(), detail::NodeLess{});
                }
                trace(node.id, node.depth, bound, "branched");
                break;
            }

            // Integral: polish by fixing z at the rounded values.
            lp::LpSolution polished;
            if (nb > 0) {
                auto saved_lo = work.col_lo, saved_hi = work.col_hi;
                for (int c : m.binary_cols)
                    work.col_lo[c] = work.col_hi[c] = std::round(s.x[c]);
                polished = lp::warm_start_solve(work, s.basis, params.lp);
                st.lp_iterations += polished.iterations;
                work.col_lo = std::move(saved_lo);
                work.col_hi = std::move(saved_hi);
                if (polished.status != lp::LpStatus::optimal)
                    polished = s;
            } else {
                polished = s;
            }

            if (on_integer) {
                const IntegerSolutionView view{s, polished.x, polished.objective, last_fractional};
                auto cuts = on_integer(m, view);
                st.cuts_generated += static_cast<int>(cuts.size());
                bool violated = false;
                for (auto& c : cuts) {
                    if (pool.size() >= params.cut_pool_cap)
                        break;
                    violated = violated || c.violation(s.x) > 1e-6;
                    work.add_row(c.index, c.value, lp::Relation::le, c.rhs);
                    pool.push_back({std::move(c), false});
                    ++st.cuts_added;
                }
                if (violated) {
                    node.basis = std::make_shared<const lp::Basis>(s.basis);
                    node.parent_bound = bound;
                    continue;
                }
            }

            if (polished.objective > cutoff) {
                best = Incumbent{polished.x, polished.objective};
                cutoff = std::max(cutoff, polished.objective);
                log().trace("bnb: node {} incumbent {:.9g}", node.id, polished.objective);
            }
            trace(node.id, node.depth, bound, "integral");
            break;
        }
    }

    if (!interrupted)
        st.status = best ? BnbStatus::optimal : BnbStatus::infeasible;
    double open = unresolved_bound;
    for (const auto& n : heap)
        open = std::max(open, n.parent_bound);
    st.best_objective = best ? best->objective : -kInf;
    // cutoff equals the incumbent objective once one exists; every pruned node lies below it
    st.best_bound = std::max(open, cutoff);
    if (std::isfinite(unresolved_bound) && st.status == BnbStatus::optimal)
        st.status = BnbStatus::node_limit;
    st.gap = compute_gap(st.best_bound, st.best_objective);
    st.wall_time = deadline.elapsed();
    result.incumbent = std::move(best);
    for (auto& c : pool)
        result.cuts.push_back(std::move(c.row));
    return result;
}

} // namespace ennopt

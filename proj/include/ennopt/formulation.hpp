#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ennopt/common.hpp"
#include "ennopt/lp.hpp"
#include "ennopt/model.hpp"

namespace ennopt {

enum class NeuronStatus { free, always_active, always_inactive };
enum class BoundMethod { interval, lp, milp };

inline const char* to_string(NeuronStatus s)
{
    switch (s) {
    case NeuronStatus::free: return "free";
    case NeuronStatus::always_active: return "always_active";
    case NeuronStatus::always_inactive: return "always_inactive";
    }
    return "?";
}

inline const char* to_string(BoundMethod m)
{
    switch (m) {
    case BoundMethod::interval: return "interval";
    case BoundMethod::lp: return "lp";
    case BoundMethod::milp: return "milp";
    }
    return "?";
}

/// LB = UB = 0 counts as inactive.
inline NeuronStatus classify(double lo, double hi)
{
    if (hi <= 0.0)
        return NeuronStatus::always_inactive;
    if (lo >= 0.0)
        return NeuronStatus::always_active;
    return NeuronStatus::free;
}

struct LayerBounds {
    std::vector<double> lo;
    std::vector<double> hi;
    std::vector<NeuronStatus> status;
    std::vector<BoundMethod> method;

    int size() const { return static_cast<int>(lo.size()); }
};

/// Pre-activation bounds for every neuron of every network, output neurons included.
/// Indexed [net][layer] with `layer` matching Network::layers.
struct NeuronBounds {
    std::vector<std::vector<LayerBounds>> nets;

    static NeuronBounds shaped_like(const EnsembleModel& model)
    {
        NeuronBounds b;
        for (const auto& net : model.networks) {
            std::vector<LayerBounds> layers;
            for (const auto& L : net.layers) {
                const auto n = static_cast<std::size_t>(L.outputs());
                layers.push_back(LayerBounds{std::vector<double>(n, -kInf), std::vector<double>(n, kInf),
                                             std::vector<NeuronStatus>(n, NeuronStatus::free),
                                             std::vector<BoundMethod>(n, BoundMethod::interval)});
            }
            b.nets.push_back(std::move(layers));
        }
        return b;
    }

    double lo(const NeuronId& id) const { return nets[id.net][id.layer].lo[id.index]; }
    double hi(const NeuronId& id) const { return nets[id.net][id.layer].hi[id.index]; }
    NeuronStatus status(const NeuronId& id) const { return nets[id.net][id.layer].status[id.index]; }
    BoundMethod method(const NeuronId& id) const { return nets[id.net][id.layer].method[id.index]; }

    void set(const NeuronId& id, double lo, double hi, BoundMethod how)
    {
        auto& L = nets[id.net][id.layer];
        L.lo[id.index] = lo;
        L.hi[id.index] = hi;
        L.status[id.index] = classify(lo, hi);
        L.method[id.index] = how;
    }

    /// Throws ModelBuildError on shape mismatch, LB > UB, or a status that contradicts the bounds.
    /// Only layers below `upto_layer` of each network are checked.
    void validate(const EnsembleModel& model, int upto_layer = 1 << 30) const
    {
        if (nets.size() != model.networks.size())
            throw ModelBuildError("NeuronBounds: network count mismatch");
        for (std::size_t i = 0; i < nets.size(); ++i) {
            const auto& net = model.networks[i];
            const int depth = std::min<int>(upto_layer, static_cast<int>(net.layers.size()));
            if (static_cast<int>(nets[i].size()) < depth)
                throw ModelBuildError("NeuronBounds: network " + std::to_string(i) + " is missing layers");
            for (int k = 0; k < depth; ++k) {
                const auto& L = nets[i][k];
                const int n = net.layers[k].outputs();
                if (L.size() != n || static_cast<int>(L.hi.size()) != n || static_cast<int>(L.status.size()) != n)
                    throw ModelBuildError("NeuronBounds: network " + std::to_string(i) + " layer " +
                                          std::to_string(k) + " has wrong width");
                for (int j = 0; j < n; ++j) {
                    const std::string where = "neuron (" + std::to_string(i) + "," + std::to_string(k) + "," +
                                              std::to_string(j) + ")";
                    if (!(L.lo[j] <= L.hi[j]))
                        throw ModelBuildError(where + ": LB exceeds UB");
                    if (net.is_output_layer(k))
                        continue;
                    if (!std::isfinite(L.lo[j]) || !std::isfinite(L.hi[j]))
                        throw ModelBuildError(where + ": big-M bounds must be finite");
                    if (L.status[j] != classify(L.lo[j], L.hi[j]))
                        throw ModelBuildError(where + ": status " + to_string(L.status[j]) +
                                              " contradicts bounds [" + std::to_string(L.lo[j]) + ", " +
                                              std::to_string(L.hi[j]) + "]");
                }
            }
        }
    }

    int count(NeuronStatus s, const EnsembleModel& model) const
    {
        int c = 0;
        for (std::size_t i = 0; i < nets.size(); ++i)
            for (std::size_t k = 0; k + 1 < model.networks[i].layers.size(); ++k)
                for (auto st : nets[i][k].status)
                    c += st == s;
        return c;
    }
};

enum class RowKind {
    affine,       // h - W y = b
    relu_lower,   // h - y <= 0
    relu_upper,   // y - h - LB z <= -LB
    relu_on,      // y - UB z <= 0
    pass_through, // y - h = 0
    output,       // y_out - W y = b
    cut
};

struct RowTag {
    RowKind kind;
    NeuronId neuron;
};

/// Column lookup. Entries are -1 when the variable does not exist
/// (pruned inactive neurons, z of fixed neurons, h of output neurons).
struct VarIndex {
    std::vector<int> x;
    std::vector<std::vector<std::vector<int>>> h, y, z; // [net][layer][neuron]

    int H(const NeuronId& n) const { return h[n.net][n.layer][n.index]; }
    int Y(const NeuronId& n) const { return y[n.net][n.layer][n.index]; }
    int Z(const NeuronId& n) const { return z[n.net][n.layer][n.index]; }
};

struct MilpModel {
    lp::LpProblem lp;
    std::vector<int> binary_cols;
    VarIndex var_index;
    std::vector<RowTag> row_tags;
    std::vector<std::string> col_names;
    std::vector<int> networks;  // ensemble indices present in this model
    std::vector<NeuronId> z_neuron; // neuron behind each entry of binary_cols
    NeuronBounds bounds;
    InputBox box;

    std::vector<int> rows_of(RowKind kind) const
    {
        std::vector<int> r;
        for (std::size_t i = 0; i < row_tags.size(); ++i)
            if (row_tags[i].kind == kind)
                r.push_back(static_cast<int>(i));
        return r;
    }

    double objective_value(std::span<const double> v) const
    {
        double s = 0.0;
        for (int j = 0; j < lp.n_cols; ++j)
            s += lp.objective[j] * v[j];
        return s;
    }

    /// Input part of v, clamped to the column bounds (the box) to drop LP round-off.
    std::vector<double> x_of(std::span<const double> v) const
    {
        std::vector<double> x;
        for (int c : var_index.x)
            x.push_back(std::clamp(v[c], lp.col_lo[c], lp.col_hi[c]));
        return x;
    }

    std::vector<double> z_of(std::span<const double> v) const
    {
        std::vector<double> z;
        for (int c : binary_cols)
            z.push_back(v[c]);
        return z;
    }
};

namespace detail {

class BigMBuilder {
public:
    BigMBuilder(const EnsembleModel& model, const NeuronBounds& bounds, const InputBox& box)
        : model_(model)
    {
        box.validate();
        if (box.dim() != model.input_dim)
            throw ModelBuildError("box dimension " + std::to_string(box.dim()) + " does not match input_dim " +
                                  std::to_string(model.input_dim));
        m_.bounds = bounds;
        m_.box = box;
        m_.lp.sense = lp::Sense::maximize;
        const std::size_t e = model.networks.size();
        m_.var_index.h.resize(e);
        m_.var_index.y.resize(e);
        m_.var_index.z.resize(e);
        for (int j = 0; j < model.input_dim; ++j)
            m_.var_index.x.push_back(col(box.lo[j], box.hi[j], "x" + std::to_string(j + 1)));
    }

    /// Adds hidden layers [0, depth) of network i; returns nothing, columns recorded in var_index.
    void add_hidden(int i, int depth, bool relaxed)
    {
        const auto& net = model_.networks[i];
        m_.networks.push_back(i);
        auto& H = m_.var_index.h[i];
        auto& Y = m_.var_index.y[i];
        auto& Z = m_.var_index.z[i];
        H.assign(net.layers.size(), {});
        Y.assign(net.layers.size(), {});
        Z.assign(net.layers.size(), {});
        for (std::size_t k = 0; k < net.layers.size(); ++k) {
            H[k].assign(net.layers[k].outputs(), -1);
            Y[k].assign(net.layers[k].outputs(), -1);
            Z[k].assign(net.layers[k].outputs(), -1);
        }
        for (int k = 0; k < depth; ++k) {
            const auto& lb = m_.bounds.nets[i][k];
            for (int j = 0; j < net.layers[k].outputs(); ++j) {
                const NeuronId id{i, k, j};
                const double LB = lb.lo[j], UB = lb.hi[j];
                const auto st = lb.status[j];
                if (st == NeuronStatus::always_inactive)
                    continue;
                const std::string tag = std::to_string(i + 1) + "_" + std::to_string(k + 2) + "_" + std::to_string(j + 1);
                const int h = col(LB, UB, "h" + tag);
                H[k][j] = h;
                affine_row(id, h, RowKind::affine);
                if (st == NeuronStatus::always_active) {
                    const int y = col(LB, UB, "y" + tag);
                    Y[k][j] = y;
                    row({y, h}, {1.0, -1.0}, lp::Relation::eq, 0.0, RowKind::pass_through, id);
                    continue;
                }
                const int y = col(0.0, UB, "y" + tag);
                const int z = col(0.0, 1.0, "z" + tag);
                Y[k][j] = y;
                Z[k][j] = z;
                if (!relaxed) {
                    m_.binary_cols.push_back(z);
                    m_.z_neuron.push_back(id);
                }
                row({h, y}, {1.0, -1.0}, lp::Relation::le, 0.0, RowKind::relu_lower, id);
                row({y, h, z}, {1.0, -1.0, -LB}, lp::Relation::le, -LB, RowKind::relu_upper, id);
                row({y, z}, {1.0, -UB}, lp::Relation::le, 0.0, RowKind::relu_on, id);
            }
        }
    }

    void add_output(int i, double weight)
    {
        const auto& net = model_.networks[i];
        const int k = static_cast<int>(net.layers.size()) - 1;
        const NeuronId id{i, k, 0};
        const auto& lb = m_.bounds.nets[i][k];
        const int y = col(lb.lo[0], lb.hi[0], "y" + std::to_string(i + 1) + "_out", weight);
        m_.var_index.y[i][k][0] = y;
        affine_row(id, y, RowKind::output);
    }

    /// Free column carrying the target neuron's pre-activation, with objective `sign`.
    int add_target(const NeuronId& id, double sign)
    {
        const std::string tag = std::to_string(id.net + 1) + "_" + std::to_string(id.layer + 2) + "_" +
                                std::to_string(id.index + 1);
        const int h = col(-kInf, kInf, "h" + tag, sign);
        m_.var_index.h[id.net][id.layer][id.index] = h;
        affine_row(id, h, RowKind::affine);
        return h;
    }

    void add_x_objective(std::span<const double> c)
    {
        if (c.empty())
            return;
        if (static_cast<int>(c.size()) != model_.input_dim)
            throw ModelBuildError("extra objective length does not match input_dim");
        for (int j = 0; j < model_.input_dim; ++j)
            m_.lp.objective[m_.var_index.x[j]] += c[j];
    }

    MilpModel finish() { return std::move(m_); }

private:
    int col(double lo, double hi, std::string name, double obj = 0.0)
    {
        m_.col_names.push_back(std::move(name));
        return m_.lp.add_col(lo, hi, obj);
    }

    void row(std::vector<int> idx, std::vector<double> val, lp::Relation rel, double rhs, RowKind kind, NeuronId id)
    {
        m_.lp.add_row(std::move(idx), std::move(val), rel, rhs);
        m_.row_tags.push_back({kind, id});
    }

    /// target - W y_prev = b, skipping pruned inputs.
    void affine_row(const NeuronId& id, int target, RowKind kind)
    {
        const auto& L = model_.networks[id.net].layers[id.layer];
        std::vector<int> idx{target};
        std::vector<double> val{1.0};
        for (int c = 0; c < L.inputs(); ++c) {
            const double w = L.W(id.index, c);
            if (w == 0.0)
                continue;
            const int src = id.layer == 0 ? m_.var_index.x[c] : m_.var_index.y[id.net][id.layer - 1][c];
            if (src < 0)
                continue;
            idx.push_back(src);
            val.push_back(-w);
        }
        row(std::move(idx), std::move(val), lp::Relation::eq, L.b[id.index], kind, id);
    }

    const EnsembleModel& model_;
    MilpModel m_;
};

} // namespace detail

/// Big-M model maximizing the ensemble mean (1/e) sum_i y_out^i.
inline MilpModel build_bigm(const EnsembleModel& model, const NeuronBounds& bounds, const InputBox& box)
{
    bounds.validate(model);
    detail::BigMBuilder b(model, bounds, box);
    const double w = 1.0 / static_cast<double>(model.size());
    for (int i = 0; i < model.size(); ++i) {
        b.add_hidden(i, model.networks[i].hidden_layers(), false);
        b.add_output(i, w);
    }
    return b.finish();
}

/// Big-M model of one network with objective weight * y_out + c^T x.
/// The default weight is 1/e for the ensemble the network belongs to.
inline MilpModel build_single_network_bigm(const EnsembleModel& model, int net_index, const NeuronBounds& bounds,
                                           const InputBox& box, std::span<const double> extra_linear_objective = {},
                                           double weight = -1.0)
{
    if (net_index < 0 || net_index >= model.size())
        throw ModelBuildError("network index out of range");
    bounds.validate(model);
    detail::BigMBuilder b(model, bounds, box);
    b.add_hidden(net_index, model.networks[net_index].hidden_layers(), false);
    b.add_output(net_index, weight < 0.0 ? 1.0 / static_cast<double>(model.size()) : weight);
    b.add_x_objective(extra_linear_objective);
    return b.finish();
}

enum class BoundDirection { lower, upper };

/// Model over the layers below `neuron` plus its pre-activation column. The objective is
/// always maximized: +h for the upper bound, -h for the lower bound.
inline MilpModel build_bound_subproblem(const EnsembleModel& model, const NeuronId& neuron, BoundDirection direction,
                                        bool relaxed, const NeuronBounds& bounds_so_far, const InputBox& box)
{
    if (neuron.net < 0 || neuron.net >= model.size())
        throw ModelBuildError("network index out of range");
    const auto& net = model.networks[neuron.net];
    if (neuron.layer < 0 || neuron.layer >= static_cast<int>(net.layers.size()) || neuron.index < 0 ||
        neuron.index >= net.layers[neuron.layer].outputs())
        throw ModelBuildError("neuron index out of range");
    bounds_so_far.validate(model, neuron.layer);
    detail::BigMBuilder b(model, bounds_so_far, box);
    b.add_hidden(neuron.net, neuron.layer, relaxed);
    b.add_target(neuron, direction == BoundDirection::upper ? 1.0 : -1.0);
    return b.finish();
}

/// Layers below `layer` of one network plus a free pre-activation column for every
/// neuron of `layer`, with a zero objective. Callers set the objective per neuron.
inline MilpModel build_layer_bound_problem(const EnsembleModel& model, int net, int layer, bool relaxed,
                                           const NeuronBounds& bounds_so_far, const InputBox& box)
{
    bounds_so_far.validate(model, layer);
    detail::BigMBuilder b(model, bounds_so_far, box);
    b.add_hidden(net, layer, relaxed);
    for (int j = 0; j < model.networks[net].layers[layer].outputs(); ++j)
        b.add_target({net, layer, j}, 0.0);
    return b.finish();
}

/// Largest violation of any row or column bound at v.
inline double max_violation(const lp::LpProblem& p, std::span<const double> v)
{
    double worst = 0.0;
    for (int j = 0; j < p.n_cols; ++j)
        worst = std::max({worst, p.col_lo[j] - v[j], v[j] - p.col_hi[j]});
    for (const auto& r : p.rows) {
        double s = 0.0;
        for (std::size_t k = 0; k < r.index.size(); ++k)
            s += r.value[k] * v[r.index[k]];
        if (r.relation != lp::Relation::ge)
            worst = std::max(worst, s - r.rhs);
        if (r.relation != lp::Relation::le)
            worst = std::max(worst, r.rhs - s);
    }
    return worst;
}

/// Column vector obtained by forward evaluation at x, with z set from the activation pattern.
inline std::vector<double> lift_point(const MilpModel& m, const EnsembleModel& model, std::span<const double> x)
{
    std::vector<double> v(static_cast<std::size_t>(m.lp.n_cols), 0.0);
    for (int j = 0; j < model.input_dim; ++j)
        v[m.var_index.x[j]] = x[j];
    for (int i : m.networks) {
        const auto pre = forward_preactivations(model.networks[i], x);
        for (std::size_t k = 0; k < pre.size(); ++k)
            for (Eigen::Index j = 0; j < pre[k].size(); ++j) {
                const NeuronId id{i, static_cast<int>(k), static_cast<int>(j)};
                const double h = pre[k][j];
                if (const int c = m.var_index.H(id); c >= 0)
                    v[c] = h;
                if (const int c = m.var_index.Y(id); c >= 0)
                    v[c] = model.networks[i].is_output_layer(static_cast<int>(k)) ? h : std::max(0.0, h);
                if (const int c = m.var_index.Z(id); c >= 0)
                    v[c] = h > 0.0 ? 1.0 : 0.0;
            }
    }
    return v;
}

/// CPLEX-style LP text for cross-checking with external solvers.
inline void write_lp_text(const MilpModel& m, std::ostream& os)
{
    const auto& p = m.lp;
    auto term = [&](double c, int j, bool first) {
        os << (c < 0 ? " - " : (first ? " " : " + ")) << std::abs(c) << ' ' << m.col_names[j];
    };
    os.precision(17);
    os << (p.sense == lp::Sense::maximize ? "Maximize\n obj:" : "Minimize\n obj:");
    bool first = true;
    for (int j = 0; j < p.n_cols; ++j)
        if (p.objective[j] != 0.0) {
            term(p.objective[j], j, first);
            first = false;
        }
    if (first)
        os << " 0 " << m.col_names.front();
    os << "\nSubject To\n";
    for (int i = 0; i < p.n_rows(); ++i) {
        const auto& r = p.rows[i];
        os << " c" << i << ':';
        for (std::size_t k = 0; k < r.index.size(); ++k)
            term(r.value[k], r.index[k], k == 0);
        os << (r.relation == lp::Relation::le ? " <= " : (r.relation == lp::Relation::ge ? " >= " : " = ")) << r.rhs
           << '\n';
    }
    os << "Bounds\n";
    for (int j = 0; j < p.n_cols; ++j) {
        const double lo = p.col_lo[j], hi = p.col_hi[j];
        if (std::isinf(lo) && std::isinf(hi))
            os << ' ' << m.col_names[j] << " free\n";
        else if (std::isinf(lo))
            os << " -inf <= " << m.col_names[j] << " <= " << hi << '\n';
        else if (std::isinf(hi))
            os << ' ' << m.col_names[j] << " >= " << lo << '\n';
        else
            os << ' ' << lo << " <= " << m.col_names[j] << " <= " << hi << '\n';
    }
    if (!m.binary_cols.empty()) {
        os << "Binaries\n";
        for (int c : m.binary_cols)
            os << ' ' << m.col_names[c] << '\n';
    }
    os << "End\n";
}

} // namespace ennopt

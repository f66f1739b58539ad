#pragma once

// Test-only oracles. Nothing here calls into the code path it is used to check.

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include <functional>

#include "ennopt/formulation.hpp"
#include "ennopt/lp.hpp"
#include "ennopt/model.hpp"

namespace ennopt::oracles {

/// Solves the square system M v = r by Gaussian elimination with partial pivoting.
inline std::optional<std::vector<double>> gauss_solve(std::vector<std::vector<double>> M, std::vector<double> r)
{
    const int n = static_cast<int>(r.size());
    for (int k = 0; k < n; ++k) {
        int p = k;
        for (int i = k + 1; i < n; ++i)
            if (std::abs(M[i][k]) > std::abs(M[p][k]))
                p = i;
        if (std::abs(M[p][k]) < 1e-12)
            return std::nullopt;
        std::swap(M[p], M[k]);
        std::swap(r[p], r[k]);
        for (int i = k + 1; i < n; ++i) {
            const double f = M[i][k] / M[k][k];
            for (int c = k; c < n; ++c)
                M[i][c] -= f * M[k][c];
            r[i] -= f * r[k];
        }
    }
    std::vector<double> v(n);
    for (int i = n - 1; i >= 0; --i) {
        double s = r[i];
        for (int c = i + 1; c < n; ++c)
            s -= M[i][c] * v[c];
        v[i] = s / M[i][i];
    }
    return v;
}

/// Explicit inverse by Gauss-Jordan elimination.
inline std::vector<std::vector<double>> gauss_inverse(std::vector<std::vector<double>> M)
{
    const int n = static_cast<int>(M.size());
    std::vector<std::vector<double>> inv(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i)
        inv[i][i] = 1.0;
    for (int k = 0; k < n; ++k) {
        int p = k;
        for (int i = k + 1; i < n; ++i)
            if (std::abs(M[i][k]) > std::abs(M[p][k]))
                p = i;
        std::swap(M[p], M[k]);
        std::swap(inv[p], inv[k]);
        const double d = M[k][k];
        for (int c = 0; c < n; ++c) {
            M[k][c] /= d;
            inv[k][c] /= d;
        }
        for (int i = 0; i < n; ++i) {
            if (i == k)
                continue;
            const double f = M[i][k];
            for (int c = 0; c < n; ++c) {
                M[i][c] -= f * M[k][c];
                inv[i][c] -= f * inv[k][c];
            }
        }
    }
    return inv;
}

struct VertexResult {
    bool feasible = false;
    double objective = 0.0;
    std::vector<double> x;
};

/// Brute-force LP optimum over a bounded polytope: enumerate every choice of
/// n tight constraints among rows and column bounds, keep feasible vertices.
/// Requires finite column bounds.
inline VertexResult vertex_enumeration(const lp::LpProblem& p)
{
    const int n = p.n_cols;
    struct Face {
        std::vector<double> a;
        double b;
    };
    std::vector<Face> faces;
    for (const auto& r : p.rows) {
        std::vector<double> a(n, 0.0);
        for (std::size_t k = 0; k < r.index.size(); ++k)
            a[r.index[k]] += r.value[k];
        faces.push_back({a, r.rhs});
    }
    for (int j = 0; j < n; ++j) {
        std::vector<double> e(n, 0.0);
        e[j] = 1.0;
        faces.push_back({e, p.col_lo[j]});
        faces.push_back({e, p.col_hi[j]});
    }
    const int F = static_cast<int>(faces.size());
    auto feasible = [&](const std::vector<double>& x) {
        for (int j = 0; j < n; ++j)
            if (x[j] < p.col_lo[j] - 1e-9 || x[j] > p.col_hi[j] + 1e-9)
                return false;
        for (const auto& r : p.rows) {
            double s = 0.0;
            for (std::size_t k = 0; k < r.index.size(); ++k)
                s += r.value[k] * x[r.index[k]];
            if (r.relation == lp::Relation::le && s > r.rhs + 1e-9)
                return false;
            if (r.relation == lp::Relation::ge && s < r.rhs - 1e-9)
                return false;
            if (r.relation == lp::Relation::eq && std::abs(s - r.rhs) > 1e-9)
                return false;
        }
        return true;
    };
    VertexResult best;
    const double sign = p.sense == lp::Sense::maximize ? 1.0 : -1.0;
    std::vector<int> pick(n);
    std::vector<bool> sel(F, false);
    std::fill(sel.begin(), sel.begin() + std::min(n, F), true);
    do {
        std::vector<std::vector<double>> M;
        std::vector<double> r;
        for (int f = 0; f < F; ++f)
            if (sel[f]) {
                M.push_back(faces[f].a);
                r.push_back(faces[f].b);
            }
        auto x = gauss_solve(M, r);
        if (!x || !feasible(*x))
            continue;
        double obj = 0.0;
        for (int j = 0; j < n; ++j)
            obj += p.objective[j] * (*x)[j];
        if (!best.feasible || sign * obj > sign * best.objective) {
            best.feasible = true;
            best.objective = obj;
            best.x = *x;
        }
    } while (std::prev_permutation(sel.begin(), sel.end()));
    return best;
}

/// Random bounded LP with at most `max_cols` columns and `max_rows` rows.
inline lp::LpProblem random_lp(std::mt19937_64& rng, int max_cols = 6, int max_rows = 6)
{
    std::uniform_int_distribution<int> ncol(1, max_cols), nrow(1, max_rows), rel(0, 4);
    std::uniform_real_distribution<double> coef(-5.0, 5.0), lo(-3.0, 0.0), width(0.5, 4.0);
    lp::LpProblem p;
    p.sense = rng() % 2 ? lp::Sense::maximize : lp::Sense::minimize;
    const int n = ncol(rng), m = nrow(rng);
    for (int j = 0; j < n; ++j) {
        const double l = lo(rng);
        p.add_col(l, l + width(rng), coef(rng));
    }
    for (int i = 0; i < m; ++i) {
        std::vector<int> idx;
        std::vector<double> val;
        for (int j = 0; j < n; ++j)
            if (rng() % 3 != 0) {
                idx.push_back(j);
                val.push_back(coef(rng));
            }
        const int r = rel(rng);
        const lp::Relation relation = r < 2 ? lp::Relation::le : (r < 4 ? lp::Relation::ge : lp::Relation::eq);
        // rhs chosen so a random interior-ish point is often feasible
        double s = 0.0;
        for (std::size_t k = 0; k < idx.size(); ++k)
            s += val[k] * (p.col_lo[idx[k]] + p.col_hi[idx[k]]) * 0.5;
        const double slack = std::uniform_real_distribution<double>(-1.0, 3.0)(rng);
        const double rhs = relation == lp::Relation::le ? s + slack : (relation == lp::Relation::ge ? s - slack : s);
        p.add_row(idx, val, relation, rhs);
    }
    return p;
}

/// Largest violation of complementary slackness and of dual sign conditions.
inline double complementarity_violation(const lp::LpProblem& p, const lp::LpSolution& s)
{
    const double sense = p.sense == lp::Sense::maximize ? 1.0 : -1.0;
    double worst = 0.0;
    for (int i = 0; i < p.n_rows(); ++i) {
        const auto& r = p.rows[i];
        double act = 0.0;
        for (std::size_t k = 0; k < r.index.size(); ++k)
            act += r.value[k] * s.x[r.index[k]];
        const double y = sense * s.row_duals[i];
        worst = std::max(worst, std::abs(y * (r.rhs - act)));
        if (r.relation == lp::Relation::le)
            worst = std::max(worst, -y);
        if (r.relation == lp::Relation::ge)
            worst = std::max(worst, y);
    }
    for (int j = 0; j < p.n_cols; ++j) {
        const double d = sense * s.reduced_costs[j];
        const double dl = s.x[j] - p.col_lo[j], du = p.col_hi[j] - s.x[j];
        if (d > 0)
            worst = std::max(worst, std::abs(d) * (std::isfinite(du) ? du : 1e300));
        if (d < 0)
            worst = std::max(worst, std::abs(d) * (std::isfinite(dl) ? dl : 1e300));
    }
    return worst;
}

/// Dual objective assembled from row duals and reduced costs.
inline double dual_objective(const lp::LpProblem& p, const lp::LpSolution& s)
{
    double v = 0.0;
    for (int i = 0; i < p.n_rows(); ++i)
        v += s.row_duals[i] * p.rows[i].rhs;
    for (int j = 0; j < p.n_cols; ++j) {
        const double d = s.reduced_costs[j];
        if (d == 0.0)
            continue;
        const double dl = std::abs(s.x[j] - p.col_lo[j]), du = std::abs(p.col_hi[j] - s.x[j]);
        v += d * (dl <= du ? p.col_lo[j] : p.col_hi[j]);
    }
    return v;
}

/// Affine function of the input: a^T x + c.
struct Affine {
    std::vector<double> a;
    double c = 0.0;
    double operator()(const std::vector<double>& x) const
    {
        double s = c;
        for (std::size_t j = 0; j < a.size(); ++j)
            s += a[j] * x[j];
        return s;
    }
};

/// Pre-activation of every neuron as an affine function of x, valid inside one activation region.
using PatternForms = std::vector<std::vector<std::vector<Affine>>>; // [net][layer][neuron]

struct PatternOptimum {
    bool feasible = false;
    double value = -1e300;
    std::vector<double> x;
};

/// Maximizes objective(forms) over the box by enumerating on/off patterns of every hidden
/// neuron and solving each region's LP. Independent of the formulation code.
inline PatternOptimum enumerate_regions(const EnsembleModel& model, const InputBox& box,
                                        const std::function<Affine(const PatternForms&)>& objective)
{
    const int n = model.input_dim;
    std::vector<std::pair<int, int>> hidden; // (net, layer) per hidden neuron slot
    int N = 0;
    for (const auto& net : model.networks)
        for (int k = 0; k + 1 < static_cast<int>(net.layers.size()); ++k)
            N += net.layers[k].outputs();
    if (N > 16)
        throw std::runtime_error("enumerate_regions: too many neurons");
    PatternOptimum best;
    for (long mask = 0; mask < (1L << N); ++mask) {
        PatternForms forms(model.networks.size());
        lp::LpProblem p;
        p.sense = lp::Sense::maximize;
        for (int j = 0; j < n; ++j)
            p.add_col(box.lo[j], box.hi[j], 0.0);
        int bit = 0;
        for (std::size_t i = 0; i < model.networks.size(); ++i) {
            const auto& net = model.networks[i];
            std::vector<Affine> prev;
            for (int j = 0; j < n; ++j) {
                Affine e{std::vector<double>(n, 0.0), 0.0};
                e.a[j] = 1.0;
                prev.push_back(e);
            }
            for (std::size_t k = 0; k < net.layers.size(); ++k) {
                const auto& L = net.layers[k];
                std::vector<Affine> h(L.outputs(), Affine{std::vector<double>(n, 0.0), 0.0});
                for (int r = 0; r < L.outputs(); ++r) {
                    h[r].c = L.b[r];
                    for (int c = 0; c < L.inputs(); ++c) {
                        for (int j = 0; j < n; ++j)
                            h[r].a[j] += L.W(r, c) * prev[c].a[j];
                        h[r].c += L.W(r, c) * prev[c].c;
                    }
                }
                forms[i].push_back(h);
                if (k + 1 == net.layers.size())
                    break;
                std::vector<Affine> next;
                for (int r = 0; r < L.outputs(); ++r) {
                    const bool on = (mask >> bit++) & 1;
                    std::vector<int> idx(n);
                    for (int j = 0; j < n; ++j)
                        idx[j] = j;
                    p.add_row(idx, h[r].a, on ? lp::Relation::ge : lp::Relation::le, -h[r].c);
                    next.push_back(on ? h[r] : Affine{std::vector<double>(n, 0.0), 0.0});
                }
                prev = next;
            }
        }
        const Affine obj = objective(forms);
        p.objective = obj.a;
        VertexResult v;
        if (n <= 2) {
            v = vertex_enumeration(p);
        } else {
            // the LP kernel is checked against vertex enumeration in its own tests
            const auto s = lp::solve_lp(p);
            v = {s.status == lp::LpStatus::optimal, s.objective, s.x};
        }
        if (v.feasible && v.objective + obj.c > best.value) {
            best.feasible = true;
            best.value = v.objective + obj.c;
            best.x = v.x;
        }
    }
    return best;
}

/// Exact maximum of the ensemble mean over the box.
inline PatternOptimum exact_ensemble_max(const EnsembleModel& model, const InputBox& box)
{
    const double e = static_cast<double>(model.networks.size());
    return enumerate_regions(model, box, [&](const PatternForms& f) {
        Affine o{std::vector<double>(model.input_dim, 0.0), 0.0};
        for (const auto& net : f) {
            const auto& out = net.back()[0];
            for (int j = 0; j < model.input_dim; ++j)
                o.a[j] += out.a[j] / e;
            o.c += out.c / e;
        }
        return o;
    });
}

/// Exact range [min, max] of one neuron's pre-activation over the box.
inline std::pair<double, double> exact_neuron_range(const EnsembleModel& model, const InputBox& box, NeuronId id)
{
    auto pick = [&](double sign) {
        return enumerate_regions(model, box, [&](const PatternForms& f) {
            Affine o = f[id.net][id.layer][id.index];
            for (auto& a : o.a)
                a *= sign;
            o.c *= sign;
            return o;
        });
    };
    return {-pick(-1.0).value, pick(1.0).value};
}

/// Textbook interval propagation on post-activation ranges.
inline NeuronBounds naive_interval_bounds(const EnsembleModel& model, const InputBox& box)
{
    auto b = NeuronBounds::shaped_like(model);
    for (std::size_t i = 0; i < model.networks.size(); ++i) {
        std::vector<double> lo = box.lo, hi = box.hi;
        const auto& net = model.networks[i];
        for (std::size_t k = 0; k < net.layers.size(); ++k) {
            const auto& L = net.layers[k];
            std::vector<double> nlo(L.outputs()), nhi(L.outputs());
            for (int r = 0; r < L.outputs(); ++r) {
                double a = L.b[r], c = L.b[r];
                for (int q = 0; q < L.inputs(); ++q) {
                    const double w = L.W(r, q);
                    a += std::min(w * lo[q], w * hi[q]);
                    c += std::max(w * lo[q], w * hi[q]);
                }
                b.set({static_cast<int>(i), static_cast<int>(k), r}, a, c, BoundMethod::interval);
                nlo[r] = std::max(0.0, a);
                nhi[r] = std::max(0.0, c);
            }
            lo = nlo;
            hi = nhi;
        }
    }
    return b;
}

inline Network random_network(std::mt19937_64& rng, int n, const std::vector<int>& widths, double scale = 1.0)
{
    std::normal_distribution<double> g(0.0, scale);
    Network net;
    int prev = n;
    auto all = widths;
    all.push_back(1);
    for (int w : all) {
        LayerWeights L;
        L.W = Eigen::MatrixXd(w, prev);
        L.b = Eigen::VectorXd(w);
        for (int r = 0; r < w; ++r) {
            for (int c = 0; c < prev; ++c)
                L.W(r, c) = g(rng);
            L.b[r] = 0.5 * g(rng);
        }
        net.layers.push_back(L);
        prev = w;
    }
    return net;
}

inline EnsembleModel random_ensemble(std::mt19937_64& rng, int n, int e, const std::vector<int>& widths)
{
    EnsembleModel m;
    m.input_dim = n;
    m.box = InputBox::unit(n);
    m.scaler = Scaler::identity(n);
    for (int i = 0; i < e; ++i)
        m.networks.push_back(random_network(rng, n, widths));
    return m;
}

} // namespace ennopt::oracles

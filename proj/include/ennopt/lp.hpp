#pragma once

// Dense bounded-variable revised simplex.
//
// Every row i gets a logical column r_i = a_i^T x whose bounds encode the
// relation (<=: (-inf, rhs], >=: [rhs, inf), =: [rhs, rhs]), so the working
// system is A x - r = 0 with box bounds on all n + m variables. Phase one
// minimizes the sum of basic infeasibilities with a per-iteration cost vector;
// a warm basis that has become primal infeasible after a bound change is
// handled by the same composite loop.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ennopt/common.hpp"

namespace ennopt::lp {

enum class Sense { maximize, minimize };
enum class Relation { le, eq, ge };

struct Row {
    std::vector<int> index;
    std::vector<double> value;
    Relation relation = Relation::le;
    double rhs = 0.0;
};

struct LpProblem {
    int n_cols = 0;
    std::vector<double> col_lo;
    std::vector<double> col_hi;
    std::vector<double> objective;
    Sense sense = Sense::maximize;
    std::vector<Row> rows;

    int add_col(double lo, double hi, double obj = 0.0)
    {
        col_lo.push_back(lo);
        col_hi.push_back(hi);
        objective.push_back(obj);
        return n_cols++;
    }

    int add_row(std::vector<int> index, std::vector<double> value, Relation rel, double rhs)
    {
        rows.push_back(Row{std::move(index), std::move(value), rel, rhs});
        return static_cast<int>(rows.size()) - 1;
    }

    int n_rows() const { return static_cast<int>(rows.size()); }

    void validate() const
    {
        if (static_cast<int>(col_lo.size()) != n_cols || static_cast<int>(col_hi.size()) != n_cols ||
            static_cast<int>(objective.size()) != n_cols)
            throw ShapeError("LpProblem: column arrays do not match n_cols");
        for (int j = 0; j < n_cols; ++j) {
            if (std::isnan(col_lo[j]) || std::isnan(col_hi[j]) || col_lo[j] > col_hi[j])
                throw ShapeError("LpProblem: invalid bounds on column " + std::to_string(j));
            if (!std::isfinite(objective[j]))
                throw ShapeError("LpProblem: non-finite objective on column " + std::to_string(j));
        }
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const Row& r = rows[i];
            if (r.index.size() != r.value.size())
                throw ShapeError("LpProblem: row " + std::to_string(i) + " index/value length mismatch");
            if (!std::isfinite(r.rhs))
                throw ShapeError("LpProblem: non-finite rhs on row " + std::to_string(i));
            for (std::size_t k = 0; k < r.index.size(); ++k) {
                if (r.index[k] < 0 || r.index[k] >= n_cols)
                    throw ShapeError("LpProblem: row " + std::to_string(i) + " references column out of range");
                if (!std::isfinite(r.value[k]))
                    throw ShapeError("LpProblem: non-finite coefficient in row " + std::to_string(i));
            }
        }
    }
};

enum class LpStatus { optimal, infeasible, unbounded, iteration_limit };

inline const char* to_string(LpStatus s)
{
    switch (s) {
    case LpStatus::optimal: return "optimal";
    case LpStatus::infeasible: return "infeasible";
    case LpStatus::unbounded: return "unbounded";
    case LpStatus::iteration_limit: return "iteration_limit";
    }
    return "?";
}

enum class VarState : std::uint8_t { basic, at_lower, at_upper, at_zero };

struct Basis {
    std::vector<VarState> cols;
    std::vector<VarState> rows;
    bool empty() const { return cols.empty() && rows.empty(); }
};

struct LpSolution {
    LpStatus status = LpStatus::infeasible;
    std::vector<double> x;
    double objective = 0.0;
    /// d(objective)/d(rhs_i) in the problem's own sense.
    std::vector<double> row_duals;
    /// d(objective)/d(x_j) along the nonbasic column j; zero for basic columns.
    std::vector<double> reduced_costs;
    std::vector<double> row_activity;
    Basis basis;
    int iterations = 0;
    bool warm_started = false;
};

struct LpOptions {
    int iteration_limit = 50000;
    int bland_after_degenerate = 500;
    int refactor_every = 100;
    double tol = kTol;
};

namespace detail {

class Simplex {
public:
    Simplex(const LpProblem& p, const LpOptions& opt) : p_(p), opt_(opt)
    {
        m_ = p.n_rows();
        n_ = p.n_cols;
        N_ = n_ + m_;
        primal_tol_ = opt.tol * 1e-2;
        dual_tol_ = opt.tol;
        a_.assign(static_cast<std::size_t>(m_) * n_, 0.0);
        for (int i = 0; i < m_; ++i) {
            const Row& r = p.rows[i];
            for (std::size_t k = 0; k < r.index.size(); ++k)
                a_[static_cast<std::size_t>(r.index[k]) * m_ + i] += r.value[k];
        }
        lo_.resize(N_);
        hi_.resize(N_);
        cost_.assign(N_, 0.0);
        const double sign = p.sense == Sense::maximize ? -1.0 : 1.0;
        for (int j = 0; j < n_; ++j) {
            lo_[j] = p.col_lo[j];
            hi_[j] = p.col_hi[j];
            cost_[j] = sign * p.objective[j];
        }
        for (int i = 0; i < m_; ++i) {
            const Row& r = p.rows[i];
            lo_[n_ + i] = r.relation == Relation::le ? -kInf : r.rhs;
            hi_[n_ + i] = r.relation == Relation::ge ? kInf : r.rhs;
        }
        state_.assign(N_, VarState::at_lower);
        x_.assign(N_, 0.0);
        head_.assign(m_, -1);
        pos_.assign(N_, -1);
    }

    void cold_basis()
    {
        for (int j = 0; j < n_; ++j)
            state_[j] = default_state(j);
        for (int i = 0; i < m_; ++i)
            set_basic(i, n_ + i);
    }

    bool warm_basis(const Basis& hint)
    {
        if (static_cast<int>(hint.cols.size()) != n_ || static_cast<int>(hint.rows.size()) > m_)
            return false;
        std::vector<VarState> st(N_);
        for (int j = 0; j < n_; ++j)
            st[j] = hint.cols[j];
        for (int i = 0; i < m_; ++i)
            st[n_ + i] = i < static_cast<int>(hint.rows.size()) ? hint.rows[i] : VarState::basic;
        int nb = 0;
        for (int j = 0; j < N_; ++j)
            nb += st[j] == VarState::basic;
        if (nb != m_)
            return false;
        int k = 0;
        for (int j = 0; j < N_; ++j) {
            if (st[j] == VarState::basic) {
                set_basic(k++, j);
            } else {
                state_[j] = sanitize(j, st[j]);
            }
        }
        return true;
    }

    LpSolution run(bool warm)
    {
        LpSolution sol;
        sol.warm_started = warm;
        set_nonbasic_values();
        factorize();
        compute_basic_values();

        int iter = 0;
        int degenerate = 0;
        bool bland = false;
        LpStatus status = LpStatus::iteration_limit;
        std::vector<double> y(m_), alpha(m_), col(m_), cb(m_);
        std::vector<double> d(N_, 0.0);

        while (iter < opt_.iteration_limit) {
            if (static_cast<int>(etas_.size()) >= opt_.refactor_every) {
                factorize();
                compute_basic_values();
            }
            const bool phase1 = load_phase_costs(cb);
            y = cb;
            btran(y);

            // pricing
            int q = -1;
            double best = 0.0;
            for (int j = 0; j < N_; ++j) {
                if (state_[j] == VarState::basic || lo_[j] == hi_[j])
                    continue;
                const double dj = (phase1 ? 0.0 : cost_[j]) - dot_column(j, y);
                d[j] = dj;
                bool eligible = false;
                switch (state_[j]) {
                case VarState::at_lower: eligible = dj < -dual_tol_; break;
                case VarState::at_upper: eligible = dj > dual_tol_; break;
                case VarState::at_zero: eligible = std::abs(dj) > dual_tol_; break;
                default: break;
                }
                if (!eligible)
                    continue;
                if (bland) {
                    q = j;
                    break;
                }
                if (std::abs(dj) > best) {
                    best = std::abs(dj);
                    q = j;
                }
            }

            if (q < 0) {
                // Verify on a fresh factorization before declaring a terminal status.
                if (!etas_.empty()) {
                    factorize();
                    compute_basic_values();
                    if (load_phase_costs(cb) != phase1)
                        continue;
                    if (!verify_no_candidate(cb))
                        continue;
                }
                status = phase1 ? LpStatus::infeasible : LpStatus::optimal;
                break;
            }

            const double dir = d[q] < 0.0 ? 1.0 : -1.0;
            load_column(q, alpha);
            ftran(alpha);

            // ratio test
            int leave = -1;
            double leave_bound = 0.0;
            double step = kInf;
            if (bland) {
                ratio_textbook(alpha, dir, phase1, leave, leave_bound, step);
            } else {
                ratio_harris(alpha, dir, phase1, leave, leave_bound, step);
            }
            const double range = hi_[q] - lo_[q];
            const bool flip = state_[q] != VarState::at_zero && range <= step;
            if (flip)
                step = range;

            if (!std::isfinite(step)) {
                if (phase1) {
                    // Cannot happen with exact arithmetic; refactor and retry.
                    factorize();
                    compute_basic_values();
                    ++iter;
                    continue;
                }
                status = LpStatus::unbounded;
                break;
            }

            if (step <= 1e-12) {
                if (++degenerate > opt_.bland_after_degenerate)
                    bland = true;
            } else {
                degenerate = 0;
            }

            x_[q] += dir * step;
            for (int i = 0; i < m_; ++i)
                x_[head_[i]] -= dir * step * alpha[i];

            if (flip) {
                state_[q] = state_[q] == VarState::at_lower ? VarState::at_upper : VarState::at_lower;
                x_[q] = state_[q] == VarState::at_lower ? lo_[q] : hi_[q];
            } else {
                const int out = head_[leave];
                x_[out] = leave_bound;
                pos_[out] = -1;
                state_[out] = (leave_bound == lo_[out]) ? VarState::at_lower : VarState::at_upper;
                if (lo_[out] == hi_[out])
                    state_[out] = VarState::at_lower;
                head_[leave] = q;
                pos_[q] = leave;
                state_[q] = VarState::basic;
                push_eta(leave, alpha);
            }
            ++iter;
        }

        sol.status = status;
        sol.iterations = iter;
        fill_solution(sol);
        return sol;
    }

private:
    struct Eta {
        int r;
        std::vector<double> col;
    };

    VarState default_state(int j) const
    {
        if (std::isfinite(lo_[j]))
            return VarState::at_lower;
        if (std::isfinite(hi_[j]))
            return VarState::at_upper;
        return VarState::at_zero;
    }

    VarState sanitize(int j, VarState s) const
    {
        if (s == VarState::at_lower && std::isfinite(lo_[j]))
            return s;
        if (s == VarState::at_upper && std::isfinite(hi_[j]))
            return s;
        if (s == VarState::at_zero && !std::isfinite(lo_[j]) && !std::isfinite(hi_[j]))
            return s;
        return default_state(j);
    }

    void set_basic(int k, int j)
    {
        head_[k] = j;
        pos_[j] = k;
        state_[j] = VarState::basic;
    }

    void set_nonbasic_values()
    {
        for (int j = 0; j < N_; ++j) {
            switch (state_[j]) {
            case VarState::at_lower: x_[j] = lo_[j]; break;
            case VarState::at_upper: x_[j] = hi_[j]; break;
            case VarState::at_zero: x_[j] = 0.0; break;
            default: break;
            }
        }
    }

    double dot_column(int j, const std::vector<double>& v) const
    {
        if (j >= n_)
            return -v[j - n_];
        const double* c = &a_[static_cast<std::size_t>(j) * m_];
        double s = 0.0;
        for (int i = 0; i < m_; ++i)
            s += c[i] * v[i];
        return s;
    }

    void load_column(int j, std::vector<double>& out) const
    {
        if (j >= n_) {
            std::fill(out.begin(), out.end(), 0.0);
            out[j - n_] = -1.0;
            return;
        }
        const double* c = &a_[static_cast<std::size_t>(j) * m_];
        std::copy(c, c + m_, out.begin());
    }

    // Dense LU with partial pivoting of the current basis. Dependent columns
    // are swapped for logicals of unpivoted rows until the basis is regular.
    void factorize()
    {
        etas_.clear();
        for (int attempt = 0; attempt <= m_; ++attempt) {
            lu_.assign(static_cast<std::size_t>(m_) * m_, 0.0);
            std::vector<double> col(m_);
            for (int k = 0; k < m_; ++k) {
                load_column(head_[k], col);
                for (int i = 0; i < m_; ++i)
                    lu_[static_cast<std::size_t>(i) * m_ + k] = col[i];
            }
            perm_.resize(m_);
            std::iota(perm_.begin(), perm_.end(), 0);
            int bad = -1;
            for (int k = 0; k < m_; ++k) {
                int p = k;
                double mx = std::abs(lu_at(k, k));
                for (int i = k + 1; i < m_; ++i) {
                    const double v = std::abs(lu_at(i, k));
                    if (v > mx) {
                        mx = v;
                        p = i;
                    }
                }
                if (mx < 1e-11) {
                    bad = k;
                    break;
                }
                if (p != k) {
                    for (int c = 0; c < m_; ++c)
                        std::swap(lu_at(k, c), lu_at(p, c));
                    std::swap(perm_[k], perm_[p]);
                }
                const double piv = lu_at(k, k);
                for (int i = k + 1; i < m_; ++i) {
                    double& l = lu_at(i, k);
                    if (l == 0.0)
                        continue;
                    l /= piv;
                    const double* urow = &lu_[static_cast<std::size_t>(k) * m_];
                    double* row = &lu_[static_cast<std::size_t>(i) * m_];
                    for (int c = k + 1; c < m_; ++c)
                        row[c] -= l * urow[c];
                }
            }
            if (bad < 0)
                return;
            // Replace the dependent column with the logical of an unpivoted row.
            std::vector<char> covered(m_, 0);
            for (int k = 0; k < bad; ++k)
                covered[perm_[k]] = 1;
            int row = -1;
            for (int i = bad; i < m_ && row < 0; ++i)
                if (pos_[n_ + perm_[i]] < 0)
                    row = perm_[i];
            if (row < 0)
                throw NumericError("simplex: basis repair failed");
            const int out = head_[bad];
            pos_[out] = -1;
            state_[out] = default_state(out);
            if (std::isfinite(lo_[out]) && std::isfinite(hi_[out]))
                state_[out] = std::abs(x_[out] - hi_[out]) < std::abs(x_[out] - lo_[out]) ? VarState::at_upper
                                                                                         : VarState::at_lower;
            set_nonbasic_value(out);
            set_basic(bad, n_ + row);
            log().trace("simplex: replaced dependent basic column {} by logical {}", out, row);
        }
        throw NumericError("simplex: persistent singular basis");
    }

    void set_nonbasic_value(int j)
    {
        switch (state_[j]) {
        case VarState::at_lower: x_[j] = lo_[j]; break;
        case VarState::at_upper: x_[j] = hi_[j]; break;
        case VarState::at_zero: x_[j] = 0.0; break;
        default: break;
        }
    }

    double& lu_at(int i, int j) { return lu_[static_cast<std::size_t>(i) * m_ + j]; }
    double lu_at(int i, int j) const { return lu_[static_cast<std::size_t>(i) * m_ + j]; }

    void lu_solve(std::vector<double>& b) const
    {
        std::vector<double> t(m_);
        for (int i = 0; i < m_; ++i)
            t[i] = b[perm_[i]];
        for (int i = 0; i < m_; ++i) {
            double s = t[i];
            const double* row = &lu_[static_cast<std::size_t>(i) * m_];
            for (int k = 0; k < i; ++k)
                s -= row[k] * t[k];
            t[i] = s;
        }
        for (int i = m_ - 1; i >= 0; --i) {
            double s = t[i];
            const double* row = &lu_[static_cast<std::size_t>(i) * m_];
            for (int k = i + 1; k < m_; ++k)
                s -= row[k] * t[k];
            t[i] = s / row[i];
        }
        b = std::move(t);
    }

    void lu_solve_transposed(std::vector<double>& c) const
    {
        std::vector<double> v = c;
        // U^T v = c
        for (int i = 0; i < m_; ++i) {
            v[i] /= lu_at(i, i);
            const double vi = v[i];
            if (vi == 0.0)
                continue;
            const double* row = &lu_[static_cast<std::size_t>(i) * m_];
            for (int k = i + 1; k < m_; ++k)
                v[k] -= row[k] * vi;
        }
        // L^T w = v
        for (int i = m_ - 1; i >= 0; --i) {
            const double wi = v[i];
            if (wi == 0.0)
                continue;
            const double* row = &lu_[static_cast<std::size_t>(i) * m_];
            for (int k = 0; k < i; ++k)
                v[k] -= row[k] * wi;
        }
        for (int i = 0; i < m_; ++i)
            c[perm_[i]] = v[i];
    }

    void ftran(std::vector<double>& b) const
    {
        lu_solve(b);
        for (const Eta& e : etas_) {
            const double xr = b[e.r] / e.col[e.r];
            if (xr != 0.0)
                for (int i = 0; i < m_; ++i)
                    b[i] -= e.col[i] * xr;
            b[e.r] = xr;
        }
    }

    void btran(std::vector<double>& c) const
    {
        for (auto it = etas_.rbegin(); it != etas_.rend(); ++it) {
            double s = c[it->r];
            for (int i = 0; i < m_; ++i)
                if (i != it->r)
                    s -= c[i] * it->col[i];
            c[it->r] = s / it->col[it->r];
        }
        lu_solve_transposed(c);
    }

    void push_eta(int r, const std::vector<double>& alpha) { etas_.push_back(Eta{r, alpha}); }

    void compute_basic_values()
    {
        std::vector<double> rhs(m_, 0.0);
        for (int j = 0; j < N_; ++j) {
            if (state_[j] == VarState::basic || x_[j] == 0.0)
                continue;
            if (j >= n_) {
                rhs[j - n_] += x_[j];
            } else {
                const double* c = &a_[static_cast<std::size_t>(j) * m_];
                for (int i = 0; i < m_; ++i)
                    rhs[i] -= c[i] * x_[j];
            }
        }
        ftran(rhs);
        for (int k = 0; k < m_; ++k)
            x_[head_[k]] = rhs[k];
    }

    // Returns true when phase one costs are in effect.
    bool load_phase_costs(std::vector<double>& cb) const
    {
        bool infeasible = false;
        for (int k = 0; k < m_; ++k) {
            const int j = head_[k];
            if (x_[j] < lo_[j] - primal_tol_ || x_[j] > hi_[j] + primal_tol_) {
                infeasible = true;
                break;
            }
        }
        for (int k = 0; k < m_; ++k) {
            const int j = head_[k];
            if (infeasible) {
                cb[k] = x_[j] < lo_[j] - primal_tol_ ? -1.0 : (x_[j] > hi_[j] + primal_tol_ ? 1.0 : 0.0);
            } else {
                cb[k] = cost_[j];
            }
        }
        return infeasible;
    }

    bool verify_no_candidate(const std::vector<double>& cb) const
    {
        const bool phase1 = has_infeasible_basic();
        std::vector<double> y = cb;
        btran(y);
        for (int j = 0; j < N_; ++j) {
            if (state_[j] == VarState::basic || lo_[j] == hi_[j])
                continue;
            const double dj = (phase1 ? 0.0 : cost_[j]) - dot_column(j, y);
            if ((state_[j] == VarState::at_lower && dj < -dual_tol_) ||
                (state_[j] == VarState::at_upper && dj > dual_tol_) ||
                (state_[j] == VarState::at_zero && std::abs(dj) > dual_tol_))
                return false;
        }
        return true;
    }

    bool has_infeasible_basic() const
    {
        for (int k = 0; k < m_; ++k) {
            const int j = head_[k];
            if (x_[j] < lo_[j] - primal_tol_ || x_[j] > hi_[j] + primal_tol_)
                return true;
        }
        return false;
    }

    // Limit imposed on basic position i when x_B changes at rate g per unit step.
    // Returns false when the position imposes no limit.
    bool row_limit(int i, double g, bool phase1, double& bound, double& ratio, double relax) const
    {
        const int j = head_[i];
        const double v = x_[j];
        if (g < 0.0) {
            if (phase1 && v > hi_[j] + primal_tol_) {
                bound = hi_[j];
            } else if (v >= lo_[j] - primal_tol_ && std::isfinite(lo_[j])) {
                bound = lo_[j];
            } else {
                return false;
            }
            ratio = (v - bound + relax) / (-g);
        } else {
            if (phase1 && v < lo_[j] - primal_tol_) {
                bound = lo_[j];
            } else if (v <= hi_[j] + primal_tol_ && std::isfinite(hi_[j])) {
                bound = hi_[j];
            } else {
                return false;
            }
            ratio = (bound - v + relax) / g;
        }
        if (ratio < 0.0)
            ratio = 0.0;
        return true;
    }

    void ratio_harris(const std::vector<double>& alpha, double dir, bool phase1, int& leave, double& leave_bound,
                      double& step) const
    {
        const double relax = primal_tol_;
        double tmax = kInf;
        for (int i = 0; i < m_; ++i) {
            if (std::abs(alpha[i]) < 1e-9)
                continue;
            const double g = -dir * alpha[i];
            double b, r;
            if (row_limit(i, g, phase1, b, r, relax))
                tmax = std::min(tmax, r);
        }
        if (!std::isfinite(tmax)) {
            step = kInf;
            return;
        }
        double best_piv = 0.0;
        for (int i = 0; i < m_; ++i) {
            if (std::abs(alpha[i]) < 1e-9)
                continue;
            const double g = -dir * alpha[i];
            double b, r;
            if (!row_limit(i, g, phase1, b, r, 0.0))
                continue;
            if (r <= tmax && std::abs(alpha[i]) > best_piv) {
                best_piv = std::abs(alpha[i]);
                leave = i;
                leave_bound = b;
                step = r;
            }
        }
        if (leave < 0)
            step = kInf;
    }

    void ratio_textbook(const std::vector<double>& alpha, double dir, bool phase1, int& leave,
                        double& leave_bound, double& step) const
    {
        step = kInf;
        for (int i = 0; i < m_; ++i) {
            if (std::abs(alpha[i]) < 1e-9)
                continue;
            const double g = -dir * alpha[i];
            double b, r;
            if (!row_limit(i, g, phase1, b, r, 0.0))
                continue;
            if (r < step - 1e-12 || (r <= step + 1e-12 && leave >= 0 && head_[i] < head_[leave])) {
                step = std::min(step, r);
                leave = i;
                leave_bound = b;
            }
        }
    }

    void fill_solution(LpSolution& sol)
    {
        // fresh values for reporting
        if (!etas_.empty()) {
            factorize();
            compute_basic_values();
        }
        sol.x.assign(x_.begin(), x_.begin() + n_);
        sol.row_activity.assign(x_.begin() + n_, x_.end());
        sol.basis.cols.assign(state_.begin(), state_.begin() + n_);
        sol.basis.rows.assign(state_.begin() + n_, state_.end());
        const double sign = p_.sense == Sense::maximize ? -1.0 : 1.0;
        double obj = 0.0;
        for (int j = 0; j < n_; ++j)
            obj += p_.objective[j] * sol.x[j];
        sol.objective = obj;
        sol.row_duals.assign(m_, 0.0);
        sol.reduced_costs.assign(n_, 0.0);
        if (sol.status != LpStatus::optimal)
            return;
        std::vector<double> y(m_);
        for (int k = 0; k < m_; ++k)
            y[k] = cost_[head_[k]];
        btran(y);
        for (int i = 0; i < m_; ++i)
            sol.row_duals[i] = state_[n_ + i] == VarState::basic ? 0.0 : sign * y[i];
        for (int j = 0; j < n_; ++j)
            sol.reduced_costs[j] = state_[j] == VarState::basic ? 0.0 : sign * (cost_[j] - dot_column(j, y));
    }

    const LpProblem& p_;
    LpOptions opt_;
    int m_ = 0, n_ = 0, N_ = 0;
    double primal_tol_ = 1e-9, dual_tol_ = 1e-7;
    std::vector<double> a_;
    std::vector<double> lo_, hi_, cost_;
    std::vector<VarState> state_;
    std::vector<double> x_;
    std::vector<int> head_, pos_;
    std::vector<double> lu_;
    std::vector<int> perm_;
    std::vector<Eta> etas_;
};

inline bool trivially_infeasible(const LpProblem& p)
{
    for (int j = 0; j < p.n_cols; ++j)
        if (p.col_lo[j] > p.col_hi[j])
            return true;
    return false;
}

} // namespace detail

/// Solves the LP from the all-logical basis.
inline LpSolution solve_lp(const LpProblem& p, const LpOptions& opt = {})
{
    p.validate();
    detail::Simplex s(p, opt);
    s.cold_basis();
    return s.run(false);
}

/// Solves the LP starting from a basis of a structurally identical problem.
/// Extra trailing rows in `p` (appended cuts) enter with their logicals basic.
/// An unusable hint falls back to a cold start.
inline LpSolution warm_start_solve(const LpProblem& p, const Basis& hint, const LpOptions& opt = {})
{
    p.validate();
    {
        detail::Simplex s(p, opt);
        if (s.warm_basis(hint)) {
            try {
                return s.run(true);
            } catch (const NumericError& e) {
                log().info("warm start failed ({}); cold restart", e.what());
            }
        } else {
            log().trace("warm start hint rejected; cold restart");
        }
    }
    return solve_lp(p, opt);
}

} // namespace ennopt::lp

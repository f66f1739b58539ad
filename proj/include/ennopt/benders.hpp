#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "ennopt/bnb.hpp"
#include "ennopt/common.hpp"
#include "ennopt/formulation.hpp"
#include "ennopt/lp.hpp"

namespace ennopt {

/// Duals of the LP obtained by fixing z. Signs are normalized so that pi is the
/// multiplier of h-definition rows, alpha and beta are nonnegative multipliers of
/// y <= h - LB(1-z) and y <= UB z.
struct DualPoint {
    std::vector<double> pi;    // affine and output rows, in row order
    std::vector<double> alpha; // relu_upper rows
    std::vector<double> beta;  // relu_on rows
    std::vector<double> aux;   // zero-rhs rows: relu_lower and pass_through
    std::vector<double> z;     // generating binary vector
    double lp_objective = 0.0;
    std::vector<double> lp_solution; // primal optimum of the fixed-z LP
};

/// Solves the model LP with z fixed at zbar. Returns nothing when that LP is infeasible.
inline std::optional<DualPoint> extract_dual_point(const MilpModel& m, std::span<const double> zbar)
{
    if (zbar.size() != m.binary_cols.size())
        throw ShapeError("extract_dual_point: z has wrong length");
    lp::LpProblem p = m.lp;
    p.rows.resize(m.row_tags.size()); // cut rows are not part of the formulation
    for (std::size_t k = 0; k < zbar.size(); ++k)
        p.col_lo[m.binary_cols[k]] = p.col_hi[m.binary_cols[k]] = std::round(zbar[k]);
    const auto s = lp::solve_lp(p);
    if (s.status != lp::LpStatus::optimal)
        return std::nullopt;
    DualPoint d;
    for (std::size_t r = 0; r < m.row_tags.size(); ++r) {
        double y = s.row_duals[r];
        if (p.rows[r].relation == lp::Relation::le)
            y = std::max(0.0, y);
        else if (p.rows[r].relation == lp::Relation::ge)
            y = std::min(0.0, y);
        switch (m.row_tags[r].kind) {
        case RowKind::affine:
        case RowKind::output: d.pi.push_back(y); break;
        case RowKind::relu_upper: d.alpha.push_back(y); break;
        case RowKind::relu_on: d.beta.push_back(y); break;
        default: d.aux.push_back(y); break;
        }
    }
    d.z.assign(zbar.begin(), zbar.end());
    for (auto& v : d.z)
        v = std::round(v);
    d.lp_objective = s.objective;
    d.lp_solution = s.x;
    return d;
}

/// Row duals laid out in model row order.
inline std::vector<double> row_multipliers(const DualPoint& d, const MilpModel& m)
{
    std::vector<double> y(m.row_tags.size());
    std::size_t a = 0, b = 0, c = 0, e = 0;
    for (std::size_t r = 0; r < m.row_tags.size(); ++r) {
        switch (m.row_tags[r].kind) {
        case RowKind::affine:
        case RowKind::output: y[r] = d.pi.at(a++); break;
        case RowKind::relu_upper: y[r] = d.alpha.at(b++); break;
        case RowKind::relu_on: y[r] = d.beta.at(c++); break;
        default: y[r] = d.aux.at(e++); break;
        }
    }
    return y;
}

/// objective(x, h, y) - sum_k g_k z_k <= rhs, where g are the z coefficients of the
/// dual objective and rhs collects b pi, |LB| alpha and the column-bound terms.
inline CutRow build_cut(const DualPoint& d, const MilpModel& m)
{
    const auto y = row_multipliers(d, m);
    const auto& p = m.lp;
    std::vector<double> rc = p.objective;
    double rhs = 0.0;
    for (std::size_t r = 0; r < y.size(); ++r) {
        if (y[r] == 0.0)
            continue;
        const auto& row = p.rows[r];
        rhs += y[r] * row.rhs;
        for (std::size_t k = 0; k < row.index.size(); ++k)
            rc[row.index[k]] -= y[r] * row.value[k];
    }
    std::vector<bool> is_z(p.n_cols, false);
    for (int c : m.binary_cols)
        is_z[c] = true;
    CutRow cut;
    for (int j = 0; j < p.n_cols; ++j) {
        if (is_z[j]) {
            if (rc[j] != 0.0) {
                cut.index.push_back(j);
                cut.value.push_back(-rc[j]);
            }
            continue;
        }
        if (p.objective[j] != 0.0) {
            cut.index.push_back(j);
            cut.value.push_back(p.objective[j]);
        }
        if (rc[j] != 0.0) {
            const double lo = p.col_lo[j], hi = p.col_hi[j];
            const double t = std::max(rc[j] * lo, rc[j] * hi);
            if (!std::isfinite(t))
                throw NumericError("build_cut: nonzero reduced cost on an unbounded column");
            rhs += t;
        }
    }
    cut.rhs = rhs;
    return cut;
}

inline bool check_cut_validity(const CutRow& cut, std::span<const double> solution, double tol = 1e-6)
{
    return cut.lhs(solution) <= cut.rhs + tol;
}

/// Lazy-cut generator for Phase One. Every generated cut and the solution it came
/// from are retained for auditing.
class BendersCutGenerator {
public:
    struct Record {
        CutRow cut;
        std::vector<double> generator; // fixed-z LP optimum
        bool added = false;
    };

    IntegerCallback callback()
    {
        return [this](const MilpModel& m, const IntegerSolutionView& v) -> std::vector<CutRow> {
            std::vector<double> z;
            for (int c : m.binary_cols)
                z.push_back(std::round(v.polished[c]));
            const auto d = extract_dual_point(m, z);
            if (!d)
                return {};
            Record rec{build_cut(*d, m), d->lp_solution, false};
            rec.added = !v.last_fractional.empty() && rec.cut.violation(v.last_fractional) > 1e-6;
            records_.push_back(rec);
            if (rec.added)
                return {rec.cut};
            return {};
        };
    }

    const std::vector<Record>& records() const { return records_; }

    /// Number of generated cuts violated (beyond tol) by the given solution.
    int violations(std::span<const double> solution, double tol = 1e-6) const
    {
        int n = 0;
        for (const auto& r : records_)
            n += !check_cut_validity(r.cut, solution, tol);
        return n;
    }

private:
    std::vector<Record> records_;
};

} // namespace ennopt

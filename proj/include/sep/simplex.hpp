#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace sep {

enum class SimplexStatus { Optimal, IterationLimit, Unbounded, Singular };

struct SimplexResult {
    SimplexStatus status = SimplexStatus::Optimal;
    double objective = 0.0;
    std::vector<double> x;         // structural variable values
    std::vector<double> row_dual;  // multiplier per row
    long iterations = 0;
};

namespace simplex_detail {

/// Dense LU with partial pivoting; a : m x m row-major, overwritten.
struct Lu {
    int m = 0;
    std::vector<double> a;
    std::vector<int> perm;
    bool ok = false;

    void factor(std::vector<double> mat, int size) {
        m = size;
        a = std::move(mat);
        perm.resize(m);
        ok = true;
        for (int i = 0; i < m; ++i) perm[i] = i;
        for (int k = 0; k < m; ++k) {
            int piv = k;
            double best = std::abs(a[perm[k] * m + k]);
            for (int i = k + 1; i < m; ++i) {
                const double v = std::abs(a[perm[i] * m + k]);
                if (v > best) {
                    best = v;
                    piv = i;
                }
            }
            if (best < 1e-13) {
                ok = false;
                return;
            }
            std::swap(perm[k], perm[piv]);
            const double d = a[perm[k] * m + k];
            for (int i = k + 1; i < m; ++i) {
                const double f = a[perm[i] * m + k] / d;
                a[perm[i] * m + k] = f;
                for (int j = k + 1; j < m; ++j) a[perm[i] * m + j] -= f * a[perm[k] * m + j];
            }
        }
    }

    // solve A x = b
    std::vector<double> solve(const std::vector<double>& b) const {
        std::vector<double> y(m);
        for (int i = 0; i < m; ++i) {
            double s = b[perm[i]];
            for (int j = 0; j < i; ++j) s -= a[perm[i] * m + j] * y[j];
            y[i] = s;
        }
        for (int i = m - 1; i >= 0; --i) {
            double s = y[i];
            for (int j = i + 1; j < m; ++j) s -= a[perm[i] * m + j] * y[j];
            y[i] = s / a[perm[i] * m + i];
        }
        return y;
    }

    // solve A^T y = c; with A = P^T L U this is U^T z = c, L^T w = z,
    // y = P^T w
    std::vector<double> solve_transposed(const std::vector<double>& c) const {
        std::vector<double> z(m), w(m);
        for (int i = 0; i < m; ++i) {
            double s = c[i];
            for (int j = 0; j < i; ++j) s -= a[perm[j] * m + i] * z[j];
            z[i] = s / a[perm[i] * m + i];
        }
        for (int i = m - 1; i >= 0; --i) {
            double s = z[i];
            for (int j = i + 1; j < m; ++j) s -= a[perm[j] * m + i] * w[j];
            w[i] = s;
        }
        std::vector<double> out(m);
        for (int i = 0; i < m; ++i) out[perm[i]] = w[i];
        return out;
    }
};

}  // namespace simplex_detail

/// Dense simplex for   max c.x  s.t.  A x (<= | ==) b,  x >= 0.
///
/// Every row gets a slack column; slacks of equality rows are pinned at zero
/// and never enter the basis (they only exist to expose the row multiplier).
/// The caller supplies a starting basis that is feasible as given: slack
/// columns for inequality rows, and for each equality row a structural
/// column whose constraint column is exactly that row's unit vector.
///
/// Pivoting runs on a working tableau, but after each pass the basis is
/// refactorised and x, the duals, and the reduced costs are recomputed from
/// the original data; pivoting resumes if the clean reduced costs still
/// show an entering candidate. This keeps the reported multipliers
/// consistent with the objective to machine precision even when degenerate
/// pivots degrade the tableau.
class DenseSimplex {
public:
    DenseSimplex(std::vector<double> rhs, std::vector<std::uint8_t> eq_rows)
        : m_(static_cast<int>(rhs.size())), b_(std::move(rhs)), eq_(std::move(eq_rows)) {
        if (eq_.size() != b_.size()) throw std::invalid_argument("DenseSimplex: row shape mismatch");
    }

    int add_column(std::vector<double> a, double c) {
        if (static_cast<int>(a.size()) != m_)
            throw std::invalid_argument("DenseSimplex: column height mismatch");
        cols_.push_back(std::move(a));
        obj_.push_back(c);
        return static_cast<int>(cols_.size()) - 1;
    }

    int num_columns() const { return static_cast<int>(cols_.size()); }

    SimplexResult solve(const std::vector<int>& eq_basis, long max_iter = 0) const {
        const int k = num_columns();
        const int ncols = k + m_;  // structural then one slack per row
        if (max_iter <= 0) max_iter = 500 + 60L * ncols;

        double cmax = 1.0;
        for (double c : obj_) cmax = std::max(cmax, std::abs(c));
        const double rc_tol = 1e-12 * cmax;

        // column accessor over [structural | slack]
        auto col_entry = [&](int col, int row) -> double {
            return col < k ? cols_[col][row] : (row == col - k ? 1.0 : 0.0);
        };
        auto col_cost = [&](int col) -> double { return col < k ? obj_[col] : 0.0; };

        std::vector<int> basis(m_);
        for (int i = 0; i < m_; ++i) basis[i] = k + i;
        for (int i = 0; i < m_; ++i) {
            if (!eq_[i]) continue;
            const int col = eq_basis[i];
            if (col < 0 || col >= k)
                throw std::invalid_argument("DenseSimplex: bad starting basis for equality row");
            basis[i] = col;
        }

        SimplexResult res;
        res.x.assign(k, 0.0);
        res.row_dual.assign(m_, 0.0);
        long iters_total = 0;
        const int max_refine = 6;
        simplex_detail::Lu lu;
        auto factor_basis = [&]() {
            std::vector<double> bm(static_cast<std::size_t>(m_) * m_, 0.0);
            for (int i = 0; i < m_; ++i)
                for (int col = 0; col < m_; ++col) bm[i * m_ + col] = col_entry(basis[col], i);
            lu.factor(std::move(bm), m_);
            return lu.ok;
        };

        double b_scale = 1.0;
        for (double v : b_) b_scale = std::max(b_scale, std::abs(v));
        auto reset_basis = [&]() {
            for (int i = 0; i < m_; ++i) basis[i] = eq_[i] ? eq_basis[i] : k + i;
        };

        res.status = SimplexStatus::IterationLimit;
        for (int refine = 0; refine < max_refine; ++refine) {
            if (!factor_basis()) {
                res.status = SimplexStatus::Singular;
                res.iterations = iters_total;
                return res;
            }
            std::vector<double> xb = lu.solve(b_);
            double xb_min = 0.0;
            for (double v : xb) xb_min = std::min(xb_min, v);
            if (xb_min < -1e-7 * b_scale) {
                // a degenerate pivot run left an infeasible basis: restart
                // from the guaranteed-feasible initial basis
                reset_basis();
                if (!factor_basis()) {
                    res.status = SimplexStatus::Singular;
                    res.iterations = iters_total;
                    return res;
                }
                xb = lu.solve(b_);
            }
            // clean state: reduced costs c - y A and basic values B^-1 b
            std::vector<double> cb(m_);
            for (int i = 0; i < m_; ++i) cb[i] = col_cost(basis[i]);
            std::vector<double> y = lu.solve_transposed(cb);
            std::vector<double> rc(ncols, 0.0);
            for (int col = 0; col < ncols; ++col) {
                double v = col_cost(col);
                if (col < k) {
                    for (int i = 0; i < m_; ++i) v -= y[i] * cols_[col][i];
                } else {
                    v -= y[col - k];
                }
                rc[col] = v;
            }
            bool clean_entering = false;
            for (int col = 0; col < ncols && !clean_entering; ++col) {
                if (col >= k && eq_[col - k]) continue;
                bool in_basis = false;
                for (int i = 0; i < m_; ++i) in_basis = in_basis || basis[i] == col;
                if (!in_basis && rc[col] > rc_tol) clean_entering = true;
            }
            if (!clean_entering) {
                res.status = SimplexStatus::Optimal;
                break;
            }

            std::vector<std::vector<double>> tab(m_, std::vector<double>(ncols + 1, 0.0));
            for (int col = 0; col < ncols; ++col) {
                std::vector<double> a(m_);
                for (int i = 0; i < m_; ++i) a[i] = col_entry(col, i);
                const std::vector<double> red = lu.solve(a);
                for (int i = 0; i < m_; ++i) tab[i][col] = red[i];
            }
            for (int i = 0; i < m_; ++i) tab[i][ncols] = std::max(xb[i], 0.0);

            bool bland = false;
            int stalled = 0;
            bool hit_cap = false;
            double last_obj = 0.0;
            for (int i = 0; i < m_; ++i) last_obj += cb[i] * tab[i][ncols];

            while (true) {
                if (iters_total >= max_iter) {
                    hit_cap = true;
                    break;
                }
                int enter = -1;
                double best = rc_tol;
                for (int col = 0; col < ncols; ++col) {
                    if (col >= k && eq_[col - k]) continue;
                    if (rc[col] > best) {
                        best = rc[col];
                        enter = col;
                        if (bland) break;
                    }
                }
                if (enter == -1) break;
                double col_scale = 1e-30;
                for (int i = 0; i < m_; ++i)
                    col_scale = std::max(col_scale, std::abs(tab[i][enter]));
                const double piv_tol = 1e-7 * col_scale;
                // ratio test; among ties prefer the largest pivot element for
                // stability (Bland mode: the smallest basis index, to break
                // cycles)
                int leave = -1;
                double best_ratio = std::numeric_limits<double>::infinity();
                for (int i = 0; i < m_; ++i) {
                    const double a = tab[i][enter];
                    if (a <= piv_tol) continue;
                    const double ratio = tab[i][ncols] / a;
                    if (ratio < best_ratio * (1.0 - 1e-12) - 1e-15) {
                        best_ratio = ratio;
                        leave = i;
                    } else if (ratio <= best_ratio * (1.0 + 1e-12) + 1e-15 && leave >= 0) {
                        if (bland ? basis[i] < basis[leave]
                                  : std::abs(a) > std::abs(tab[leave][enter]))
                            leave = i;
                    }
                }
                if (leave == -1) {
                    res.status = SimplexStatus::Unbounded;
                    res.iterations = iters_total;
                    return res;
                }
                // pivot
                const double pv = tab[leave][enter];
                for (int j = 0; j <= ncols; ++j) tab[leave][j] /= pv;
                for (int i = 0; i < m_; ++i) {
                    if (i == leave) continue;
                    const double f = tab[i][enter];
                    if (f == 0.0) continue;
                    for (int j = 0; j <= ncols; ++j) tab[i][j] -= f * tab[leave][j];
                }
                const double fz = rc[enter];
                if (fz != 0.0)
                    for (int j = 0; j < ncols; ++j) rc[j] -= fz * tab[leave][j];
                basis[leave] = enter;
                ++iters_total;

                double cur_obj = 0.0;
                for (int i = 0; i < m_; ++i) cur_obj += col_cost(basis[i]) * tab[i][ncols];
                if (cur_obj <= last_obj + 1e-12 * (1.0 + std::abs(cur_obj))) {
                    if (++stalled > 3 * m_) bland = true;
                } else {
                    stalled = 0;
                }
                last_obj = cur_obj;
            }
            if (hit_cap) break;
        }

        // final basis-exact solution and multipliers
        if (!factor_basis()) {
            res.status = SimplexStatus::Singular;
            res.iterations = iters_total;
            return res;
        }
        std::vector<double> xb = lu.solve(b_);
        std::vector<double> cb(m_);
        for (int i = 0; i < m_; ++i) cb[i] = col_cost(basis[i]);
        const std::vector<double> y = lu.solve_transposed(cb);
        res.x.assign(k, 0.0);
        res.objective = 0.0;
        for (int i = 0; i < m_; ++i) {
            const double v = std::max(xb[i], 0.0);
            if (basis[i] < k) res.x[basis[i]] = v;
            res.objective += cb[i] * std::max(xb[i], 0.0);
        }
        res.row_dual = y;
        res.iterations = iters_total;
        return res;
    }

private:
    int m_;
    std::vector<double> b_;
    std::vector<std::uint8_t> eq_;
    std::vector<std::vector<double>> cols_;
    std::vector<double> obj_;
};

}  // namespace sep

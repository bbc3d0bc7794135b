// This file is part of rmdpkit, a C++ library for data-driven robust
// Markov decision processes.
//
// MIT License
//
// Permission is hereby granted, free of charge, to any person obtaining a copy
// of this software and associated documentation files (the "Software"), to deal
// in the Software without restriction, including without limitation the rights
// to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
// copies of the Software, and to permit persons to whom the Software is
// furnished to do so, subject to the following conditions:
//
// The above copyright notice and this permission notice shall be included in
// all copies or substantial portions of the Software.
//
// THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
// IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
// FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
// AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
// LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
// OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
// SOFTWARE.

#pragma once

#include "rmdp/types.hpp"

#include <cstddef>
#include <limits>
#include <utility>

namespace rmdp::lp {

enum class Status { optimal, infeasible, unbounded, iteration_limit };

struct Solution {
    Status status = Status::iteration_limit;
    numvec x;
    double objective = std::numeric_limits<double>::quiet_NaN();
};

/**
 * Dense two-phase simplex for small linear programs:
 *
 *   min  c' x
 *   s.t. A_ub x <= b_ub
 *        A_eq x  = b_eq
 *        x >= 0
 *
 * Entering variables are chosen by the most negative reduced cost; after a
 * stretch of degenerate pivots the rule permanently switches to Bland's,
 * which guarantees termination. Problem sizes in this library are at most a
 * few hundred rows, so a dense tableau is the simplest adequate tool.
 */
class DenseLp {
public:
    explicit DenseLp(std::size_t num_vars) : num_vars_(num_vars), objective_(num_vars, 0.0) {}

    void set_objective(numvec c) {
        if (c.size() != num_vars_) throw invalid_input("DenseLp: objective size mismatch");
        objective_ = std::move(c);
    }

    void add_ub(numvec row, double rhs) {
        if (row.size() != num_vars_) throw invalid_input("DenseLp: constraint size mismatch");
        ub_rows_.push_back(std::move(row));
        ub_rhs_.push_back(rhs);
    }

    void add_eq(numvec row, double rhs) {
        if (row.size() != num_vars_) throw invalid_input("DenseLp: constraint size mismatch");
        eq_rows_.push_back(std::move(row));
        eq_rhs_.push_back(rhs);
    }

    Solution solve(std::size_t max_pivots = 200000) const {
        const std::size_t m_ub = ub_rows_.size();
        const std::size_t m = m_ub + eq_rows_.size();
        const std::size_t n_struct = num_vars_ + m_ub; // structural + slack

        // Count artificial columns: one per row without a usable slack basis.
        std::vector<bool> needs_artificial(m, true);
        for (std::size_t i = 0; i < m_ub; i++)
            if (ub_rhs_[i] >= 0.0) needs_artificial[i] = false;
        std::size_t n_art = 0;
        for (bool b : needs_artificial)
            if (b) n_art++;

        const std::size_t cols = n_struct + n_art;
        std::vector<numvec> tab(m, numvec(cols + 1, 0.0));
        std::vector<std::size_t> basis(m);

        std::size_t art_next = n_struct;
        for (std::size_t i = 0; i < m; i++) {
            const bool is_ub = i < m_ub;
            const numvec& src = is_ub ? ub_rows_[i] : eq_rows_[i - m_ub];
            double rhs = is_ub ? ub_rhs_[i] : eq_rhs_[i - m_ub];
            double sign = 1.0;
            if (rhs < 0.0) {
                sign = -1.0;
                rhs = -rhs;
            }
            for (std::size_t j = 0; j < num_vars_; j++)
                tab[i][j] = sign * src[j];
            if (is_ub) tab[i][num_vars_ + i] = sign; // slack
            tab[i][cols] = rhs;
            if (needs_artificial[i]) {
                tab[i][art_next] = 1.0;
                basis[i] = art_next++;
            } else {
                basis[i] = num_vars_ + i;
            }
        }

        // Phase objective rows. phase1[j] holds reduced costs for the sum of
        // artificials; phase2[j] for the real objective. Both are updated by
        // every pivot so phase 2 can start immediately.
        numvec phase1(cols + 1, 0.0);
        numvec phase2(cols + 1, 0.0);
        for (std::size_t j = 0; j < num_vars_; j++)
            phase2[j] = objective_[j];
        for (std::size_t i = 0; i < m; i++) {
            if (basis[i] < n_struct) continue; // basic slack costs nothing in phase 1
            for (std::size_t j = 0; j <= cols; j++)
                phase1[j] -= tab[i][j];
        }
        for (std::size_t j = n_struct; j < cols; j++)
            phase1[j] += 1.0;

        const double tol = 1e-9;
        std::size_t pivots = 0;
        bool bland = false;
        std::size_t stalled = 0;

        auto pivot = [&](std::size_t row, std::size_t col) {
            const double inv = 1.0 / tab[row][col];
            for (std::size_t j = 0; j <= cols; j++)
                tab[row][j] *= inv;
            tab[row][col] = 1.0;
            for (std::size_t i = 0; i < m; i++) {
                if (i == row) continue;
                const double f = tab[i][col];
                if (f == 0.0) continue;
                for (std::size_t j = 0; j <= cols; j++)
                    tab[i][j] -= f * tab[row][j];
                tab[i][col] = 0.0;
            }
            for (numvec* obj : {&phase1, &phase2}) {
                const double f = (*obj)[col];
                if (f == 0.0) continue;
                for (std::size_t j = 0; j <= cols; j++)
                    (*obj)[j] -= f * tab[row][j];
                (*obj)[col] = 0.0;
            }
            basis[row] = col;
        };

        // Runs simplex iterations on the given objective row over columns
        // [0, col_limit). Returns false on unboundedness.
        auto iterate = [&](numvec& obj, std::size_t col_limit) -> bool {
            while (true) {
                std::size_t enter = cols;
                if (bland) {
                    for (std::size_t j = 0; j < col_limit; j++)
                        if (obj[j] < -tol) {
                            enter = j;
                            break;
                        }
                } else {
                    double best = -tol;
                    for (std::size_t j = 0; j < col_limit; j++)
                        if (obj[j] < best) {
                            best = obj[j];
                            enter = j;
                        }
                }
                if (enter == cols) return true; // optimal for this phase

                // Ratio test over every row with a usable element; a slightly
                // negative rhs is rounding residue and counts as zero. Ties of
                // the minimum ratio (within relative rounding, so the induced
                // infeasibility stays relative too) are broken toward the
                // largest pivot element, which keeps the basis well scaled;
                // Bland mode breaks them by basis index to guarantee
                // termination.
                double best_ratio = std::numeric_limits<double>::infinity();
                for (std::size_t i = 0; i < m; i++) {
                    if (tab[i][enter] <= 1e-11) continue;
                    best_ratio =
                        std::min(best_ratio, std::max(tab[i][cols], 0.0) / tab[i][enter]);
                }
                if (best_ratio == std::numeric_limits<double>::infinity())
                    return false; // unbounded ray
                const double window = best_ratio * (1.0 + 1e-12) + 1e-18;
                std::size_t leave = m;
                for (std::size_t i = 0; i < m; i++) {
                    if (tab[i][enter] <= 1e-11) continue;
                    if (std::max(tab[i][cols], 0.0) / tab[i][enter] > window) continue;
                    if (leave == m ||
                        (bland ? basis[i] < basis[leave] : tab[i][enter] > tab[leave][enter]))
                        leave = i;
                }

                // A degenerate leaving row may carry a small negative rounding
                // residue. Pivoting would divide it by the pivot element and
                // amplify it exponentially over repeated degenerate pivots;
                // the row is at level zero semantically, so pin it there.
                if (tab[leave][cols] < 0.0) tab[leave][cols] = 0.0;

                const double before = obj[cols];
                pivot(leave, enter);
                if (++pivots > max_pivots)
                    throw numerical_failure("simplex pivot limit exceeded", obj[cols]);
                if (std::abs(obj[cols] - before) <= 1e-12) {
                    if (++stalled > 64) bland = true;
                } else {
                    stalled = 0;
                }
            }
        };

        Solution sol;
        if (n_art > 0) {
            iterate(phase1, cols); // cannot be unbounded: bounded below by zero
            if (-phase1[cols] > 1e-7) {
                sol.status = Status::infeasible;
                return sol;
            }
            // Drive any leftover artificial out of the basis, pivoting on the
            // largest available element: a near-zero pivot here would amplify
            // the artificial's residual level into the other rows. Rows
            // without a usable element keep their artificial at level zero;
            // the column is excluded from phase 2 below.
            for (std::size_t i = 0; i < m; i++) {
                if (basis[i] < n_struct) continue;
                std::size_t best_col = n_struct;
                double best_mag = 1e-7;
                for (std::size_t j = 0; j < n_struct; j++)
                    if (std::abs(tab[i][j]) > best_mag) {
                        best_mag = std::abs(tab[i][j]);
                        best_col = j;
                    }
                if (best_col < n_struct) pivot(i, best_col);
            }
        }

        bland = false;
        stalled = 0;
        if (!iterate(phase2, n_struct)) {
            sol.status = Status::unbounded;
            return sol;
        }

        sol.status = Status::optimal;
        sol.x.assign(num_vars_, 0.0);
        for (std::size_t i = 0; i < m; i++)
            if (basis[i] < num_vars_) sol.x[basis[i]] = tab[i][cols];
        sol.objective = dot(sol.x, objective_);
        return sol;
    }

private:
    std::size_t num_vars_;
    numvec objective_;
    std::vector<numvec> ub_rows_;
    numvec ub_rhs_;
    std::vector<numvec> eq_rows_;
    numvec eq_rhs_;
};

} // namespace rmdp::lp

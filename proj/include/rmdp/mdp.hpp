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

#include <limits>
#include <utility>

namespace rmdp {

/// Stationary deterministic policy: one action index per state.
using Policy = indvec;
/// One value per state, in return units.
using ValueFunction = numvec;

/// Stopping rule for value iteration. A sweep change of at most
/// residual_target * (1-gamma)/gamma guarantees a Bellman residual of at most
/// residual_target at the returned iterate.
constexpr double VI_RESIDUAL_TARGET = 1e-9;
constexpr long VI_MAX_SWEEPS = 100000;

/// Finite discounted MDP with dense state-action rewards. Transition
/// probabilities live separately in TransitionModel so one MDP can be paired
/// with many candidate models.
struct TabularMDP {
    long num_states;
    long num_actions;
    numvec rewards;      // indexed [s * num_actions + a]
    double discount;     // in [0, 1)
    numvec initial_dist; // distribution over states

    TabularMDP(long num_states, long num_actions, numvec rewards, double discount,
               numvec initial_dist)
        : num_states(num_states), num_actions(num_actions), rewards(std::move(rewards)),
          discount(discount), initial_dist(std::move(initial_dist)) {
        if (num_states <= 0 || num_actions <= 0)
            throw invalid_input("TabularMDP: state and action counts must be positive");
        if (long(this->rewards.size()) != num_states * num_actions)
            throw invalid_input("TabularMDP: reward table size mismatch");
        for (double r : this->rewards)
            if (!std::isfinite(r)) throw invalid_input("TabularMDP: non-finite reward");
        if (!(discount >= 0.0 && discount < 1.0))
            throw invalid_input("TabularMDP: discount must lie in [0, 1)");
        if (long(this->initial_dist.size()) != num_states)
            throw invalid_input("TabularMDP: initial distribution size mismatch");
        validate_simplex_row(this->initial_dist, "TabularMDP initial distribution");
    }

    long cells() const { return num_states * num_actions; }
    double reward(long s, long a) const { return rewards[std::size_t(s * num_actions + a)]; }
};

/// One probability vector over successor states per state-action pair.
struct TransitionModel {
    long num_states;
    long num_actions;
    std::vector<numvec> rows; // cells() rows, each of length num_states

    TransitionModel(long num_states, long num_actions, std::vector<numvec> rows_in)
        : num_states(num_states), num_actions(num_actions), rows(std::move(rows_in)) {
        if (long(rows.size()) != num_states * num_actions)
            throw invalid_input("TransitionModel: row count mismatch");
        for (auto& row : rows) {
            if (long(row.size()) != num_states)
                throw invalid_input("TransitionModel: row length mismatch");
            validate_simplex_row(row, "TransitionModel row");
        }
    }

    const numvec& row(long s, long a) const { return rows[std::size_t(s * num_actions + a)]; }
    numvec& row(long s, long a) { return rows[std::size_t(s * num_actions + a)]; }
};

namespace detail {

inline void check_compatible(const TabularMDP& mdp, const TransitionModel& model) {
    if (mdp.num_states != model.num_states || mdp.num_actions != model.num_actions)
        throw invalid_input("MDP and transition model dimensions do not match");
}

inline void check_policy(const TabularMDP& mdp, const Policy& policy) {
    if (long(policy.size()) != mdp.num_states)
        throw invalid_input("policy length does not match the number of states");
    for (long a : policy)
        if (a < 0 || a >= mdp.num_actions) throw invalid_input("policy action out of range");
}

/// Solves a dense linear system in place by Gaussian elimination with partial
/// pivoting. `a` is row-major n x n, `b` is the right-hand side.
inline numvec solve_dense(std::vector<numvec> a, numvec b) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; col++) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; r++)
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        if (std::abs(a[pivot][col]) < 1e-14)
            throw numerical_failure("singular system in policy evaluation", a[pivot][col]);
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        const double inv = 1.0 / a[col][col];
        for (std::size_t r = col + 1; r < n; r++) {
            const double f = a[r][col] * inv;
            if (f == 0.0) continue;
            for (std::size_t c = col; c < n; c++)
                a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    numvec x(n);
    for (std::size_t row = n; row-- > 0;) {
        double acc = b[row];
        for (std::size_t c = row + 1; c < n; c++)
            acc -= a[row][c] * x[c];
        x[row] = acc / a[row][row];
    }
    return x;
}

inline double sweep_tolerance(double discount) {
    if (discount <= 0.0) return std::numeric_limits<double>::infinity();
    return VI_RESIDUAL_TARGET * (1.0 - discount) / discount;
}

} // namespace detail

/**
 * Exact evaluation of a stationary deterministic policy: the fixed point of
 * v(s) = r(s, pi(s)) + gamma * p(s, pi(s))' v, solved directly and polished by
 * iteration until the residual is at most 1e-9 in the max norm.
 */
inline ValueFunction evaluate_policy(const TabularMDP& mdp, const Policy& policy,
                                     const TransitionModel& model) {
    detail::check_compatible(mdp, model);
    detail::check_policy(mdp, policy);

    const std::size_t n = std::size_t(mdp.num_states);
    std::vector<numvec> a(n, numvec(n, 0.0));
    numvec b(n);
    for (std::size_t s = 0; s < n; s++) {
        const numvec& row = model.row(long(s), policy[s]);
        for (std::size_t t = 0; t < n; t++)
            a[s][t] = (s == t ? 1.0 : 0.0) - mdp.discount * row[t];
        b[s] = mdp.reward(long(s), policy[s]);
    }
    ValueFunction v = detail::solve_dense(std::move(a), std::move(b));

    // Direct solve is usually exact to machine precision; polish defensively.
    for (long iter = 0; iter < VI_MAX_SWEEPS; iter++) {
        double residual = 0.0;
        ValueFunction next(n);
        for (std::size_t s = 0; s < n; s++) {
            next[s] = mdp.reward(long(s), policy[s]) +
                      mdp.discount * dot(model.row(long(s), policy[s]), v);
            residual = std::max(residual, std::abs(next[s] - v[s]));
        }
        if (residual <= VI_RESIDUAL_TARGET) return v;
        v = std::move(next);
    }
    throw numerical_failure("policy evaluation did not converge", 0.0);
}

/// Return of a value function under the initial distribution.
inline double return_of(const TabularMDP& mdp, const ValueFunction& value) {
    if (long(value.size()) != mdp.num_states)
        throw invalid_input("value function length does not match the number of states");
    return dot(mdp.initial_dist, value);
}

/**
 * Optimal policy and value by value iteration from v = 0.
 *
 * The sweep terminates when the max-norm change falls below
 * 1e-9 * (1-gamma)/gamma, which bounds the Bellman residual of the returned
 * iterate by 1e-9. Ties in the greedy argmax go to the lowest action index so
 * results are reproducible bit-for-bit.
 */
inline std::pair<Policy, ValueFunction> solve_nominal(const TabularMDP& mdp,
                                                      const TransitionModel& model) {
    detail::check_compatible(mdp, model);

    const long S = mdp.num_states, A = mdp.num_actions;
    const double tol = detail::sweep_tolerance(mdp.discount);
    ValueFunction v(std::size_t(S), 0.0);
    ValueFunction next(std::size_t(S), 0.0);
    double change = std::numeric_limits<double>::infinity();

    for (long sweep = 0; sweep < VI_MAX_SWEEPS; sweep++) {
        change = 0.0;
        for (long s = 0; s < S; s++) {
            double best = -std::numeric_limits<double>::infinity();
            for (long a = 0; a < A; a++) {
                const double q = mdp.reward(s, a) + mdp.discount * dot(model.row(s, a), v);
                if (q > best) best = q;
            }
            next[std::size_t(s)] = best;
            change = std::max(change, std::abs(best - v[std::size_t(s)]));
        }
        std::swap(v, next);
        if (change <= tol) {
            Policy policy(std::size_t(S), 0);
            for (long s = 0; s < S; s++) {
                double best = -std::numeric_limits<double>::infinity();
                long best_a = 0;
                for (long a = 0; a < A; a++) {
                    const double q = mdp.reward(s, a) + mdp.discount * dot(model.row(s, a), v);
                    if (q > best) {
                        best = q;
                        best_a = a;
                    }
                }
                policy[std::size_t(s)] = best_a;
            }
            return {std::move(policy), std::move(v)};
        }
    }
    throw numerical_failure("value iteration hit the sweep cap", change);
}

} // namespace rmdp

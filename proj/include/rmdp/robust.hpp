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

#include "rmdp/ambiguity.hpp"
#include "rmdp/mdp.hpp"

#include <limits>
#include <utility>

namespace rmdp {

/// An MDP whose transition row for each state-action pair is only known to
/// lie in an L1 ball. The adversary picks each row independently.
struct AmbiguousMDP {
    TabularMDP base;
    std::vector<L1AmbiguitySet> sets; // one per state-action pair

    AmbiguousMDP(TabularMDP base_in, std::vector<L1AmbiguitySet> sets_in)
        : base(std::move(base_in)), sets(std::move(sets_in)) {
        if (long(sets.size()) != base.cells())
            throw invalid_input("AmbiguousMDP: one ambiguity set per state-action is required");
        for (const auto& set : sets)
            if (long(set.dim()) != base.num_states)
                throw invalid_input("AmbiguousMDP: ambiguity set dimension mismatch");
    }

    const L1AmbiguitySet& set(long s, long a) const {
        return sets[std::size_t(s * base.num_actions + a)];
    }
};

/// Output of a robust solve: worst-case value function, the greedy policy at
/// the fixed point, and the worst-case return from the initial distribution.
struct RobustSolution {
    ValueFunction value;
    Policy policy;
    double safe_return = 0.0;
    long iterations = 0;
};

/**
 * One application of the robust Bellman operator:
 * (Tv)(s) = max_a min_{p in set(s,a)} ( r(s,a) + gamma * p' v ).
 * Ties in the maximum go to the lowest action index.
 */
inline ValueFunction robust_bellman(const AmbiguousMDP& amdp, const ValueFunction& v) {
    const TabularMDP& mdp = amdp.base;
    if (long(v.size()) != mdp.num_states)
        throw invalid_input("robust_bellman: value function length mismatch");
    ValueFunction out(v.size());
    for (long s = 0; s < mdp.num_states; s++) {
        double best = -std::numeric_limits<double>::infinity();
        for (long a = 0; a < mdp.num_actions; a++) {
            const auto& set = amdp.set(s, a);
            const double q =
                mdp.reward(s, a) + mdp.discount * worst_case_l1(v, set.nominal, set.radius).first;
            if (q > best) best = q;
        }
        out[std::size_t(s)] = best;
    }
    return out;
}

/**
 * Robust value iteration from v = 0 to the fixed point of the robust Bellman
 * operator, with the same stopping rule and the same arithmetic as
 * solve_nominal; with all radii zero the two produce identical bits.
 */
inline RobustSolution solve_robust(const AmbiguousMDP& amdp) {
    const TabularMDP& mdp = amdp.base;
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
                const auto& set = amdp.set(s, a);
                const double q = mdp.reward(s, a) +
                                 mdp.discount * worst_case_l1(v, set.nominal, set.radius).first;
                if (q > best) best = q;
            }
            next[std::size_t(s)] = best;
            change = std::max(change, std::abs(best - v[std::size_t(s)]));
        }
        std::swap(v, next);
        if (change <= tol) {
            RobustSolution sol;
            sol.iterations = sweep + 1;
            sol.policy.assign(std::size_t(S), 0);
            for (long s = 0; s < S; s++) {
                double best = -std::numeric_limits<double>::infinity();
                long best_a = 0;
                for (long a = 0; a < A; a++) {
                    const auto& set = amdp.set(s, a);
                    const double q = mdp.reward(s, a) +
                                     mdp.discount * worst_case_l1(v, set.nominal, set.radius).first;
                    if (q > best) {
                        best = q;
                        best_a = a;
                    }
                }
                sol.policy[std::size_t(s)] = best_a;
            }
            sol.value = std::move(v);
            sol.safe_return = dot(mdp.initial_dist, sol.value);
            return sol;
        }
    }
    throw numerical_failure("robust value iteration hit the sweep cap", change);
}

/**
 * Worst-case value of a fixed policy: the fixed point of the policy-restricted
 * robust operator, where only the adversary optimizes.
 */
inline ValueFunction robust_evaluate(const AmbiguousMDP& amdp, const Policy& policy) {
    const TabularMDP& mdp = amdp.base;
    detail::check_policy(mdp, policy);
    const long S = mdp.num_states;
    const double tol = detail::sweep_tolerance(mdp.discount);

    ValueFunction v(std::size_t(S), 0.0);
    ValueFunction next(std::size_t(S), 0.0);
    double change = std::numeric_limits<double>::infinity();

    for (long sweep = 0; sweep < VI_MAX_SWEEPS; sweep++) {
        change = 0.0;
        for (long s = 0; s < S; s++) {
            const auto& set = amdp.set(s, policy[std::size_t(s)]);
            const double q = mdp.reward(s, policy[std::size_t(s)]) +
                             mdp.discount * worst_case_l1(v, set.nominal, set.radius).first;
            next[std::size_t(s)] = q;
            change = std::max(change, std::abs(q - v[std::size_t(s)]));
        }
        std::swap(v, next);
        if (change <= tol) return v;
    }
    throw numerical_failure("robust policy evaluation hit the sweep cap", change);
}

} // namespace rmdp

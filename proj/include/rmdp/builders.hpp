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
#include "rmdp/posterior.hpp"
#include "rmdp/robust.hpp"

#include <cmath>
#include <utility>

namespace rmdp {

/// Overall failure probability split uniformly over the cells whose
/// transition rows are estimated from data, so per-cell guarantees compose
/// into a global one by the union bound.
struct ConfidenceBudget {
    double delta;
    long num_cells;
    double per_cell;

    ConfidenceBudget(double delta, long num_cells)
        : delta(delta), num_cells(num_cells), per_cell(delta / double(num_cells)) {
        if (!(delta > 0.0 && delta < 1.0))
            throw invalid_input("ConfidenceBudget: delta must lie in (0, 1)");
        if (num_cells < 1) throw invalid_input("ConfidenceBudget: need at least one cell");
    }
};

/// Read-only view of the m sampled rows of one cell.
struct CellSamples {
    const double* data;
    long count;
    long dim;

    const double* row(long j) const { return data + std::size_t(j) * std::size_t(dim); }
    double row_dot(long j, const numvec& v) const {
        const double* r = row(j);
        double acc = 0.0;
        for (long i = 0; i < dim; i++)
            acc += r[i] * v[std::size_t(i)];
        return acc;
    }
};

inline CellSamples cell_samples(const PosteriorSampleSet& posterior, long s, long a) {
    return CellSamples{posterior.samples[posterior.cell(s, a)].data(), posterior.sample_count,
                       posterior.num_states};
}

/**
 * Distribution-free L1 radius from n observations of a dim-dimensional
 * categorical distribution at confidence per_cell:
 * sqrt((2/n) * log(2^dim / per_cell)), clamped to the simplex diameter.
 * No observations mean no information: the radius covers the whole simplex.
 */
inline double hoeffding_radius(long n, long dim, double per_cell) {
    if (n <= 0) return 2.0;
    const double log_term = double(dim) * std::log(2.0) - std::log(per_cell);
    return std::min(2.0, std::sqrt(2.0 / double(n) * log_term));
}

/// Hoeffding-style ambiguous MDP: empirical nominal rows with
/// distribution-free radii. Unvisited cells get a uniform nominal inside a
/// full-simplex set.
inline AmbiguousMDP build_hoeffding(const TabularMDP& mdp, const TransitionDataset& data,
                                    const ConfidenceBudget& budget) {
    if (data.num_states != mdp.num_states || data.num_actions != mdp.num_actions)
        throw invalid_input("build_hoeffding: dataset dimensions do not match the MDP");
    std::vector<L1AmbiguitySet> sets;
    sets.reserve(std::size_t(mdp.cells()));
    for (long s = 0; s < mdp.num_states; s++)
        for (long a = 0; a < mdp.num_actions; a++)
            sets.emplace_back(data.empirical_row(s, a),
                              hoeffding_radius(data.total(s, a), mdp.num_states,
                                               budget.per_cell));
    return AmbiguousMDP(mdp, std::move(sets));
}

/**
 * Smallest empirical credible radius around the cell mean: the least order
 * statistic of the sample distances d_j = ||sample_j - mean||_1 that leaves
 * strictly fewer than per_cell * m samples outside. Rounding the allowed
 * count down errs on the side of a larger, safer ball.
 */
inline double bci_radius(const CellSamples& samples, const numvec& mean, double per_cell) {
    const long m = samples.count;
    if (m < 1) throw invalid_input("bci_radius: no samples");
    if (per_cell >= 1.0) return 0.0; // the constraint is vacuous
    numvec dist(std::size_t(m), 0.0);
    for (long j = 0; j < m; j++) {
        const double* row = samples.row(j);
        double d = 0.0;
        for (long i = 0; i < samples.dim; i++)
            d += std::abs(row[i] - mean[std::size_t(i)]);
        dist[std::size_t(j)] = d;
    }
    std::sort(dist.begin(), dist.end());
    const double allowed = per_cell * double(m);
    for (long k = 0; k < m; k++) {
        // Ties: everything equal to dist[k] counts as inside.
        long upper = k + 1;
        while (upper < m && dist[std::size_t(upper)] <= dist[std::size_t(k)])
            upper++;
        if (double(m - upper) < allowed) return dist[std::size_t(k)];
    }
    return dist.back();
}

/// Credible-ball ambiguous MDP around the posterior means.
inline AmbiguousMDP build_bci(const TabularMDP& mdp, const PosteriorSampleSet& posterior,
                              const ConfidenceBudget& budget) {
    if (posterior.num_states != mdp.num_states || posterior.num_actions != mdp.num_actions)
        throw invalid_input("build_bci: posterior dimensions do not match the MDP");
    const long required = long(std::ceil(1.0 / budget.per_cell));
    if (posterior.sample_count < required)
        throw invalid_input("build_bci: quantile at level " + std::to_string(budget.per_cell) +
                            " needs at least " + std::to_string(required) + " samples");
    std::vector<L1AmbiguitySet> sets;
    sets.reserve(std::size_t(mdp.cells()));
    for (long s = 0; s < mdp.num_states; s++)
        for (long a = 0; a < mdp.num_actions; a++) {
            const numvec& mean = posterior.mean[posterior.cell(s, a)];
            sets.emplace_back(mean, bci_radius(cell_samples(posterior, s, a), mean,
                                               budget.per_cell));
        }
    return AmbiguousMDP(mdp, std::move(sets));
}

/**
 * Largest level g such that v' p >= g holds with posterior probability at
 * least 1 - per_cell, estimated conservatively from the samples: the
 * floor(per_cell * m)-th smallest of the dots v' sample_j (counting from
 * zero), which is the sample minimum whenever per_cell * m < 1.
 */
inline double hyperplane_level(const CellSamples& samples, const numvec& v, double per_cell) {
    const long m = samples.count;
    if (m < 1) throw invalid_input("hyperplane_level: no samples");
    if (long(v.size()) != samples.dim)
        throw invalid_input("hyperplane_level: value function length mismatch");
    numvec dots(std::size_t(m), 0.0);
    for (long j = 0; j < m; j++)
        dots[std::size_t(j)] = samples.row_dot(j, v);
    const long idx = std::clamp(long(std::floor(per_cell * double(m))), 0L, m - 1);
    std::nth_element(dots.begin(), dots.begin() + idx, dots.end());
    return dots[std::size_t(idx)];
}

enum class RsvfTermination { condition_satisfied, bci_fallback, iteration_cap };

inline const char* to_string(RsvfTermination t) {
    switch (t) {
    case RsvfTermination::condition_satisfied: return "condition-satisfied";
    case RsvfTermination::bci_fallback: return "bci-fallback";
    case RsvfTermination::iteration_cap: return "iteration-cap";
    }
    return "?";
}

/// One pass of the iterative construction: the robust solution for the sets
/// built from the current value collection, plus the outcome of the safety
/// check that decides whether another pass is needed.
struct RsvfIterate {
    ValueFunction value;
    numvec radii; // one per cell
    double safe_return = 0.0;
    bool check_passed = false;      // safety condition with the newest value only
    bool full_check_passed = false; // same condition over the whole collection (diagnostic)
};

struct RsvfTrace {
    std::vector<RsvfIterate> iterations;
    RsvfTermination terminated_by = RsvfTermination::iteration_cap;
    double bci_safe_return = 0.0;
};

struct RsvfOptions {
    long max_iters = 20;
    /// Optional fresh samples for the safety check; construction samples are
    /// reused when null.
    const PosteriorSampleSet* check_samples = nullptr;
};

/**
 * Value-function-guided set construction.
 *
 * Starting from the mean-model solution, each pass builds for every cell the
 * smallest L1 ball that intersects one quantile hyperplane per collected
 * value function, solves the resulting robust MDP, and tests empirically
 * whether the sets are safe for the newly produced value function: the
 * fraction of posterior rows p with min_{p' in set} (p' - p)' v <= 0 must be
 * at least 1 - per_cell in every cell. On failure the new value function
 * joins the collection and construction repeats.
 *
 * The credible-ball solution is computed up front as a floor: the loop stops
 * and falls back to it as soon as its own estimate drops below it, or when
 * the iteration cap is hit before the check ever passes. The returned
 * estimate is therefore never below the credible ball's.
 */
inline std::pair<RobustSolution, RsvfTrace> build_rsvf(const TabularMDP& mdp,
                                                       const PosteriorSampleSet& posterior,
                                                       const ConfidenceBudget& budget,
                                                       const RsvfOptions& options = {}) {
    if (options.max_iters < 1) throw invalid_input("build_rsvf: need at least one iteration");
    const AmbiguousMDP bci = build_bci(mdp, posterior, budget);
    const RobustSolution bci_sol = solve_robust(bci);
    const PosteriorSampleSet& check_set =
        options.check_samples != nullptr ? *options.check_samples : posterior;
    if (check_set.num_states != mdp.num_states || check_set.num_actions != mdp.num_actions)
        throw invalid_input("build_rsvf: check sample dimensions do not match the MDP");

    RsvfTrace trace;
    trace.bci_safe_return = bci_sol.safe_return;

    const TransitionModel mean_model = posterior.mean_model();
    std::vector<ValueFunction> collection{solve_nominal(mdp, mean_model).second};

    // Safety condition for one value function: per cell, the worst case of v
    // over the set must stay below v' p for at least 1 - per_cell of the
    // sampled rows p.
    auto condition_holds = [&](const ValueFunction& v, const AmbiguousMDP& amdp) {
        const long m = check_set.sample_count;
        for (long s = 0; s < mdp.num_states; s++)
            for (long a = 0; a < mdp.num_actions; a++) {
                const auto& set = amdp.set(s, a);
                const double worst = worst_case_l1(v, set.nominal, set.radius).first;
                const double slack = 1e-9 * std::max(1.0, std::abs(worst));
                const CellSamples samples = cell_samples(check_set, s, a);
                long ok = 0;
                for (long j = 0; j < m; j++)
                    if (samples.row_dot(j, v) >= worst - slack) ok++;
                if (double(ok) < (1.0 - budget.per_cell) * double(m)) return false;
            }
        return true;
    };

    for (long pass = 0; pass < options.max_iters; pass++) {
        std::vector<L1AmbiguitySet> sets;
        sets.reserve(std::size_t(mdp.cells()));
        numvec radii(std::size_t(mdp.cells()));
        for (long s = 0; s < mdp.num_states; s++)
            for (long a = 0; a < mdp.num_actions; a++) {
                const CellSamples samples = cell_samples(posterior, s, a);
                std::vector<HyperplaneTarget> targets;
                targets.reserve(collection.size());
                for (const auto& v : collection)
                    targets.push_back({v, hyperplane_level(samples, v, budget.per_cell)});
                auto [center, radius] =
                    min_radius_center(targets, posterior.mean[posterior.cell(s, a)]);
                radii[std::size_t(s * mdp.num_actions + a)] = radius;
                sets.emplace_back(std::move(center), radius);
            }

        AmbiguousMDP amdp(mdp, std::move(sets));
        RobustSolution sol = solve_robust(amdp);

        RsvfIterate iterate;
        iterate.value = sol.value;
        iterate.radii = std::move(radii);
        iterate.safe_return = sol.safe_return;
        iterate.check_passed = condition_holds(sol.value, amdp);
        iterate.full_check_passed = iterate.check_passed;
        for (const auto& v : collection) {
            if (!iterate.full_check_passed) break;
            iterate.full_check_passed = condition_holds(v, amdp);
        }
        trace.iterations.push_back(iterate);

        if (sol.safe_return < bci_sol.safe_return) {
            trace.terminated_by = RsvfTermination::bci_fallback;
            return {bci_sol, std::move(trace)};
        }
        if (iterate.check_passed) {
            trace.terminated_by = RsvfTermination::condition_satisfied;
            return {std::move(sol), std::move(trace)};
        }

        bool duplicate = false;
        for (const auto& v : collection)
            if (linf_distance(v, sol.value) <= 1e-7) {
                duplicate = true;
                break;
            }
        if (duplicate) break; // identical sets next pass; growing further cannot help
        collection.push_back(std::move(sol.value));
    }

    trace.terminated_by = RsvfTermination::iteration_cap;
    return {bci_sol, std::move(trace)};
}

inline std::pair<RobustSolution, RsvfTrace> build_rsvf(const TabularMDP& mdp,
                                                       const PosteriorSampleSet& posterior,
                                                       const ConfidenceBudget& budget,
                                                       long max_iters) {
    RsvfOptions options;
    options.max_iters = max_iters;
    return build_rsvf(mdp, posterior, budget, options);
}

/// Solves the mean transition model as-is. The reported return carries no
/// safety guarantee; it is the baseline the robust constructions are judged
/// against.
inline RobustSolution build_mean(const TabularMDP& mdp, const PosteriorSampleSet& posterior) {
    const TransitionModel model = posterior.mean_model();
    auto [policy, value] = solve_nominal(mdp, model);
    RobustSolution sol;
    sol.value = std::move(value);
    sol.policy = std::move(policy);
    sol.safe_return = dot(mdp.initial_dist, sol.value);
    sol.iterations = 0;
    return sol;
}

} // namespace rmdp

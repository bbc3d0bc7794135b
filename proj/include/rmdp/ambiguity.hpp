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

#include "rmdp/simplex_lp.hpp"
#include "rmdp/types.hpp"

#include <limits>
#include <utility>

namespace rmdp {

/// L1 ball on the probability simplex: { p : ||p - nominal||_1 <= radius }.
/// Radii above 2, the L1 diameter of the simplex, are clamped silently since
/// they describe the same set. Distribution-free radii routinely exceed 2 at
/// small sample counts.
struct L1AmbiguitySet {
    numvec nominal;
    double radius;

    L1AmbiguitySet(numvec nominal, double radius)
        : nominal(std::move(nominal)), radius(std::min(radius, 2.0)) {
        if (!(radius >= 0.0)) throw invalid_input("L1AmbiguitySet: radius must be non-negative");
        validate_simplex_row(this->nominal, "L1AmbiguitySet nominal");
    }

    std::size_t dim() const { return nominal.size(); }
};

/// A value direction together with a level the ambiguity set must reach:
/// the set has to intersect { p on the simplex : value' p = level }.
struct HyperplaneTarget {
    numvec value;
    double level;
};

/// Sum of absolute coordinate differences.
inline double l1_distance(const numvec& p, const numvec& q) {
    if (p.size() != q.size()) throw invalid_input("l1_distance: length mismatch");
    double d = 0.0;
    for (std::size_t i = 0; i < p.size(); i++)
        d += std::abs(p[i] - q[i]);
    return d;
}

/**
 * Exact minimizer of p' z over the intersection of the simplex with an L1
 * ball of the given radius around `nominal`.
 *
 * Greedy mass transfer: all budget flows into the smallest entry of z (the
 * lowest index among ties, which pins down the attaining vector), taken from
 * the largest entries first. Runs in O(S log S).
 *
 * Returns the optimal objective and an attaining distribution.
 */
inline std::pair<double, numvec> worst_case_l1(const numvec& z, const numvec& nominal,
                                               double radius) {
    if (z.size() != nominal.size() || z.empty())
        throw invalid_input("worst_case_l1: dimension mismatch");
    if (!(radius >= 0.0)) throw invalid_input("worst_case_l1: negative radius");
    radius = std::min(radius, 2.0);

    const sizvec order = sorted_indices(z);
    numvec p(nominal);
    const std::size_t receiver = order.front();
    double budget = std::min(radius / 2.0, 1.0 - p[receiver]);
    p[receiver] += budget;
    for (std::size_t i = z.size(); i-- > 0 && budget > 0.0;) {
        const std::size_t k = order[i];
        if (k == receiver) continue;
        const double take = std::min(budget, p[k]);
        p[k] -= take;
        budget -= take;
    }
    return {dot(p, z), std::move(p)};
}

inline std::pair<double, numvec> worst_case_l1(const L1AmbiguitySet& set, const numvec& value) {
    return worst_case_l1(value, set.nominal, set.radius);
}

/// Result of projecting a point onto a hyperplane slice of the simplex.
struct HyperplaneProjection {
    double distance;    // L1 distance from the input point
    numvec point;       // attaining point, on the hyperplane
    numvec subgradient; // of the distance as a function of the input point
};

/**
 * L1 projection of `point` (on the simplex) onto
 * { q on the simplex : v' q = level }.
 *
 * Mass is transferred greedily between the extreme entries of v, which gives
 * the exact distance. The subgradient comes from the dual of the projection
 * program: clamp(nu * (v_j - v_receiver) - 1) with nu pinned by the receiver
 * and the marginal donor, valid on the whole simplex.
 *
 * Throws invalid_input when the level is outside [min v, max v] by more than
 * 1e-9 (no point of the simplex reaches it).
 */
inline HyperplaneProjection project_to_hyperplane(const numvec& point, const numvec& v,
                                                  double level) {
    if (point.size() != v.size() || v.empty())
        throw invalid_input("project_to_hyperplane: dimension mismatch");

    const sizvec order = sorted_indices(v);
    const double vmin = v[order.front()], vmax = v[order.back()];
    if (level < vmin - 1e-9 || level > vmax + 1e-9)
        throw invalid_input("project_to_hyperplane: level unreachable on the simplex");
    const double target = std::clamp(level, vmin, vmax);

    HyperplaneProjection res{0.0, point, numvec(v.size(), 0.0)};
    const double current = dot(v, point);
    if (current == target) return res;

    // Reduce v'q: move mass from large-v entries into the smallest one.
    // Increase v'q: the mirror image. `receiver` gains mass, donors lose it
    // in order of steepest effect per unit moved.
    const bool reduce = current > target;
    const std::size_t receiver = reduce ? order.front() : order.back();
    double needed = std::abs(current - target);
    double moved = 0.0;
    double marginal_v = v[receiver];
    // Rounding residue in `needed` must not leak a vanishing donation to the
    // next donor: that would misidentify the marginal donor and corrupt the
    // dual multiplier below.
    const double exhausted = 1e-13 * (1.0 + needed);

    for (std::size_t i = 0; i < order.size() && needed > exhausted; i++) {
        const std::size_t k = reduce ? order[order.size() - 1 - i] : order[i];
        if (k == receiver) continue;
        const double gain = std::abs(v[k] - v[receiver]);
        if (gain <= 0.0) break; // remaining donors cannot change the dot product
        const double take = std::min(res.point[k], needed / gain);
        if (take <= 0.0) continue;
        res.point[k] -= take;
        moved += take;
        needed -= take * gain;
        marginal_v = v[k];
    }
    res.point[receiver] += moved;
    res.distance = 2.0 * moved;

    if (marginal_v != v[receiver]) {
        const double nu = 2.0 / (marginal_v - v[receiver]);
        for (std::size_t j = 0; j < v.size(); j++)
            res.subgradient[j] = std::clamp(nu * (v[j] - v[receiver]) - 1.0, -1.0, 1.0);
    }
    return res;
}

namespace detail {

inline void check_targets(const std::vector<HyperplaneTarget>& targets) {
    if (targets.empty()) throw invalid_input("min_radius_center: no targets");
    const std::size_t dim = targets.front().value.size();
    for (std::size_t i = 0; i < targets.size(); i++) {
        const auto& t = targets[i];
        if (t.value.size() != dim)
            throw infeasible_target("min_radius_center: inconsistent dimensions", i);
        double vmin = t.value[0], vmax = t.value[0];
        for (double x : t.value) {
            if (!std::isfinite(x)) throw infeasible_target("min_radius_center: non-finite value", i);
            vmin = std::min(vmin, x);
            vmax = std::max(vmax, x);
        }
        if (t.level < vmin - 1e-9 || t.level > vmax + 1e-9)
            throw infeasible_target("min_radius_center: level outside the value range", i);
    }
}

} // namespace detail

/**
 * Smallest-radius L1 ball on the simplex that touches every target
 * hyperplane: minimizes over centers p the largest of the per-target
 * distances min { ||q - p||_1 : v_i' q = g_i, q on the simplex }.
 *
 * Solved by cutting planes: the distance to each hyperplane slice is
 * piecewise linear and convex in p, each evaluation yields an exact value and
 * subgradient, and a small master LP over (p, radius) closes the gap between
 * the best evaluated center and the relaxation bound to 1e-9.
 *
 * The optimal center is generally not unique; any optimum may be returned.
 * `anchor` selects among optima for the single-target case (the projection of
 * the anchor) and seeds the search otherwise.
 */
inline std::pair<numvec, double> min_radius_center(const std::vector<HyperplaneTarget>& targets,
                                                   const numvec& anchor_in = numvec()) {
    detail::check_targets(targets);
    const std::size_t dim = targets.front().value.size();

    numvec anchor = anchor_in;
    if (anchor.empty()) anchor.assign(dim, 1.0 / double(dim));
    if (anchor.size() != dim) throw invalid_input("min_radius_center: anchor dimension mismatch");

    // Duplicate targets add no constraint; dropping them keeps the master
    // small and makes the single-target shortcut exact.
    std::vector<HyperplaneTarget> uniq;
    for (const auto& t : targets) {
        bool dup = false;
        for (const auto& u : uniq)
            if (std::abs(t.level - u.level) <= 1e-12 && linf_distance(t.value, u.value) <= 1e-12) {
                dup = true;
                break;
            }
        if (!dup) uniq.push_back(t);
    }

    if (uniq.size() == 1) {
        auto proj = project_to_hyperplane(anchor, uniq[0].value, uniq[0].level);
        return {std::move(proj.point), 0.0};
    }

    struct Cut {
        numvec grad;
        double rhs;
    };
    std::vector<Cut> cuts;
    numvec best_p;
    double best_val = std::numeric_limits<double>::infinity();

    auto evaluate = [&](const numvec& p) {
        double worst = 0.0;
        for (const auto& t : uniq) {
            auto proj = project_to_hyperplane(p, t.value, t.level);
            worst = std::max(worst, proj.distance);
            // grad' p - psi <= grad' p_t - distance
            Cut cut{proj.subgradient, dot(proj.subgradient, p) - proj.distance};
            bool dup = false;
            for (const auto& c : cuts)
                if (std::abs(c.rhs - cut.rhs) <= 1e-12 &&
                    linf_distance(c.grad, cut.grad) <= 1e-12) {
                    dup = true;
                    break;
                }
            if (!dup) cuts.push_back(std::move(cut));
        }
        if (worst < best_val) {
            best_val = worst;
            best_p = p;
        }
        return worst;
    };

    evaluate(anchor);
    {
        // Second seed: the average of the anchor's per-target projections is
        // usually close to the optimal center.
        numvec mid(dim, 0.0);
        for (const auto& t : uniq) {
            auto proj = project_to_hyperplane(anchor, t.value, t.level);
            for (std::size_t j = 0; j < dim; j++)
                mid[j] += proj.point[j] / double(uniq.size());
        }
        evaluate(mid);
    }

    // Cycled projections converge to a common point of the slices when one
    // exists; cutting planes alone crawl on such nearly-degenerate instances.
    auto polish = [&](numvec p) {
        for (int cycle = 0; cycle < 60; cycle++)
            for (const auto& t : uniq)
                p = project_to_hyperplane(p, t.value, t.level).point;
        evaluate(p);
    };
    polish(best_p);

    const double gap_tol = 1e-8;
    double lower = 0.0;
    double last_gap = std::numeric_limits<double>::infinity();
    long stalled = 0;
    for (long round = 0; round < 400 && best_val - lower > gap_tol; round++) {
        try {
            lp::DenseLp master(dim + 1);
            numvec c(dim + 1, 0.0);
            c[dim] = 1.0;
            master.set_objective(std::move(c));
            numvec ones(dim + 1, 1.0);
            ones[dim] = 0.0;
            master.add_eq(std::move(ones), 1.0);
            {
                numvec cap(dim + 1, 0.0);
                cap[dim] = 1.0;
                master.add_ub(std::move(cap), 2.0); // the simplex diameter caps the radius
            }
            // The tiny graded relaxation of each cut breaks the extreme
            // degeneracy these masters suffer from (many nearly parallel
            // rows); it costs at most ~1e-6 of lower-bound accuracy.
            for (std::size_t ci = 0; ci < cuts.size(); ci++) {
                numvec row(dim + 1);
                for (std::size_t j = 0; j < dim; j++)
                    row[j] = cuts[ci].grad[j];
                row[dim] = -1.0;
                master.add_ub(std::move(row), cuts[ci].rhs + 1e-9 * double(ci + 1));
            }
            auto sol = master.solve();
            if (sol.status != lp::Status::optimal)
                throw numerical_failure("min_radius_center: master LP failed", best_val);

            lower = std::max(lower, sol.x[dim]);
            if (best_val - lower <= gap_tol) break;
            // Nearly-intersecting hyperplanes make the master zigzag among
            // epsilon-distinct vertices without moving either bound; the
            // polisher resolves those, and a persistent stall afterwards will
            // not recover.
            if (best_val - lower >= last_gap - 1e-12) {
                stalled++;
                if (stalled == 5) polish(best_p);
                if (best_val - lower <= gap_tol) break;
                if (stalled >= 20) break;
            } else {
                stalled = 0;
            }
            last_gap = best_val - lower;

            // Degenerate masters can hand back a vertex slightly off the
            // simplex. The repaired point is re-evaluated exactly, so the
            // noise only shifts where the next cuts land; a grossly invalid
            // point still aborts.
            numvec p(sol.x.begin(), sol.x.begin() + long(dim));
            double total = 0.0;
            for (double& x : p) {
                if (x < -1e-4)
                    throw numerical_failure("min_radius_center: master point invalid", x);
                x = std::max(x, 0.0);
                total += x;
            }
            if (std::abs(total - 1.0) > 1e-4)
                throw numerical_failure("min_radius_center: master point off the simplex", total);
            for (double& x : p)
                x /= total;

            // Prune cuts that are slack at the master optimum. A small master
            // keeps the pivot count, and with it the accumulated rounding,
            // low; the relaxation stays valid so the lower bound survives.
            if (cuts.size() > 120) {
                std::vector<Cut> kept;
                for (const auto& cut : cuts) {
                    double lhs = -sol.x[dim];
                    for (std::size_t j = 0; j < dim; j++)
                        lhs += cut.grad[j] * sol.x[j];
                    if (cut.rhs - lhs <= 1e-6) kept.push_back(cut);
                }
                if (kept.size() < cuts.size()) cuts = std::move(kept);
                if (cuts.size() > 400) cuts.erase(cuts.begin(), cuts.end() - 300);
            }
            evaluate(p);
        } catch (const numerical_failure&) {
            // Master breakdowns cluster on instances whose hyperplanes nearly
            // share a point. The incumbent is exactly feasible, so accepting
            // it is sound whenever its radius is provably near the optimum or
            // outright negligible.
            polish(best_p);
            if (best_val - lower <= 1e-6 || best_val <= 2e-5) break;
            throw;
        }
    }
    if (best_val - lower > 1e-6 && best_val > 2e-5)
        throw numerical_failure("min_radius_center did not converge", best_val - lower);

    // The optimal center is rarely unique. Among optima, prefer the one
    // nearest the anchor along the segment toward it: anchored centers vary
    // smoothly across related calls instead of jumping between vertices of
    // the optimal face. The maximal feasible blend is found by bisection;
    // the objective is convex along the segment.
    auto max_dist = [&](const numvec& p) {
        double worst = 0.0;
        for (const auto& t : uniq)
            worst = std::max(worst, project_to_hyperplane(p, t.value, t.level).distance);
        return worst;
    };
    const double budget = best_val + 1e-9;
    double lo = 0.0, hi = 1.0;
    numvec blend(dim);
    for (int it = 0; it < 30 && hi - lo > 1e-9; it++) {
        const double mid = 0.5 * (lo + hi);
        for (std::size_t j = 0; j < dim; j++)
            blend[j] = (1.0 - mid) * best_p[j] + mid * anchor[j];
        if (max_dist(blend) <= budget)
            lo = mid;
        else
            hi = mid;
    }
    if (lo > 0.0) {
        for (std::size_t j = 0; j < dim; j++)
            best_p[j] = (1.0 - lo) * best_p[j] + lo * anchor[j];
        best_val = max_dist(best_p);
    }
    return {best_p, best_val};
}

} // namespace rmdp

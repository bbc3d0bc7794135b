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

#include "rmdp/mdp.hpp"
#include "rmdp/rng.hpp"
#include "rmdp/types.hpp"

#include <array>
#include <string>
#include <utility>

namespace rmdp {

/// Observed transitions (s, a, s') together with the per-cell count table
/// derived from them.
struct TransitionDataset {
    long num_states;
    long num_actions;
    std::vector<std::array<long, 3>> triples;
    std::vector<indvec> counts; // cells x num_states
    indvec totals;              // transitions observed per cell

    TransitionDataset(long num_states, long num_actions)
        : num_states(num_states), num_actions(num_actions),
          counts(std::size_t(num_states * num_actions), indvec(std::size_t(num_states), 0)),
          totals(std::size_t(num_states * num_actions), 0) {
        if (num_states <= 0 || num_actions <= 0)
            throw invalid_input("TransitionDataset: dimensions must be positive");
    }

    void add(long s, long a, long next) {
        if (s < 0 || s >= num_states || a < 0 || a >= num_actions || next < 0 ||
            next >= num_states)
            throw invalid_input("TransitionDataset: index out of range");
        triples.push_back({s, a, next});
        counts[cell(s, a)][std::size_t(next)]++;
        totals[cell(s, a)]++;
    }

    std::size_t cell(long s, long a) const { return std::size_t(s * num_actions + a); }
    const indvec& count_row(long s, long a) const { return counts[cell(s, a)]; }
    long total(long s, long a) const { return totals[cell(s, a)]; }

    /// Empirical transition row; uniform when the cell has no observations.
    numvec empirical_row(long s, long a) const {
        numvec row(std::size_t(num_states), 0.0);
        const long n = total(s, a);
        if (n == 0) {
            row.assign(std::size_t(num_states), 1.0 / double(num_states));
            return row;
        }
        const indvec& c = count_row(s, a);
        for (std::size_t i = 0; i < row.size(); i++)
            row[i] = double(c[i]) / double(n);
        return row;
    }

    bool empty() const {
        for (long n : totals)
            if (n > 0) return false;
        return true;
    }
};

/// Dirichlet concentration per state-action pair. A zero entry marks a
/// successor as structurally impossible: the posterior keeps it at exactly
/// zero probability unless the data contradicts it.
struct DirichletPrior {
    long num_states;
    long num_actions;
    std::vector<numvec> alpha; // cells x num_states

    DirichletPrior(long num_states, long num_actions, std::vector<numvec> alpha_in)
        : num_states(num_states), num_actions(num_actions), alpha(std::move(alpha_in)) {
        if (long(alpha.size()) != num_states * num_actions)
            throw invalid_input("DirichletPrior: cell count mismatch");
        for (const auto& a : alpha) {
            if (long(a.size()) != num_states)
                throw invalid_input("DirichletPrior: concentration length mismatch");
            double sum = 0.0;
            for (double x : a) {
                if (!(x >= 0.0)) throw invalid_input("DirichletPrior: negative concentration");
                sum += x;
            }
            if (sum <= 0.0) throw invalid_input("DirichletPrior: concentration has no mass");
        }
    }

    /// The same symmetric concentration for every cell and successor.
    static DirichletPrior symmetric(long num_states, long num_actions, double value) {
        return DirichletPrior(num_states, num_actions,
                              std::vector<numvec>(std::size_t(num_states * num_actions),
                                                  numvec(std::size_t(num_states), value)));
    }

    const numvec& cell(long s, long a) const { return alpha[std::size_t(s * num_actions + a)]; }
};

/// Monte Carlo representation of the belief over the true transition model:
/// m sampled rows per state-action pair plus the per-cell mean.
struct PosteriorSampleSet {
    long num_states = 0;
    long num_actions = 0;
    long sample_count = 0;
    // Row-major per cell: sample j occupies [j*num_states, (j+1)*num_states).
    std::vector<numvec> samples;
    std::vector<numvec> mean;
    std::vector<std::string> warnings;

    PosteriorSampleSet() = default;
    PosteriorSampleSet(long num_states, long num_actions, long sample_count)
        : num_states(num_states), num_actions(num_actions), sample_count(sample_count),
          samples(std::size_t(num_states * num_actions)),
          mean(std::size_t(num_states * num_actions)) {
        if (sample_count < 1) throw invalid_input("PosteriorSampleSet: need at least one sample");
        for (auto& block : samples)
            block.assign(std::size_t(sample_count * num_states), 0.0);
    }

    std::size_t cell(long s, long a) const { return std::size_t(s * num_actions + a); }

    double* sample_row(long s, long a, long j) {
        return samples[cell(s, a)].data() + std::size_t(j * num_states);
    }
    const double* sample_row(long s, long a, long j) const {
        return samples[cell(s, a)].data() + std::size_t(j * num_states);
    }
    numvec sample_copy(long s, long a, long j) const {
        const double* r = sample_row(s, a, j);
        return numvec(r, r + num_states);
    }

    /// Writes a sampled row (validated) and folds it into the running mean.
    void set_sample(long s, long a, long j, numvec row) {
        validate_simplex_row(row, "posterior sample");
        std::copy(row.begin(), row.end(), sample_row(s, a, j));
    }

    /// Recomputes every cell mean as the arithmetic mean of its samples.
    void finalize_means() {
        for (long s = 0; s < num_states; s++)
            for (long a = 0; a < num_actions; a++) {
                numvec& m = mean[cell(s, a)];
                m.assign(std::size_t(num_states), 0.0);
                for (long j = 0; j < sample_count; j++) {
                    const double* row = sample_row(s, a, j);
                    for (long i = 0; i < num_states; i++)
                        m[std::size_t(i)] += row[i];
                }
                for (double& x : m)
                    x /= double(sample_count);
                validate_simplex_row(m, "posterior mean");
            }
    }

    /// The mean transition model, used by the mean method and as the seed of
    /// iterative set construction.
    TransitionModel mean_model() const {
        std::vector<numvec> rows(mean.begin(), mean.end());
        return TransitionModel(num_states, num_actions, std::move(rows));
    }
};

/**
 * Conjugate posterior over every transition row: counts are added to the
 * prior concentration and m rows per cell are sampled from the updated
 * Dirichlet. The cell mean is set analytically to alpha' / sum(alpha') rather
 * than estimated from the draws.
 *
 * Each cell consumes an independent stream derived from (seed, s, a), so the
 * output is reproducible and cells can be drawn in any order.
 */
inline PosteriorSampleSet dirichlet_posterior(const DirichletPrior& prior,
                                              const TransitionDataset& data, long m,
                                              std::uint64_t seed) {
    if (m < 1) throw invalid_input("dirichlet_posterior: need at least one sample");
    if (prior.num_states != data.num_states || prior.num_actions != data.num_actions)
        throw invalid_input("dirichlet_posterior: prior and data dimensions differ");

    PosteriorSampleSet out(prior.num_states, prior.num_actions, m);
    for (long s = 0; s < prior.num_states; s++)
        for (long a = 0; a < prior.num_actions; a++) {
            numvec post = prior.cell(s, a);
            const indvec& c = data.count_row(s, a);
            double total = 0.0;
            for (std::size_t i = 0; i < post.size(); i++) {
                post[i] += double(c[i]);
                total += post[i];
            }
            Rng rng(derive_seed(seed, {0x64697269ULL, std::uint64_t(s), std::uint64_t(a)}));
            for (long j = 0; j < m; j++)
                out.set_sample(s, a, j, rng.dirichlet(post));
            numvec& mean = out.mean[out.cell(s, a)];
            mean.resize(post.size());
            for (std::size_t i = 0; i < post.size(); i++)
                mean[i] = post[i] / total;
        }
    return out;
}

namespace detail {

inline numvec softmax(const numvec& logits) {
    double mx = logits[0];
    for (double x : logits)
        mx = std::max(mx, x);
    numvec out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); i++) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (double& x : out)
        x /= sum;
    return out;
}

} // namespace detail

/**
 * Posterior over transition rows under a Gaussian prior on softmax logits
 * with a categorical likelihood, sampled per cell by random-walk
 * Metropolis-Hastings.
 *
 * The proposal scale adapts toward a 0.3 acceptance rate during the first
 * half of the chain and is frozen afterwards; only post-burn-in states are
 * kept, thinned down to m samples. An acceptance rate outside [0.05, 0.95]
 * after adaptation attaches a warning to the output instead of failing.
 */
inline PosteriorSampleSet gaussian_logit_posterior(const numvec& prior_mean,
                                                   const numvec& prior_sd,
                                                   const TransitionDataset& data, long m,
                                                   long chain_length, std::uint64_t seed) {
    if (m < 1) throw invalid_input("gaussian_logit_posterior: need at least one sample");
    if (chain_length < m)
        throw invalid_input("gaussian_logit_posterior: chain must be at least as long as m");
    const long S = data.num_states;
    if (long(prior_mean.size()) != S || long(prior_sd.size()) != S)
        throw invalid_input("gaussian_logit_posterior: prior length mismatch");
    for (double sd : prior_sd)
        if (!(sd > 0.0)) throw invalid_input("gaussian_logit_posterior: prior sd must be positive");

    PosteriorSampleSet out(S, data.num_actions, m);
    const long burn = chain_length / 2;
    const long thin = std::max(1L, (chain_length - burn) / m);

    for (long s = 0; s < S; s++)
        for (long a = 0; a < data.num_actions; a++) {
            Rng rng(derive_seed(seed, {0x6c6f676974ULL, std::uint64_t(s), std::uint64_t(a)}));
            const indvec& counts = data.count_row(s, a);

            auto log_target = [&](const numvec& logits) {
                double lp = 0.0;
                for (long i = 0; i < S; i++) {
                    const double z = (logits[std::size_t(i)] - prior_mean[std::size_t(i)]) /
                                     prior_sd[std::size_t(i)];
                    lp -= 0.5 * z * z;
                }
                double mx = logits[0];
                for (double x : logits)
                    mx = std::max(mx, x);
                double lse = 0.0;
                for (double x : logits)
                    lse += std::exp(x - mx);
                lse = mx + std::log(lse);
                for (long i = 0; i < S; i++)
                    if (counts[std::size_t(i)] > 0)
                        lp += double(counts[std::size_t(i)]) * (logits[std::size_t(i)] - lse);
                return lp;
            };

            numvec logits = prior_mean;
            double lp = log_target(logits);
            double scale = 0.25;
            long accepted_burn = 0, accepted_keep = 0, steps_keep = 0;
            long kept = 0;
            numvec proposal(std::size_t(S), 0.0);

            for (long step = 0; kept < m; step++) {
                for (long i = 0; i < S; i++)
                    proposal[std::size_t(i)] = logits[std::size_t(i)] + scale * rng.normal();
                const double lp_new = log_target(proposal);
                const bool accept = std::log(rng.uniform_positive()) < lp_new - lp;
                if (accept) {
                    logits = proposal;
                    lp = lp_new;
                }

                if (step < burn) {
                    accepted_burn += accept ? 1 : 0;
                    if ((step + 1) % 50 == 0) {
                        const double rate = double(accepted_burn) / 50.0;
                        scale *= std::exp(0.7 * (rate - 0.3));
                        scale = std::clamp(scale, 1e-5, 10.0);
                        accepted_burn = 0;
                    }
                } else {
                    accepted_keep += accept ? 1 : 0;
                    steps_keep++;
                    if ((step - burn + 1) % thin == 0) {
                        out.set_sample(s, a, kept, detail::softmax(logits));
                        kept++;
                    }
                }
            }
            const double rate = steps_keep > 0 ? double(accepted_keep) / double(steps_keep) : 0.0;
            if (rate < 0.05 || rate > 0.95)
                out.warnings.push_back("cell (" + std::to_string(s) + "," + std::to_string(a) +
                                       "): acceptance rate " + std::to_string(rate) +
                                       " outside [0.05, 0.95]");
        }
    out.finalize_means();
    return out;
}

} // namespace rmdp

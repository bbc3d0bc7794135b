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
#include "rmdp/posterior.hpp"
#include "rmdp/rng.hpp"

#include <utility>

namespace rmdp {

/**
 * Exponential growth model of an invasive population under an optional
 * control action:
 *
 *   next population = min(lambda * N, K)
 *   lambda ~ Normal(lambda_bar - z*beta1*N - z*beta2*max(0, N - N_bar)^2,
 *                   sigma_lambda^2)
 *
 * where z indicates whether the control was applied. The population itself is
 * only seen through observations y = N + Normal(0, sigma_y^2).
 */
struct PopulationModelParams {
    double lambda_bar;   // mean growth rate
    double beta1;        // control effectiveness, linear term
    double beta2;        // control effectiveness, quadratic term above N_bar
    double N_bar;        // threshold for the quadratic control term
    double K;            // carrying capacity
    double sigma_lambda; // growth-noise standard deviation
    double sigma_y;      // observation-noise standard deviation

    void validate() const {
        if (!(K > 0.0)) throw invalid_input("PopulationModelParams: K must be positive");
        if (!(sigma_lambda >= 0.0) || !(sigma_y >= 0.0))
            throw invalid_input("PopulationModelParams: noise deviations must be non-negative");
    }

    double growth_mean(double n, bool control) const {
        const double excess = std::max(0.0, n - N_bar);
        return lambda_bar - (control ? beta1 * n + beta2 * excess * excess : 0.0);
    }
};

/// Independent Gaussian uncertainty over the three growth parameters; the
/// noise scales and the carrying capacity are treated as known.
struct SpeciesPrior {
    PopulationModelParams mean;
    double sd_lambda_bar;
    double sd_beta1;
    double sd_beta2;

    void validate() const {
        mean.validate();
        if (!(sd_lambda_bar > 0.0) || !(sd_beta1 > 0.0) || !(sd_beta2 > 0.0))
            throw invalid_input("SpeciesPrior: parameter deviations must be positive");
    }
};

/// Population bins with representative values 0, w, 2w, ..., K.
struct SpeciesGrid {
    long bins;
    double capacity;

    SpeciesGrid(long bins, double capacity) : bins(bins), capacity(capacity) {
        if (bins < 2) throw invalid_input("SpeciesGrid: need at least two bins");
        if (!(capacity > 0.0)) throw invalid_input("SpeciesGrid: capacity must be positive");
    }

    double width() const { return capacity / double(bins - 1); }
    double value(long i) const { return double(i) * width(); }
    long bin_of(double n) const {
        const long i = std::lround(n / width());
        return std::clamp(i, 0L, bins - 1);
    }
};

namespace detail {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.70710678118654752440); }

inline double safe_log(double x) { return std::log(std::max(x, 1e-300)); }

inline double log_normal_pdf(double x, double sd) {
    return -0.5 * (x / sd) * (x / sd) - std::log(sd) - 0.91893853320467274178; // log sqrt(2 pi)
}

} // namespace detail

/**
 * Transition row for one population bin and action with the growth noise
 * integrated out in closed form: the next population is Normal(mu*N,
 * (sigma_lambda*N)^2) clamped to [0, K], so each bin receives an exact
 * Gaussian-CDF mass. Used when mapping sampled parameters to models.
 */
inline numvec species_transition_row(const PopulationModelParams& params, const SpeciesGrid& grid,
                                     long state, bool control) {
    numvec row(std::size_t(grid.bins), 0.0);
    const double n = grid.value(state);
    if (n <= 0.0) {
        row[0] = 1.0; // an extinct population stays extinct
        return row;
    }
    const double mu = params.growth_mean(n, control) * n;
    const double sd = params.sigma_lambda * n;
    if (sd <= 0.0) {
        row[std::size_t(grid.bin_of(std::clamp(mu, 0.0, grid.capacity)))] = 1.0;
        return row;
    }
    const double w = grid.width();
    double below = 0.0; // CDF at the lower edge of the current bin
    for (long i = 0; i < grid.bins; i++) {
        const double above = i + 1 < grid.bins
                                 ? detail::normal_cdf(((double(i) + 0.5) * w - mu) / sd)
                                 : 1.0;
        row[std::size_t(i)] = std::max(0.0, above - below);
        below = above;
    }
    validate_simplex_row(row, "species transition row");
    return row;
}

/// The same row estimated by Monte Carlo draws of the growth noise.
inline numvec species_transition_row_mc(const PopulationModelParams& params,
                                        const SpeciesGrid& grid, long state, bool control,
                                        long draws, Rng& rng) {
    numvec row(std::size_t(grid.bins), 0.0);
    const double n = grid.value(state);
    if (n <= 0.0) {
        row[0] = 1.0;
        return row;
    }
    const double mu = params.growth_mean(n, control);
    for (long d = 0; d < draws; d++) {
        const double lambda = mu + params.sigma_lambda * rng.normal();
        const double next = std::min(lambda * n, params.K);
        row[std::size_t(grid.bin_of(next))] += 1.0;
    }
    for (double& x : row)
        x /= double(draws);
    return row;
}

/**
 * Population-management MDP: states are population bins, action 1 applies the
 * control. Rewards charge the population level and the control application:
 * r(s, a) = -cost_population * N(s) - cost_control * [a == 1]. The true
 * transition rows are estimated by Monte Carlo draws of the growth noise.
 */
inline std::pair<TabularMDP, TransitionModel>
build_species_mdp(const PopulationModelParams& params, long bins, double cost_population,
                  double cost_control, double discount, long initial_bin, long mc_draws,
                  std::uint64_t seed) {
    params.validate();
    const SpeciesGrid grid(bins, params.K);
    if (initial_bin < 0 || initial_bin >= bins)
        throw invalid_input("build_species_mdp: initial bin out of range");
    if (mc_draws < 1) throw invalid_input("build_species_mdp: need at least one draw");

    numvec rewards(std::size_t(bins * 2));
    for (long s = 0; s < bins; s++)
        for (long a = 0; a < 2; a++)
            rewards[std::size_t(s * 2 + a)] =
                -cost_population * grid.value(s) - (a == 1 ? cost_control : 0.0);

    numvec p0(std::size_t(bins), 0.0);
    p0[std::size_t(initial_bin)] = 1.0;
    TabularMDP mdp(bins, 2, std::move(rewards), discount, std::move(p0));

    std::vector<numvec> rows(std::size_t(bins * 2));
    for (long s = 0; s < bins; s++)
        for (long a = 0; a < 2; a++) {
            Rng rng(derive_seed(seed, {0x7370656349ULL, std::uint64_t(s), std::uint64_t(a)}));
            rows[std::size_t(s * 2 + a)] =
                species_transition_row_mc(params, grid, s, a == 1, mc_draws, rng);
        }
    return {std::move(mdp), TransitionModel(bins, 2, std::move(rows))};
}

namespace detail {

/// Log-likelihood of one observed successor value y given the pre-clamp next
/// population Normal(mu, sd^2), clamping to [0, K], and observation noise
/// sigma_y. The three clamp regimes are mixed in log space.
inline double species_obs_loglik(double y, double mu, double sd, double capacity,
                                 double sigma_y) {
    if (sd <= 0.0) {
        const double point = std::clamp(mu, 0.0, capacity);
        return log_normal_pdf(y - point, sigma_y);
    }
    const double mass_low = normal_cdf((0.0 - mu) / sd);
    const double mass_high = 1.0 - normal_cdf((capacity - mu) / sd);

    const double var_sum = sd * sd + sigma_y * sigma_y;
    const double s = std::sqrt(var_sum);
    const double mu_c = mu + sd * sd * (y - mu) / var_sum;
    const double sd_c = sd * sigma_y / s;
    const double window =
        sd_c > 0.0 ? normal_cdf((capacity - mu_c) / sd_c) - normal_cdf((0.0 - mu_c) / sd_c) : 1.0;

    const double t_low = safe_log(mass_low) + log_normal_pdf(y, sigma_y);
    const double t_high = safe_log(mass_high) + log_normal_pdf(y - capacity, sigma_y);
    const double t_mid = log_normal_pdf(y - mu, s) + safe_log(std::max(window, 0.0));

    const double mx = std::max(t_low, std::max(t_high, t_mid));
    if (!std::isfinite(mx)) return -1e12;
    return mx + std::log(std::exp(t_low - mx) + std::exp(t_high - mx) + std::exp(t_mid - mx));
}

} // namespace detail

/**
 * Posterior over transition models for the population MDP. A random-walk
 * chain explores (lambda_bar, beta1, beta2) under the observation-noise
 * likelihood of the recorded transitions; every kept parameter draw is mapped
 * through the dynamics to a full transition model. With no observations the
 * prior predictive is returned.
 *
 * sigma_y == 0 treats observations as exact bin values and scores them by the
 * discretized transition probability instead.
 */
inline PosteriorSampleSet species_posterior(const SpeciesPrior& prior, const SpeciesGrid& grid,
                                            const TransitionDataset& data, long m,
                                            std::uint64_t seed, long chain_length = 0) {
    prior.validate();
    if (m < 1) throw invalid_input("species_posterior: need at least one sample");
    if (data.num_states != grid.bins || data.num_actions != 2)
        throw invalid_input("species_posterior: dataset does not match the grid");
    if (chain_length <= 0) chain_length = std::max(4 * m, 4000L);
    if (chain_length < m) throw invalid_input("species_posterior: chain shorter than m");

    // Collapse triples to (cell, successor) counts once; the chain only needs
    // these sufficient statistics.
    struct CellObs {
        long state;
        bool control;
        std::vector<std::pair<long, long>> successor_counts; // (bin, count)
    };
    std::vector<CellObs> observed;
    for (long s = 1; s < grid.bins; s++) // bin 0 is absorbing: carries no parameter information
        for (long a = 0; a < 2; a++) {
            if (data.total(s, a) == 0) continue;
            CellObs obs{s, a == 1, {}};
            const indvec& c = data.count_row(s, a);
            for (long i = 0; i < grid.bins; i++)
                if (c[std::size_t(i)] > 0) obs.successor_counts.push_back({i, c[std::size_t(i)]});
            observed.push_back(std::move(obs));
        }

    const PopulationModelParams& base = prior.mean;
    auto with_params = [&](double lb, double b1, double b2) {
        PopulationModelParams p = base;
        p.lambda_bar = lb;
        p.beta1 = b1;
        p.beta2 = b2;
        return p;
    };

    auto log_target = [&](double lb, double b1, double b2) {
        double lp = 0.0;
        const double zl = (lb - base.lambda_bar) / prior.sd_lambda_bar;
        const double z1 = (b1 - base.beta1) / prior.sd_beta1;
        const double z2 = (b2 - base.beta2) / prior.sd_beta2;
        lp -= 0.5 * (zl * zl + z1 * z1 + z2 * z2);
        const PopulationModelParams p = with_params(lb, b1, b2);
        for (const auto& obs : observed) {
            const double n = grid.value(obs.state);
            const double mu = p.growth_mean(n, obs.control) * n;
            const double sd = p.sigma_lambda * n;
            if (p.sigma_y > 0.0) {
                for (const auto& [succ, count] : obs.successor_counts)
                    lp += double(count) *
                          detail::species_obs_loglik(grid.value(succ), mu, sd, p.K, p.sigma_y);
            } else {
                const numvec row = species_transition_row(p, grid, obs.state, obs.control);
                for (const auto& [succ, count] : obs.successor_counts)
                    lp += double(count) * detail::safe_log(row[std::size_t(succ)]);
            }
        }
        return lp;
    };

    Rng rng(derive_seed(seed, {0x73706563706fULL}));
    std::vector<std::array<double, 3>> kept;
    kept.reserve(std::size_t(m));

    if (observed.empty()) {
        for (long j = 0; j < m; j++)
            kept.push_back({base.lambda_bar + prior.sd_lambda_bar * rng.normal(),
                            base.beta1 + prior.sd_beta1 * rng.normal(),
                            base.beta2 + prior.sd_beta2 * rng.normal()});
    } else {
        std::array<double, 3> theta{base.lambda_bar, base.beta1, base.beta2};
        const std::array<double, 3> step{prior.sd_lambda_bar, prior.sd_beta1, prior.sd_beta2};
        double lp = log_target(theta[0], theta[1], theta[2]);
        double scale = 0.5;
        const long burn = chain_length / 2;
        const long thin = std::max(1L, (chain_length - burn) / m);
        long accepted_burn = 0;

        for (long it = 0; long(kept.size()) < m; it++) {
            std::array<double, 3> cand;
            for (int i = 0; i < 3; i++)
                cand[std::size_t(i)] = theta[std::size_t(i)] + scale * step[std::size_t(i)] * rng.normal();
            const double lp_new = log_target(cand[0], cand[1], cand[2]);
            const bool accept = std::log(rng.uniform_positive()) < lp_new - lp;
            if (accept) {
                theta = cand;
                lp = lp_new;
            }
            if (it < burn) {
                accepted_burn += accept ? 1 : 0;
                if ((it + 1) % 50 == 0) {
                    scale *= std::exp(0.7 * (double(accepted_burn) / 50.0 - 0.3));
                    scale = std::clamp(scale, 1e-6, 10.0);
                    accepted_burn = 0;
                }
            } else if ((it - burn + 1) % thin == 0) {
                kept.push_back(theta);
            }
        }
    }

    PosteriorSampleSet out(grid.bins, 2, m);
    std::array<double, 3> last{std::numeric_limits<double>::quiet_NaN(), 0.0, 0.0};
    std::vector<numvec> last_rows(std::size_t(grid.bins * 2));
    for (long j = 0; j < m; j++) {
        if (kept[std::size_t(j)] != last) {
            last = kept[std::size_t(j)];
            const PopulationModelParams p = with_params(last[0], last[1], last[2]);
            for (long s = 0; s < grid.bins; s++)
                for (long a = 0; a < 2; a++)
                    last_rows[std::size_t(s * 2 + a)] =
                        species_transition_row(p, grid, s, a == 1);
        }
        for (long s = 0; s < grid.bins; s++)
            for (long a = 0; a < 2; a++)
                out.set_sample(s, a, j, last_rows[std::size_t(s * 2 + a)]);
    }
    out.finalize_means();
    return out;
}

} // namespace rmdp

#include "rmdp/ambiguity.hpp"
#include "rmdp/posterior.hpp"
#include "rmdp/species.hpp"

#include <catch2/catch.hpp>

using namespace rmdp;

TEST_CASE("dirichlet_posterior applies the conjugate update") {
    TransitionDataset data(3, 1);
    data.add(0, 0, 0);
    data.add(0, 0, 0);
    const auto prior = DirichletPrior::symmetric(3, 1, 1.0);
    const auto posterior = dirichlet_posterior(prior, data, 50, 7);

    // Counts (2, 0, 0) over a unit prior concentrate the analytic mean.
    CHECK(posterior.mean[0][0] == Approx(0.6));
    CHECK(posterior.mean[0][1] == Approx(0.2));
    CHECK(posterior.mean[0][2] == Approx(0.2));
    // Cells without data keep the prior: a symmetric one has a uniform mean.
    CHECK(posterior.mean[1][0] == Approx(1.0 / 3.0));
    CHECK(posterior.mean[2][2] == Approx(1.0 / 3.0));
}

TEST_CASE("dirichlet_posterior sample means converge to the analytic mean") {
    TransitionDataset data(2, 1);
    for (int i = 0; i < 10; i++) {
        data.add(0, 0, 0);
        data.add(0, 0, 1);
    }
    const auto prior = DirichletPrior::symmetric(2, 1, 1.0);
    const auto posterior = dirichlet_posterior(prior, data, 10000, 11);
    double mean0 = 0.0;
    for (long j = 0; j < posterior.sample_count; j++)
        mean0 += posterior.sample_row(0, 0, j)[0];
    mean0 /= double(posterior.sample_count);
    CHECK(mean0 == Approx(0.5).margin(0.02));
}

TEST_CASE("posterior sampling is deterministic and rows live on the simplex") {
    TransitionDataset data(3, 2);
    data.add(0, 1, 2);
    data.add(2, 0, 1);
    const auto prior = DirichletPrior::symmetric(3, 2, 0.5);
    const auto a = dirichlet_posterior(prior, data, 64, 99);
    const auto b = dirichlet_posterior(prior, data, 64, 99);
    CHECK(a.samples == b.samples);
    for (long s = 0; s < 3; s++)
        for (long x = 0; x < 2; x++)
            for (long j = 0; j < 64; j++) {
                const double* row = a.sample_row(s, x, j);
                CHECK(is_on_simplex(numvec(row, row + 3), 1e-9));
            }
}

TEST_CASE("dirichlet credible balls cover a prior-drawn truth") {
    // Truth is drawn from the prior, so the nominal coverage of the credible
    // ball is exact up to Monte Carlo error.
    const double level = 0.10; // per-cell failure probability
    const long S = 4, n = 20, m = 300, reps = 500;
    Rng rng(123456);
    long covered = 0;
    for (long rep = 0; rep < reps; rep++) {
        const numvec truth = rng.dirichlet(numvec(std::size_t(S), 1.0));
        TransitionDataset data(S, 1);
        for (long i = 0; i < n; i++)
            data.add(0, 0, rng.categorical(truth));
        const auto posterior = dirichlet_posterior(DirichletPrior::symmetric(S, 1, 1.0), data, m,
                                                   derive_seed(9000, {std::uint64_t(rep)}));
        // Empirical (1 - level) quantile of the distance to the mean.
        numvec dist(std::size_t(m), 0.0);
        for (long j = 0; j < m; j++)
            dist[std::size_t(j)] =
                l1_distance(posterior.sample_copy(0, 0, j), posterior.mean[0]);
        std::sort(dist.begin(), dist.end());
        const double radius = dist[std::size_t(long(std::ceil((1.0 - level) * m)) - 1)];
        if (l1_distance(truth, posterior.mean[0]) <= radius) covered++;
    }
    CHECK(double(covered) / double(reps) >= 1.0 - level - 0.02);
}

TEST_CASE("gaussian_logit_posterior respects a tight prior") {
    TransitionDataset data(3, 1); // no observations
    const numvec prior_mean{1.0, 0.0, -1.0};
    const auto posterior =
        gaussian_logit_posterior(prior_mean, numvec(3, 1e-4), data, 50, 2000, 21);
    const numvec expected = rmdp::detail::softmax(prior_mean);
    for (long j = 0; j < 50; j++) {
        const double* row = posterior.sample_row(0, 0, j);
        for (std::size_t i = 0; i < 3; i++)
            CHECK(row[i] == Approx(expected[i]).margin(2e-3));
    }
}

TEST_CASE("gaussian_logit_posterior concentrates on the data under a flat prior") {
    TransitionDataset data(3, 1);
    const indvec counts{600, 300, 100};
    for (long i = 0; i < 3; i++)
        for (long c = 0; c < counts[std::size_t(i)]; c++)
            data.add(0, 0, i);
    const auto posterior =
        gaussian_logit_posterior(numvec(3, 0.0), numvec(3, 10.0), data, 400, 20000, 22);
    const long n = 1000;
    for (std::size_t i = 0; i < 3; i++) {
        const double freq = double(counts[i]) / double(n);
        const double se = std::sqrt(freq * (1.0 - freq) / double(n));
        CHECK(posterior.mean[0][i] == Approx(freq).margin(3.0 * se + 1e-3));
    }
}

TEST_CASE("gaussian_logit_posterior is reproducible bit for bit") {
    TransitionDataset data(2, 1);
    data.add(0, 0, 1);
    data.add(0, 0, 1);
    data.add(0, 0, 0);
    const auto a = gaussian_logit_posterior(numvec(2, 0.0), numvec(2, 1.0), data, 32, 1000, 5);
    const auto b = gaussian_logit_posterior(numvec(2, 0.0), numvec(2, 1.0), data, 32, 1000, 5);
    CHECK(a.samples == b.samples);
    CHECK(a.mean == b.mean);
}

TEST_CASE("species transition rows") {
    const SpeciesGrid grid(21, 1000.0);
    PopulationModelParams params{1.2, 0.002, 0.00005, 300.0, 1000.0, 0.1, 20.0};

    SECTION("no growth noise gives a point mass on the deterministic successor") {
        params.sigma_lambda = 0.0;
        const numvec row = species_transition_row(params, grid, 10, false);
        const double next = std::min(params.lambda_bar * grid.value(10), params.K);
        for (long i = 0; i < grid.bins; i++)
            CHECK(row[std::size_t(i)] == (i == grid.bin_of(next) ? 1.0 : 0.0));
    }
    SECTION("an extinct population stays extinct") {
        const numvec row = species_transition_row(params, grid, 0, false);
        CHECK(row[0] == 1.0);
    }
    SECTION("rows from the closed form and from Monte Carlo agree") {
        Rng rng(808);
        const numvec exact = species_transition_row(params, grid, 12, true);
        const numvec mc = species_transition_row_mc(params, grid, 12, true, 200000, rng);
        for (long i = 0; i < grid.bins; i++)
            CHECK(mc[std::size_t(i)] == Approx(exact[std::size_t(i)]).margin(0.01));
    }
    SECTION("growth clamps at the carrying capacity") {
        params.lambda_bar = 3.0;
        const numvec row = species_transition_row(params, grid, 18, false);
        // Mean growth pushes far above K; nearly all mass sits in the top bin.
        CHECK(row[std::size_t(grid.bins - 1)] >= 0.99);
    }
}

TEST_CASE("species_posterior falls back to the prior and respects the dynamics") {
    const SpeciesGrid grid(15, 1000.0);
    const PopulationModelParams params{1.2, 0.002, 0.00005, 300.0, 1000.0, 0.1, 20.0};
    const SpeciesPrior prior{params, 0.15, 0.001, 0.00005};

    SECTION("no observations: prior predictive, deterministic in the seed") {
        TransitionDataset empty(15, 2);
        const auto a = species_posterior(prior, grid, empty, 40, 17);
        const auto b = species_posterior(prior, grid, empty, 40, 17);
        CHECK(a.samples == b.samples);
        for (long j = 0; j < 40; j++) {
            const double* row = a.sample_row(3, 1, j);
            CHECK(is_on_simplex(numvec(row, row + 15), 1e-9));
        }
        // Sampled successor means never exceed the carrying capacity.
        for (long s = 0; s < 15; s++)
            for (long acts = 0; acts < 2; acts++)
                for (long j = 0; j < 40; j++) {
                    const double* row = a.sample_row(s, acts, j);
                    double mean_next = 0.0;
                    for (long i = 0; i < 15; i++)
                        mean_next += row[i] * grid.value(i);
                    CHECK(mean_next <= params.K + 1e-9);
                }
    }

    SECTION("data pulls the posterior toward the truth") {
        // Simulate transitions from a true model with a growth rate well away
        // from the prior mean.
        PopulationModelParams truth = params;
        truth.lambda_bar = 1.05;
        Rng rng(313);
        TransitionDataset data(15, 2);
        for (long s = 1; s < 15; s++)
            for (long a = 0; a < 2; a++) {
                const numvec row = species_transition_row(truth, grid, s, a == 1);
                for (int i = 0; i < 40; i++)
                    data.add(s, a, rng.categorical(row));
            }
        const auto posterior = species_posterior(prior, grid, data, 150, 19);
        // Compare the posterior-mean row against both candidate parameter
        // values at a mid-range state: the truth must fit better.
        const numvec mean_row = posterior.mean[posterior.cell(8, 0)];
        const numvec truth_row = species_transition_row(truth, grid, 8, false);
        const numvec prior_row = species_transition_row(params, grid, 8, false);
        CHECK(l1_distance(mean_row, truth_row) < l1_distance(mean_row, prior_row));
    }
}

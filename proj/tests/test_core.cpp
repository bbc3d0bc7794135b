#include "oracles.hpp"
#include "rmdp/mdp.hpp"
#include "rmdp/rng.hpp"

#include <catch2/catch.hpp>

using namespace rmdp;

namespace {

// Applies one Bellman backup for the given policy; used to re-check residuals.
double policy_residual(const TabularMDP& mdp, const Policy& policy, const TransitionModel& model,
                       const ValueFunction& v) {
    double residual = 0.0;
    for (long s = 0; s < mdp.num_states; s++) {
        const double backup =
            mdp.reward(s, policy[std::size_t(s)]) + mdp.discount * dot(model.row(s, policy[std::size_t(s)]), v);
        residual = std::max(residual, std::abs(backup - v[std::size_t(s)]));
    }
    return residual;
}

} // namespace

TEST_CASE("model construction validates its invariants") {
    SECTION("initial distribution must be a distribution") {
        CHECK_THROWS_AS(TabularMDP(2, 1, {0.0, 0.0}, 0.9, {0.7, 0.7}), invalid_input);
    }
    SECTION("discount strictly below one") {
        CHECK_THROWS_AS(TabularMDP(1, 1, {0.0}, 1.0, {1.0}), invalid_input);
    }
    SECTION("rewards must be finite") {
        CHECK_THROWS_AS(TabularMDP(1, 1, {std::numeric_limits<double>::infinity()}, 0.9, {1.0}),
                        invalid_input);
    }
    SECTION("small simplex drift is repaired, large drift rejected") {
        TransitionModel ok(1, 1, {{1.0 + 5e-8}});
        CHECK(ok.row(0, 0)[0] == Approx(1.0).margin(1e-12));
        CHECK_THROWS_AS(TransitionModel(1, 1, {{1.0 + 1e-5}}), invalid_input);
    }
}

TEST_CASE("evaluate_policy on closed-form instances") {
    SECTION("self-loop geometric series") {
        TabularMDP mdp(1, 1, {1.0}, 0.9, {1.0});
        TransitionModel model(1, 1, {{1.0}});
        const auto v = evaluate_policy(mdp, {0}, model);
        CHECK(v[0] == Approx(10.0).margin(1e-8));
    }
    SECTION("only the first step is rewarded") {
        TabularMDP mdp(2, 1, {1.0, 0.0}, 0.5, {1.0, 0.0});
        TransitionModel model(2, 1, {{0.0, 1.0}, {0.0, 1.0}});
        const auto v = evaluate_policy(mdp, {0, 0}, model);
        CHECK(v[0] == Approx(1.0).margin(1e-9));
        CHECK(v[1] == Approx(0.0).margin(1e-9));
    }
    SECTION("dimension mismatch is rejected") {
        TabularMDP mdp(2, 1, {1.0, 0.0}, 0.5, {1.0, 0.0});
        TransitionModel model(3, 1, {{0.0, 1.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}});
        CHECK_THROWS_AS(evaluate_policy(mdp, {0, 0}, model), invalid_input);
    }
}

TEST_CASE("evaluate_policy matches the iterative fixed point on random instances") {
    Rng rng(20240401);
    for (int trial = 0; trial < 20; trial++) {
        const auto mdp = oracle::random_mdp(rng, 4, 2, 0.9);
        const auto model = oracle::random_model(rng, 4, 2);
        Policy policy;
        for (long s = 0; s < 4; s++)
            policy.push_back(long(rng.uniform() * 2));
        const auto v = evaluate_policy(mdp, policy, model);
        const auto ref = oracle::policy_value_iterative(mdp, policy, model);
        for (std::size_t s = 0; s < v.size(); s++)
            CHECK(v[s] == Approx(ref[s]).margin(1e-8));
        CHECK(policy_residual(mdp, policy, model, v) <= 1e-8);
    }
}

TEST_CASE("return_of is the initial-distribution average") {
    TabularMDP point(2, 1, {0.0, 0.0}, 0.9, {1.0, 0.0});
    CHECK(return_of(point, {3.0, 7.0}) == Approx(3.0));
    TabularMDP half(2, 1, {0.0, 0.0}, 0.9, {0.5, 0.5});
    CHECK(return_of(half, {2.0, 4.0}) == Approx(3.0));
    TabularMDP quarter(4, 1, {0.0, 0.0, 0.0, 0.0}, 0.9, {0.25, 0.25, 0.25, 0.25});
    CHECK(return_of(quarter, {1.0, 2.0, 3.0, 4.0}) == Approx(2.5));
    CHECK_THROWS_AS(return_of(point, {1.0, 2.0, 3.0}), invalid_input);
}

TEST_CASE("solve_nominal picks the better self-loop") {
    TabularMDP mdp(1, 2, {0.0, 1.0}, 0.9, {1.0});
    TransitionModel model(1, 2, {{1.0}, {1.0}});
    const auto [policy, value] = solve_nominal(mdp, model);
    CHECK(policy[0] == 1);
    CHECK(value[0] == Approx(10.0).margin(1e-7));
}

TEST_CASE("solve_nominal matches a rollout on a deterministic chain") {
    // 0 -> 1 -> 2 with action 0; state 2 absorbs with reward 1. Action 1
    // stays put for no reward, so advancing is optimal everywhere.
    TabularMDP mdp(3, 2, {0.0, 0.0, 0.0, 0.0, 1.0, 1.0}, 0.9, {1.0, 0.0, 0.0});
    TransitionModel model(3, 2,
                          {{0.0, 1.0, 0.0},
                           {1.0, 0.0, 0.0},
                           {0.0, 0.0, 1.0},
                           {0.0, 1.0, 0.0},
                           {0.0, 0.0, 1.0},
                           {0.0, 0.0, 1.0}});
    const auto [policy, value] = solve_nominal(mdp, model);
    // Discounted rollout along the chain: two unrewarded hops, then the
    // absorbing reward stream.
    double absorbing = 0.0;
    double discount_pow = 1.0;
    for (int t = 0; t < 2000; t++) {
        absorbing += discount_pow * 1.0;
        discount_pow *= 0.9;
    }
    CHECK(value[2] == Approx(absorbing).margin(1e-7));
    CHECK(value[0] == Approx(0.9 * 0.9 * absorbing).margin(1e-7));
    CHECK(policy[0] == 0);
    CHECK(policy[1] == 0);
}

TEST_CASE("solve_nominal breaks argmax ties toward the lowest action") {
    TabularMDP mdp(2, 2, {0.5, 0.5, 0.2, 0.2}, 0.9, {0.5, 0.5});
    TransitionModel model(2, 2,
                          {{0.5, 0.5}, {0.5, 0.5}, {0.1, 0.9}, {0.1, 0.9}});
    const auto [policy, value] = solve_nominal(mdp, model);
    (void)value;
    CHECK(policy[0] == 0);
    CHECK(policy[1] == 0);
}

TEST_CASE("solve_nominal dominates every other policy and stays bounded") {
    Rng rng(77);
    for (int trial = 0; trial < 10; trial++) {
        const auto mdp = oracle::random_mdp(rng, 4, 3, 0.85);
        const auto model = oracle::random_model(rng, 4, 3);
        const auto [policy, value] = solve_nominal(mdp, model);
        (void)policy;

        double max_reward = 0.0;
        for (double r : mdp.rewards)
            max_reward = std::max(max_reward, std::abs(r));
        for (double x : value)
            CHECK(std::abs(x) <= max_reward / (1.0 - mdp.discount) + 1e-6);

        for (int other = 0; other < 8; other++) {
            Policy candidate;
            for (long s = 0; s < 4; s++)
                candidate.push_back(long(rng.uniform() * 3));
            const auto vc = evaluate_policy(mdp, candidate, model);
            for (std::size_t s = 0; s < vc.size(); s++)
                CHECK(value[s] >= vc[s] - 1e-8);
        }
    }
}

TEST_CASE("evaluate_policy is equivariant under state relabeling") {
    Rng rng(4242);
    const auto mdp = oracle::random_mdp(rng, 5, 2, 0.9);
    const auto model = oracle::random_model(rng, 5, 2);
    Policy policy;
    for (long s = 0; s < 5; s++)
        policy.push_back(long(rng.uniform() * 2));
    const auto v = evaluate_policy(mdp, policy, model);

    const std::vector<std::size_t> perm{2, 0, 4, 1, 3}; // new index of each original state
    const long S = 5, A = 2;
    numvec rewards(std::size_t(S * A), 0.0);
    numvec p0(std::size_t(S), 0.0);
    std::vector<numvec> rows(std::size_t(S * A), numvec(std::size_t(S), 0.0));
    Policy ppolicy(std::size_t(S), 0);
    for (long s = 0; s < S; s++) {
        p0[perm[std::size_t(s)]] = mdp.initial_dist[std::size_t(s)];
        ppolicy[perm[std::size_t(s)]] = policy[std::size_t(s)];
        for (long a = 0; a < A; a++) {
            rewards[std::size_t(long(perm[std::size_t(s)]) * A + a)] = mdp.reward(s, a);
            for (long t = 0; t < S; t++)
                rows[std::size_t(long(perm[std::size_t(s)]) * A + a)][perm[std::size_t(t)]] =
                    model.row(s, a)[std::size_t(t)];
        }
    }
    TabularMDP pmdp(S, A, std::move(rewards), mdp.discount, std::move(p0));
    TransitionModel pmodel(S, A, std::move(rows));
    const auto pv = evaluate_policy(pmdp, ppolicy, pmodel);
    for (long s = 0; s < S; s++)
        CHECK(pv[perm[std::size_t(s)]] == Approx(v[std::size_t(s)]).margin(1e-9));
}

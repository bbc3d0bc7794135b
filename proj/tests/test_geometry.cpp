#include "oracles.hpp"
#include "rmdp/ambiguity.hpp"
#include "rmdp/rng.hpp"
#include "rmdp/simplex_lp.hpp"

#include <catch2/catch.hpp>

using namespace rmdp;

TEST_CASE("l1_distance") {
    CHECK(l1_distance({1.0, 0.0}, {0.0, 1.0}) == Approx(2.0));
    CHECK(l1_distance({0.3, 0.7}, {0.3, 0.7}) == Approx(0.0));
    CHECK(l1_distance({0.2, 0.3, 0.5}, {0.4, 0.3, 0.3}) == Approx(0.4));
    CHECK_THROWS_AS(l1_distance({0.5, 0.5}, {1.0}), invalid_input);
}

TEST_CASE("dense LP solver handles the textbook cases") {
    SECTION("bounded optimum") {
        // min -x - y s.t. x + y <= 1
        lp::DenseLp lp(2);
        lp.set_objective({-1.0, -1.0});
        lp.add_ub({1.0, 1.0}, 1.0);
        const auto sol = lp.solve();
        REQUIRE(sol.status == lp::Status::optimal);
        CHECK(sol.objective == Approx(-1.0));
    }
    SECTION("infeasible") {
        lp::DenseLp lp(1);
        lp.set_objective({1.0});
        lp.add_eq({1.0}, 2.0);
        lp.add_ub({1.0}, 1.0);
        CHECK(lp.solve().status == lp::Status::infeasible);
    }
    SECTION("unbounded") {
        lp::DenseLp lp(1);
        lp.set_objective({-1.0});
        CHECK(lp.solve().status == lp::Status::unbounded);
    }
    SECTION("negative right-hand sides") {
        // min x s.t. -x <= -3  (x >= 3)
        lp::DenseLp lp(1);
        lp.set_objective({1.0});
        lp.add_ub({-1.0}, -3.0);
        const auto sol = lp.solve();
        REQUIRE(sol.status == lp::Status::optimal);
        CHECK(sol.x[0] == Approx(3.0));
    }
}

TEST_CASE("worst_case_l1 on pinned instances") {
    SECTION("zero radius returns the nominal") {
        const auto [value, p] = worst_case_l1({1.0, 0.0}, {0.5, 0.5}, 0.0);
        CHECK(value == Approx(0.5));
        CHECK(p[0] == Approx(0.5));
        CHECK(p[1] == Approx(0.5));
    }
    SECTION("full simplex reaches the smallest entry") {
        const numvec third(3, 1.0 / 3.0);
        const auto [value, p] = worst_case_l1({0.2, 0.9, 0.4}, third, 2.0);
        CHECK(value == Approx(0.2));
        CHECK(p[0] == Approx(1.0));
    }
    SECTION("half the budget moves to the low entry") {
        const auto [value, p] = worst_case_l1({1.0, 0.0}, {0.5, 0.5}, 0.2);
        CHECK(value == Approx(0.4));
        CHECK(p[0] == Approx(0.4));
        CHECK(p[1] == Approx(0.6));
    }
    SECTION("budget drains the top entry first") {
        const numvec third(3, 1.0 / 3.0);
        const auto [value, p] = worst_case_l1({1.0, 0.0, 0.0}, third, 0.4);
        CHECK(value == Approx(1.0 / 3.0 - 0.2).margin(1e-12));
        CHECK(p[0] == Approx(1.0 / 3.0 - 0.2));
        // The moved mass lands on the lowest-index minimal entry.
        CHECK(p[1] == Approx(1.0 / 3.0 + 0.2));
        CHECK(p[2] == Approx(1.0 / 3.0));
    }
    SECTION("radius above the simplex diameter is clamped") {
        const auto [value, p] = worst_case_l1({0.0, 1.0}, {0.5, 0.5}, 7.5);
        (void)p;
        CHECK(value == Approx(0.0));
    }
}

TEST_CASE("worst_case_l1 agrees with the LP oracle") {
    Rng rng(909);
    for (int trial = 0; trial < 300; trial++) {
        const std::size_t S = 2 + std::size_t(rng.uniform() * 5.0);
        const numvec nominal = oracle::random_simplex(rng, S);
        numvec z(S);
        for (double& x : z)
            x = 2.0 * rng.uniform() - 1.0;
        const double radius = 2.2 * rng.uniform();
        const auto [value, p] = worst_case_l1(z, nominal, radius);
        const auto [ref, pref] = oracle::worst_case_l1_lp(z, nominal, radius);
        (void)pref;
        CHECK(value == Approx(ref).margin(1e-8));
        // The attaining vector is feasible for both constraints.
        CHECK(is_on_simplex(p, 1e-9));
        CHECK(l1_distance(p, nominal) <= std::min(radius, 2.0) + 1e-9);
    }
}

TEST_CASE("worst_case_l1 is monotone in the radius and shifts with the value") {
    Rng rng(910);
    for (int trial = 0; trial < 200; trial++) {
        const std::size_t S = 2 + std::size_t(rng.uniform() * 4.0);
        const numvec nominal = oracle::random_simplex(rng, S);
        numvec z(S);
        for (double& x : z)
            x = 3.0 * rng.uniform();
        const double r1 = 2.0 * rng.uniform();
        const double r2 = r1 + (2.0 - r1) * rng.uniform();
        const double v1 = worst_case_l1(z, nominal, r1).first;
        const double v2 = worst_case_l1(z, nominal, r2).first;
        CHECK(v1 >= v2 - 1e-12);

        const double shift = 4.0 * rng.uniform() - 2.0;
        numvec shifted(z);
        for (double& x : shifted)
            x += shift;
        CHECK(worst_case_l1(shifted, nominal, r1).first == Approx(v1 + shift).margin(1e-9));
    }
}

TEST_CASE("project_to_hyperplane is exact against the LP and its cuts are valid") {
    Rng rng(911);
    for (int trial = 0; trial < 300; trial++) {
        const std::size_t S = 2 + std::size_t(rng.uniform() * 4.0);
        const numvec point = oracle::random_simplex(rng, S);
        numvec v(S);
        for (double& x : v)
            x = 2.0 * rng.uniform() - 1.0;
        double vmin = v[0], vmax = v[0];
        for (double x : v) {
            vmin = std::min(vmin, x);
            vmax = std::max(vmax, x);
        }
        const double level = vmin + (vmax - vmin) * rng.uniform();
        const auto proj = project_to_hyperplane(point, v, level);
        CHECK(proj.distance == Approx(oracle::hyperplane_distance_lp(point, v, level)).margin(1e-9));
        CHECK(is_on_simplex(proj.point, 1e-9));
        CHECK(dot(v, proj.point) == Approx(level).margin(1e-9));

        // Subgradient inequality at a few probe points on the simplex.
        for (int probe = 0; probe < 5; probe++) {
            const numvec q = oracle::random_simplex(rng, S);
            const double dist_q = project_to_hyperplane(q, v, level).distance;
            double cut = proj.distance;
            for (std::size_t i = 0; i < S; i++)
                cut += proj.subgradient[i] * (q[i] - point[i]);
            CHECK(dist_q >= cut - 1e-9);
        }
    }
}

TEST_CASE("min_radius_center on pinned instances") {
    SECTION("a single target has radius zero and a center on the hyperplane") {
        const numvec v{1.0, 0.0, 0.5};
        const auto [center, radius] = min_radius_center({{v, 0.4}});
        CHECK(radius == 0.0);
        CHECK(is_on_simplex(center, 1e-9));
        CHECK(dot(v, center) == Approx(0.4).margin(1e-9));
    }
    SECTION("two opposing targets on the 2-simplex") {
        const auto [center, radius] =
            min_radius_center({{{1.0, 0.0}, 0.3}, {{0.0, 1.0}, 0.3}});
        CHECK(radius == Approx(0.4).margin(1e-7));
        CHECK(center[0] == Approx(0.5).margin(1e-6));
        CHECK(center[1] == Approx(0.5).margin(1e-6));
    }
    SECTION("duplicated targets collapse to the single-target case") {
        const numvec v{0.2, 0.9, 0.4};
        const std::vector<HyperplaneTarget> targets(4, HyperplaneTarget{v, 0.5});
        const auto [center, radius] = min_radius_center(targets);
        CHECK(radius == 0.0);
        CHECK(dot(v, center) == Approx(0.5).margin(1e-9));
    }
    SECTION("unreachable level names the offending target") {
        try {
            min_radius_center({{{1.0, 0.0}, 0.5}, {{0.0, 1.0}, 1.5}});
            FAIL("expected infeasible_target");
        } catch (const infeasible_target& e) {
            CHECK(e.target_index() == 1);
        }
    }
}

TEST_CASE("min_radius_center matches the exact two-target oracle") {
    Rng rng(912);
    for (int trial = 0; trial < 60; trial++) {
        const std::size_t S = 2 + std::size_t(rng.uniform() * 3.0);
        std::vector<HyperplaneTarget> targets;
        for (int i = 0; i < 2; i++) {
            numvec v(S);
            for (double& x : v)
                x = 2.0 * rng.uniform() - 1.0;
            double vmin = v[0], vmax = v[0];
            for (double x : v) {
                vmin = std::min(vmin, x);
                vmax = std::max(vmax, x);
            }
            targets.push_back({v, vmin + (vmax - vmin) * rng.uniform()});
        }
        const auto [center, radius] = min_radius_center(targets);
        CHECK(radius == Approx(oracle::two_target_radius_lp(targets[0], targets[1])).margin(1e-6));
        for (std::size_t i = 0; i < targets.size(); i++) {
            const double dist =
                oracle::hyperplane_distance_lp(center, targets[i].value, targets[i].level);
            CHECK(dist <= radius + 1e-7);
        }
    }
}

TEST_CASE("min_radius_center matches the one-shot LP formulation") {
    Rng rng(914);
    for (int trial = 0; trial < 40; trial++) {
        const std::size_t S = 2 + std::size_t(rng.uniform() * 5.0);
        const std::size_t k = 2 + std::size_t(rng.uniform() * 5.0);
        std::vector<HyperplaneTarget> targets;
        for (std::size_t i = 0; i < k; i++) {
            numvec v(S);
            for (double& x : v)
                x = 2.0 * rng.uniform() - 1.0;
            double vmin = v[0], vmax = v[0];
            for (double x : v) {
                vmin = std::min(vmin, x);
                vmax = std::max(vmax, x);
            }
            targets.push_back({v, vmin + (vmax - vmin) * rng.uniform()});
        }
        const auto [center, radius] = min_radius_center(targets, oracle::random_simplex(rng, S));
        (void)center;
        CHECK(radius == Approx(oracle::min_radius_monolithic_lp(targets)).margin(1e-6));
    }
}

TEST_CASE("min_radius_center touches every hyperplane within its radius") {
    Rng rng(913);
    for (int trial = 0; trial < 40; trial++) {
        const std::size_t S = 2 + std::size_t(rng.uniform() * 3.0);
        const std::size_t k = 1 + std::size_t(rng.uniform() * 3.0);
        std::vector<HyperplaneTarget> targets;
        for (std::size_t i = 0; i < k; i++) {
            numvec v(S);
            for (double& x : v)
                x = 2.0 * rng.uniform() - 1.0;
            double vmin = v[0], vmax = v[0];
            for (double x : v) {
                vmin = std::min(vmin, x);
                vmax = std::max(vmax, x);
            }
            targets.push_back({v, vmin + (vmax - vmin) * rng.uniform()});
        }
        const auto [center, radius] = min_radius_center(targets, oracle::random_simplex(rng, S));
        CHECK(is_on_simplex(center, 1e-9));
        for (std::size_t i = 0; i < k; i++)
            CHECK(oracle::hyperplane_distance_lp(center, targets[i].value, targets[i].level) <=
                  radius + 1e-7);
    }
}

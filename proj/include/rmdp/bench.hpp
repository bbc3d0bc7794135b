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

#include "rmdp/builders.hpp"
#include "rmdp/species.hpp"

#include <json.hpp>

#include <atomic>
#include <charconv>
#include <functional>
#include <istream>
#include <sstream>
#include <thread>

namespace rmdp::bench {

using json = nlohmann::json;

enum class Method { hoeffding, bci, rsvf, mean };

inline const char* to_string(Method m) {
    switch (m) {
    case Method::hoeffding: return "hoeffding";
    case Method::bci: return "bci";
    case Method::rsvf: return "rsvf";
    case Method::mean: return "mean";
    }
    return "?";
}

inline Method method_from_string(const std::string& name) {
    if (name == "hoeffding") return Method::hoeffding;
    if (name == "bci") return Method::bci;
    if (name == "rsvf") return Method::rsvf;
    if (name == "mean") return Method::mean;
    throw invalid_input("unknown method '" + name + "'");
}

/**
 * Draws n_per_cell successor states per state-action pair from the true
 * model. Each cell consumes its own stream derived from (seed, s, a), so the
 * dataset is reproducible cell by cell.
 */
inline TransitionDataset generate_dataset(const TransitionModel& truth, long n_per_cell,
                                          std::uint64_t seed) {
    if (n_per_cell < 0) throw invalid_input("generate_dataset: negative sample count");
    TransitionDataset data(truth.num_states, truth.num_actions);
    for (long s = 0; s < truth.num_states; s++)
        for (long a = 0; a < truth.num_actions; a++) {
            Rng rng(derive_seed(seed, {0x64617461ULL, std::uint64_t(s), std::uint64_t(a)}));
            const numvec& row = truth.row(s, a);
            for (long i = 0; i < n_per_cell; i++)
                data.add(s, a, rng.categorical(row));
        }
    return data;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct SingleStateConfig {
    long terminal_states = 10;
    double discount = 0.9;
    double value_low = 0.0;
    double value_high = 10.0;
    double dirichlet_alpha = 1.0; // prior concentration over terminal successors
    double logit_prior_sd = 1.0;  // informative-prior variant
    long mcmc_chain = 20000;
};

struct SpeciesConfig {
    PopulationModelParams dynamics{1.2, 0.002, 0.00005, 300.0, 1000.0, 0.1, 20.0};
    double prior_sd_lambda_bar = 0.2;
    double prior_sd_beta1 = 0.002;
    double prior_sd_beta2 = 0.0001;
    long bins = 50;
    double cost_population = 1.0;
    double cost_control = 100.0;
    double discount = 0.9;
    double initial_fraction = 0.3; // of the carrying capacity
    long truth_mc_draws = 100000;
    long mcmc_chain = 0; // 0 = sized automatically from the sample count
};

struct ExperimentConfig {
    std::string problem; // single-state-dirichlet | single-state-gaussian | species-mdp
    std::vector<Method> methods{Method::hoeffding, Method::bci, Method::rsvf, Method::mean};
    double delta = 0.05;
    std::vector<long> sample_grid{5, 20, 50, 200};
    long replications = 100;
    long posterior_samples = 1000;
    std::uint64_t seed = 1;
    long rsvf_max_iters = 20;
    bool fresh_sample_check = false;
    long threads = 0; // 0 = hardware concurrency; output does not depend on it

    void validate() const {
        if (problem != "single-state-dirichlet" && problem != "single-state-gaussian" &&
            problem != "species-mdp")
            throw invalid_input("unknown problem '" + problem + "'");
        if (!(delta > 0.0 && delta < 1.0)) throw invalid_input("delta must lie in (0, 1)");
        if (sample_grid.empty()) throw invalid_input("sample grid must not be empty");
        if (replications < 1) throw invalid_input("need at least one replication");
        if (posterior_samples < 1) throw invalid_input("need at least one posterior sample");
        if (methods.empty()) throw invalid_input("no methods selected");
    }

    SingleStateConfig single_state;
    SpeciesConfig species;
};

namespace detail {

inline void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                       const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        bool ok = false;
        for (const char* name : allowed)
            if (key == name) {
                ok = true;
                break;
            }
        if (!ok) throw invalid_input("unknown key '" + key + "' in " + where);
    }
}

template <typename T>
void read_into(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

} // namespace detail

inline ExperimentConfig config_from_json(const json& root) {
    if (!root.is_object()) throw invalid_input("config must be a JSON object");
    detail::check_keys(root,
                       {"problem", "methods", "delta", "sample_grid", "replications",
                        "posterior_samples", "seed", "rsvf_max_iters", "fresh_sample_check",
                        "threads", "single_state", "species"},
                       "config");
    ExperimentConfig cfg;
    if (!root.contains("problem")) throw invalid_input("config is missing 'problem'");
    cfg.problem = root.at("problem").get<std::string>();
    if (root.contains("methods")) {
        cfg.methods.clear();
        for (const auto& name : root.at("methods"))
            cfg.methods.push_back(method_from_string(name.get<std::string>()));
    }
    detail::read_into(root, "delta", cfg.delta);
    if (root.contains("sample_grid"))
        cfg.sample_grid = root.at("sample_grid").get<std::vector<long>>();
    detail::read_into(root, "replications", cfg.replications);
    detail::read_into(root, "posterior_samples", cfg.posterior_samples);
    detail::read_into(root, "seed", cfg.seed);
    detail::read_into(root, "rsvf_max_iters", cfg.rsvf_max_iters);
    detail::read_into(root, "fresh_sample_check", cfg.fresh_sample_check);
    detail::read_into(root, "threads", cfg.threads);

    if (root.contains("single_state")) {
        const json& ss = root.at("single_state");
        detail::check_keys(ss,
                           {"terminal_states", "discount", "value_low", "value_high",
                            "dirichlet_alpha", "logit_prior_sd", "mcmc_chain"},
                           "single_state");
        detail::read_into(ss, "terminal_states", cfg.single_state.terminal_states);
        detail::read_into(ss, "discount", cfg.single_state.discount);
        detail::read_into(ss, "value_low", cfg.single_state.value_low);
        detail::read_into(ss, "value_high", cfg.single_state.value_high);
        detail::read_into(ss, "dirichlet_alpha", cfg.single_state.dirichlet_alpha);
        detail::read_into(ss, "logit_prior_sd", cfg.single_state.logit_prior_sd);
        detail::read_into(ss, "mcmc_chain", cfg.single_state.mcmc_chain);
    }
    if (root.contains("species")) {
        const json& sp = root.at("species");
        detail::check_keys(sp,
                           {"lambda_bar", "beta1", "beta2", "n_bar", "capacity", "sigma_lambda",
                            "sigma_y", "prior_sd_lambda_bar", "prior_sd_beta1", "prior_sd_beta2",
                            "bins", "cost_population", "cost_control", "discount",
                            "initial_fraction", "truth_mc_draws", "mcmc_chain"},
                           "species");
        detail::read_into(sp, "lambda_bar", cfg.species.dynamics.lambda_bar);
        detail::read_into(sp, "beta1", cfg.species.dynamics.beta1);
        detail::read_into(sp, "beta2", cfg.species.dynamics.beta2);
        detail::read_into(sp, "n_bar", cfg.species.dynamics.N_bar);
        detail::read_into(sp, "capacity", cfg.species.dynamics.K);
        detail::read_into(sp, "sigma_lambda", cfg.species.dynamics.sigma_lambda);
        detail::read_into(sp, "sigma_y", cfg.species.dynamics.sigma_y);
        detail::read_into(sp, "prior_sd_lambda_bar", cfg.species.prior_sd_lambda_bar);
        detail::read_into(sp, "prior_sd_beta1", cfg.species.prior_sd_beta1);
        detail::read_into(sp, "prior_sd_beta2", cfg.species.prior_sd_beta2);
        detail::read_into(sp, "bins", cfg.species.bins);
        detail::read_into(sp, "cost_population", cfg.species.cost_population);
        detail::read_into(sp, "cost_control", cfg.species.cost_control);
        detail::read_into(sp, "discount", cfg.species.discount);
        detail::read_into(sp, "initial_fraction", cfg.species.initial_fraction);
        detail::read_into(sp, "truth_mc_draws", cfg.species.truth_mc_draws);
        detail::read_into(sp, "mcmc_chain", cfg.species.mcmc_chain);
    }
    cfg.validate();
    return cfg;
}

inline ExperimentConfig config_from_json_text(const std::string& text) {
    return config_from_json(json::parse(text));
}

// ---------------------------------------------------------------------------
// Benchmark problems
// ---------------------------------------------------------------------------

/// A benchmark instance: the MDP, its true transition model, which cells are
/// actually estimated from data (the rest are pinned to the truth), and how
/// to fit a posterior to a dataset.
///
/// The single-state problems redraw the uncertain row from its prior for
/// every replication: the safety guarantee is a statement about the belief
/// given the data, so its failure rate is only pinned to delta when the truth
/// itself follows the prior. The species problem keeps one fixed truth.
struct BenchProblem {
    TabularMDP mdp;
    TransitionModel truth;
    std::vector<std::size_t> known_cells; // pinned: radius zero around the true row
    long uncertain_cells;
    std::function<PosteriorSampleSet(const TransitionDataset&, long, std::uint64_t)> fit;
    Policy true_policy;
    double true_optimal;
    // When set, produces the truth for one replication from a derived seed.
    std::function<TransitionModel(std::uint64_t)> draw_truth;
};

namespace detail {

/// Terminal-state scaffolding shared by the single-state benchmarks: state 0
/// transitions into num_terminal absorbing states whose values are fixed by
/// their rewards; only the row of state 0 is uncertain, and its true
/// distribution over the terminals is redrawn from `draw_terminals` for every
/// replication.
inline BenchProblem make_single_state(const SingleStateConfig& cfg, std::uint64_t seed,
                                      std::function<numvec(Rng&)> draw_terminals,
                                      std::function<PosteriorSampleSet(const TransitionDataset&,
                                                                       long, std::uint64_t)>
                                          fit) {
    const long T = cfg.terminal_states;
    if (T < 2) throw invalid_input("single-state benchmark needs at least two terminal states");
    const long S = T + 1;

    Rng value_rng(derive_seed(seed, {0x7465726dULL}));
    numvec values(std::size_t(T), 0.0);
    for (double& x : values)
        x = cfg.value_low + (cfg.value_high - cfg.value_low) * value_rng.uniform();

    numvec rewards(std::size_t(S), 0.0); // one action
    for (long t = 0; t < T; t++)
        rewards[std::size_t(1 + t)] = values[std::size_t(t)] * (1.0 - cfg.discount);
    numvec p0(std::size_t(S), 0.0);
    p0[0] = 1.0;
    TabularMDP mdp(S, 1, std::move(rewards), cfg.discount, std::move(p0));

    auto draw_truth = [T, S, draw_terminals](std::uint64_t truth_seed) {
        Rng rng(truth_seed);
        const numvec terminals = draw_terminals(rng);
        std::vector<numvec> rows(std::size_t(S), numvec(std::size_t(S), 0.0));
        for (long t = 0; t < T; t++)
            rows[0][std::size_t(1 + t)] = terminals[std::size_t(t)];
        for (long t = 0; t < T; t++)
            rows[std::size_t(1 + t)][std::size_t(1 + t)] = 1.0;
        return TransitionModel(S, 1, std::move(rows));
    };
    TransitionModel truth = draw_truth(derive_seed(seed, {0x74727574ULL}));

    std::vector<std::size_t> known;
    for (long t = 0; t < T; t++)
        known.push_back(std::size_t(1 + t));

    auto [policy, value] = solve_nominal(mdp, truth);
    const double optimum = dot(mdp.initial_dist, value);
    return BenchProblem{std::move(mdp),    std::move(truth), std::move(known), 1,
                        std::move(fit),    std::move(policy), optimum,
                        std::move(draw_truth)};
}

/// Fills the pinned cells of a posterior with point masses at the true rows.
inline void pin_posterior_cells(PosteriorSampleSet& posterior, const TransitionModel& truth,
                                const std::vector<std::size_t>& known_cells) {
    for (std::size_t cell : known_cells) {
        const long s = long(cell) / truth.num_actions;
        const long a = long(cell) % truth.num_actions;
        for (long j = 0; j < posterior.sample_count; j++)
            posterior.set_sample(s, a, j, truth.rows[cell]);
        posterior.mean[cell] = truth.rows[cell];
    }
}

} // namespace detail

/// Uncertain transition into fixed-value terminal states, uninformative
/// Dirichlet prior over the successors; true rows are draws from that prior.
inline BenchProblem make_single_state_dirichlet(const SingleStateConfig& cfg,
                                                std::uint64_t seed) {
    const long T = cfg.terminal_states;
    const double alpha = cfg.dirichlet_alpha;
    auto fit = [T, alpha](const TransitionDataset& data, long m,
                          std::uint64_t fit_seed) -> PosteriorSampleSet {
        const long S = T + 1;
        PosteriorSampleSet out(S, 1, m);
        // Successor 0 (the non-terminal state itself) is structurally
        // impossible; its concentration stays at zero.
        numvec post(std::size_t(S), alpha);
        post[0] = 0.0;
        const indvec& counts = data.count_row(0, 0);
        double total = 0.0;
        for (long i = 0; i < S; i++) {
            post[std::size_t(i)] += double(counts[std::size_t(i)]);
            total += post[std::size_t(i)];
        }
        Rng rng(derive_seed(fit_seed, {0x64697269ULL, 0, 0}));
        for (long j = 0; j < m; j++)
            out.set_sample(0, 0, j, rng.dirichlet(post));
        numvec& mean = out.mean[0];
        mean.resize(std::size_t(S));
        for (long i = 0; i < S; i++)
            mean[std::size_t(i)] = post[std::size_t(i)] / total;
        return out;
    };
    const double a0 = cfg.dirichlet_alpha;
    auto draw = [T, a0](Rng& rng) { return rng.dirichlet(numvec(std::size_t(T), a0)); };
    return detail::make_single_state(cfg, seed, std::move(draw), std::move(fit));
}

/// Same shape with an informative Gaussian prior on the softmax logits of the
/// uncertain row; true rows are draws from that prior.
inline BenchProblem make_single_state_gaussian(const SingleStateConfig& cfg, std::uint64_t seed) {
    const long T = cfg.terminal_states;
    const double prior_sd = cfg.logit_prior_sd;
    const long chain = cfg.mcmc_chain;
    auto fit = [T, prior_sd, chain](const TransitionDataset& data, long m,
                                    std::uint64_t fit_seed) -> PosteriorSampleSet {
        // The sampler runs on the terminal successors only; rows are then
        // embedded with a structural zero for the non-terminal coordinate.
        TransitionDataset sub(T, 1);
        for (const auto& triple : data.triples)
            if (triple[0] == 0) sub.add(0, 0, triple[2] - 1);
        PosteriorSampleSet inner =
            gaussian_logit_posterior(numvec(std::size_t(T), 0.0),
                                     numvec(std::size_t(T), prior_sd), sub, m,
                                     std::max(chain, 2 * m), fit_seed);
        const long S = T + 1;
        PosteriorSampleSet out(S, 1, m);
        numvec mean(std::size_t(S), 0.0);
        for (long j = 0; j < m; j++) {
            numvec row(std::size_t(S), 0.0);
            const double* src = inner.sample_row(0, 0, j);
            for (long t = 0; t < T; t++)
                row[std::size_t(1 + t)] = src[t];
            for (long i = 0; i < S; i++)
                mean[std::size_t(i)] += row[std::size_t(i)] / double(m);
            out.set_sample(0, 0, j, std::move(row));
        }
        validate_simplex_row(mean, "posterior mean");
        out.mean[0] = std::move(mean);
        out.warnings = inner.warnings;
        return out;
    };
    auto draw = [T, prior_sd](Rng& rng) {
        numvec logits(std::size_t(T), 0.0);
        for (double& x : logits)
            x = prior_sd * rng.normal();
        return rmdp::detail::softmax(logits);
    };
    return detail::make_single_state(cfg, seed, std::move(draw), std::move(fit));
}

/// Full population-management MDP; every transition row is estimated.
inline BenchProblem make_species(const SpeciesConfig& cfg, std::uint64_t seed) {
    const long initial_bin = std::lround(cfg.initial_fraction * double(cfg.bins - 1));
    auto [mdp, truth] =
        build_species_mdp(cfg.dynamics, cfg.bins, cfg.cost_population, cfg.cost_control,
                          cfg.discount, initial_bin, cfg.truth_mc_draws,
                          derive_seed(seed, {0x7472757468ULL}));

    const SpeciesPrior prior{cfg.dynamics, cfg.prior_sd_lambda_bar, cfg.prior_sd_beta1,
                             cfg.prior_sd_beta2};
    const SpeciesGrid grid(cfg.bins, cfg.dynamics.K);
    const long chain = cfg.mcmc_chain;
    auto fit = [prior, grid, chain](const TransitionDataset& data, long m,
                                    std::uint64_t fit_seed) {
        return species_posterior(prior, grid, data, m, fit_seed, chain);
    };

    auto [policy, value] = solve_nominal(mdp, truth);
    const double optimum = dot(mdp.initial_dist, value);
    const long cells = mdp.cells();
    return BenchProblem{std::move(mdp), std::move(truth), {}, cells, std::move(fit),
                        std::move(policy), optimum};
}

inline BenchProblem make_problem(const ExperimentConfig& cfg) {
    if (cfg.problem == "single-state-dirichlet")
        return make_single_state_dirichlet(cfg.single_state, cfg.seed);
    if (cfg.problem == "single-state-gaussian")
        return make_single_state_gaussian(cfg.single_state, cfg.seed);
    return make_species(cfg.species, cfg.seed);
}

// ---------------------------------------------------------------------------
// Running experiments
// ---------------------------------------------------------------------------

struct ExperimentRecord {
    std::string method;
    long n_per_cell = 0;
    long replication = 0;
    double safe_estimate = 0.0;
    double true_optimal = 0.0;
    double realized_return = 0.0;
    double regret = 0.0;
    bool violation = false;
    bool failed = false; // value columns are NaN when set
    std::string failure;
};

/// Per-run summary of one iterative-construction trace, kept for contract
/// checks; the CSV schema stays untouched.
struct RsvfRunStat {
    long n_per_cell = 0;
    long replication = 0;
    bool monotone = true;         // safe returns non-increasing across passes
    double worst_increase = 0.0;  // largest pass-to-pass rise in the safe return
    double final_safe_return = 0.0;
    double bci_safe_return = 0.0;
    long passes = 0;
    RsvfTermination terminated_by = RsvfTermination::condition_satisfied;
};

struct RunResult {
    std::vector<ExperimentRecord> records;
    std::vector<RsvfRunStat> rsvf_stats;
};

namespace detail {

/// Replaces the sets of pinned cells with zero radius around the true row.
inline void pin_sets(AmbiguousMDP& amdp, const TransitionModel& truth,
                     const std::vector<std::size_t>& known_cells) {
    for (std::size_t cell : known_cells)
        amdp.sets[cell] = L1AmbiguitySet(truth.rows[cell], 0.0);
}

} // namespace detail

/// One replication's shared state: the active truth, its optimum, the
/// simulated dataset, and the fitted posterior (already pinned).
struct ReplicationContext {
    TransitionModel truth;
    double true_optimal;
    TransitionDataset data;
    PosteriorSampleSet posterior;
    PosteriorSampleSet fresh;
    std::string fit_error;
};

inline ReplicationContext make_replication_context(const BenchProblem& problem,
                                                   const ExperimentConfig& cfg, long n, long rep,
                                                   bool needs_posterior) {
    TransitionModel truth = problem.truth;
    double true_optimal = problem.true_optimal;
    if (problem.draw_truth) {
        truth = problem.draw_truth(
            derive_seed(cfg.seed, {0x74727574ULL, std::uint64_t(n), std::uint64_t(rep)}));
        true_optimal = dot(problem.mdp.initial_dist, solve_nominal(problem.mdp, truth).second);
    }
    const std::uint64_t data_seed =
        derive_seed(cfg.seed, {0x64617461ULL, std::uint64_t(n), std::uint64_t(rep)});
    TransitionDataset data = generate_dataset(truth, n, data_seed);
    PosteriorSampleSet posterior;
    PosteriorSampleSet fresh;
    std::string fit_error;
    if (needs_posterior) {
        try {
            const std::uint64_t fit_seed =
                derive_seed(cfg.seed, {0x666974ULL, std::uint64_t(n), std::uint64_t(rep)});
            posterior = problem.fit(data, cfg.posterior_samples, fit_seed);
            detail::pin_posterior_cells(posterior, truth, problem.known_cells);
            if (cfg.fresh_sample_check) {
                const std::uint64_t fresh_seed = derive_seed(
                    cfg.seed, {0x6672657368ULL, std::uint64_t(n), std::uint64_t(rep)});
                fresh = problem.fit(data, cfg.posterior_samples, fresh_seed);
                detail::pin_posterior_cells(fresh, truth, problem.known_cells);
            }
        } catch (const std::exception& e) {
            fit_error = e.what();
        }
    }
    return ReplicationContext{std::move(truth),     true_optimal, std::move(data),
                              std::move(posterior), std::move(fresh), std::move(fit_error)};
}

/// Runs one method on a prepared replication. The returned policy is the one
/// whose realized return the record reports.
inline std::pair<ExperimentRecord, Policy> run_single(const BenchProblem& problem,
                                                      const ExperimentConfig& cfg,
                                                      const ReplicationContext& ctx, long n,
                                                      long rep, Method method,
                                                      std::vector<RsvfRunStat>* stats = nullptr) {
    ExperimentRecord rec;
    rec.method = to_string(method);
    rec.n_per_cell = n;
    rec.replication = rep;
    rec.true_optimal = ctx.true_optimal;
    Policy policy;
    try {
        if (method != Method::hoeffding && !ctx.fit_error.empty())
            throw invalid_input("posterior fit failed: " + ctx.fit_error);
        const ConfidenceBudget budget(cfg.delta, problem.uncertain_cells);
        double estimate = 0.0;
        switch (method) {
        case Method::hoeffding: {
            AmbiguousMDP amdp = build_hoeffding(problem.mdp, ctx.data, budget);
            detail::pin_sets(amdp, ctx.truth, problem.known_cells);
            RobustSolution sol = solve_robust(amdp);
            estimate = sol.safe_return;
            policy = std::move(sol.policy);
            break;
        }
        case Method::bci: {
            RobustSolution sol = solve_robust(build_bci(problem.mdp, ctx.posterior, budget));
            estimate = sol.safe_return;
            policy = std::move(sol.policy);
            break;
        }
        case Method::rsvf: {
            RsvfOptions options;
            options.max_iters = cfg.rsvf_max_iters;
            if (cfg.fresh_sample_check) options.check_samples = &ctx.fresh;
            auto [sol, trace] = build_rsvf(problem.mdp, ctx.posterior, budget, options);
            if (stats != nullptr) {
                RsvfRunStat stat;
                stat.n_per_cell = n;
                stat.replication = rep;
                stat.final_safe_return = sol.safe_return;
                stat.bci_safe_return = trace.bci_safe_return;
                stat.passes = long(trace.iterations.size());
                stat.terminated_by = trace.terminated_by;
                for (std::size_t i = 1; i < trace.iterations.size(); i++) {
                    const double rise = trace.iterations[i].safe_return -
                                        trace.iterations[i - 1].safe_return;
                    stat.worst_increase = std::max(stat.worst_increase, rise);
                    if (rise > 1e-8) stat.monotone = false;
                }
                stats->push_back(stat);
            }
            estimate = sol.safe_return;
            policy = std::move(sol.policy);
            break;
        }
        case Method::mean: {
            RobustSolution sol = build_mean(problem.mdp, ctx.posterior);
            estimate = sol.safe_return;
            policy = std::move(sol.policy);
            break;
        }
        }
        rec.safe_estimate = estimate;
        rec.realized_return =
            return_of(problem.mdp, evaluate_policy(problem.mdp, policy, ctx.truth));
        rec.regret = std::abs(ctx.true_optimal - rec.safe_estimate);
        rec.violation = rec.safe_estimate > rec.realized_return;
    } catch (const std::exception& e) {
        rec.failed = true;
        rec.failure = e.what();
        rec.safe_estimate = rec.realized_return = rec.regret =
            std::numeric_limits<double>::quiet_NaN();
        rec.violation = false;
    }
    return {std::move(rec), std::move(policy)};
}

/// Runs every requested method on one simulated dataset. Returned records are
/// in config-method order; rsvf trace summaries are appended to `stats`.
inline std::vector<ExperimentRecord> run_replication(const BenchProblem& problem,
                                                     const ExperimentConfig& cfg, long n, long rep,
                                                     std::vector<RsvfRunStat>* stats = nullptr) {
    bool needs_posterior = false;
    for (Method m : cfg.methods)
        needs_posterior = needs_posterior || m != Method::hoeffding;
    const ReplicationContext ctx = make_replication_context(problem, cfg, n, rep, needs_posterior);
    std::vector<ExperimentRecord> records;
    for (Method method : cfg.methods)
        records.push_back(run_single(problem, cfg, ctx, n, rep, method, stats).first);
    return records;
}

/**
 * Full grid run: every (sample count, replication, method) triple produces
 * one record. Replications are independent work items seeded from the master
 * seed, so the result is byte-identical no matter how many threads run them.
 * Records are ordered by (method as listed in the config, n, replication).
 */
inline RunResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const BenchProblem problem = make_problem(cfg);

    struct Item {
        long n;
        long rep;
    };
    std::vector<Item> items;
    for (long n : cfg.sample_grid)
        for (long rep = 0; rep < cfg.replications; rep++)
            items.push_back({n, rep});

    struct ItemResult {
        std::vector<ExperimentRecord> records;
        std::vector<RsvfRunStat> stats;
    };
    std::vector<ItemResult> results(items.size());

    long threads = cfg.threads > 0 ? cfg.threads : long(std::thread::hardware_concurrency());
    threads = std::clamp(threads, 1L, long(items.size()));

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= items.size()) return;
            ItemResult& res = results[i];
            try {
                res.records = run_replication(problem, cfg, items[i].n, items[i].rep, &res.stats);
            } catch (const std::exception& e) {
                // No exception may cross the thread boundary; record the
                // failure on every method of this replication instead.
                res.records.clear();
                for (Method method : cfg.methods) {
                    ExperimentRecord rec;
                    rec.method = to_string(method);
                    rec.n_per_cell = items[i].n;
                    rec.replication = items[i].rep;
                    rec.true_optimal = problem.true_optimal;
                    rec.failed = true;
                    rec.failure = e.what();
                    rec.safe_estimate = rec.realized_return = rec.regret =
                        std::numeric_limits<double>::quiet_NaN();
                    res.records.push_back(std::move(rec));
                }
            }
        }
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (long t = 0; t < threads; t++)
            pool.emplace_back(worker);
        for (auto& t : pool)
            t.join();
    }

    RunResult out;
    // Records grouped by method first: per method, items are already in
    // (n, replication) order.
    for (std::size_t mi = 0; mi < cfg.methods.size(); mi++) {
        for (std::size_t i = 0; i < items.size(); i++)
            out.records.push_back(results[i].records[mi]);
    }
    for (auto& res : results)
        for (auto& stat : res.stats)
            out.rsvf_stats.push_back(stat);
    return out;
}

// ---------------------------------------------------------------------------
// Summaries and CSV
// ---------------------------------------------------------------------------

struct SummaryRow {
    std::string method;
    long n_per_cell = 0;
    double mean_regret = 0.0;
    double stderr_regret = 0.0;
    double violation_rate = 0.0;
    long replications = 0;
};

/// Mean regret, its standard error, and the violation rate per (method, n).
/// Failed records are excluded from the statistics.
inline std::vector<SummaryRow> summarize(const std::vector<ExperimentRecord>& records) {
    if (records.empty()) throw invalid_input("summarize: no records");
    std::vector<SummaryRow> rows;
    auto find = [&rows](const std::string& method, long n) -> SummaryRow& {
        for (auto& row : rows)
            if (row.method == method && row.n_per_cell == n) return row;
        rows.push_back(SummaryRow{method, n, 0.0, 0.0, 0.0, 0});
        return rows.back();
    };
    // First pass: means and counts.
    for (const auto& rec : records) {
        if (rec.failed) {
            find(rec.method, rec.n_per_cell);
            continue;
        }
        SummaryRow& row = find(rec.method, rec.n_per_cell);
        row.replications++;
        row.mean_regret += rec.regret;
        row.violation_rate += rec.violation ? 1.0 : 0.0;
    }
    for (auto& row : rows) {
        if (row.replications == 0) continue;
        row.mean_regret /= double(row.replications);
        row.violation_rate /= double(row.replications);
    }
    // Second pass: standard errors.
    for (const auto& rec : records) {
        if (rec.failed) continue;
        SummaryRow& row = find(rec.method, rec.n_per_cell);
        const double d = rec.regret - row.mean_regret;
        row.stderr_regret += d * d;
    }
    for (auto& row : rows) {
        if (row.replications > 1)
            row.stderr_regret =
                std::sqrt(row.stderr_regret / double(row.replications - 1)) /
                std::sqrt(double(row.replications));
        else
            row.stderr_regret = 0.0;
    }
    return rows;
}

namespace detail {

inline std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
    double out = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    if (res.ec != std::errc{}) throw invalid_input("cannot parse number '" + s + "'");
    return out;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

} // namespace detail

inline const char* RECORDS_CSV_HEADER =
    "method,n_per_cell,replication,safe_estimate,true_optimal,realized_return,regret,violation";
inline const char* SUMMARY_CSV_HEADER =
    "method,n_per_cell,mean_regret,stderr_regret,violation_rate,replications";

inline std::string records_to_csv(const std::vector<ExperimentRecord>& records) {
    std::string out = RECORDS_CSV_HEADER;
    out += '\n';
    for (const auto& r : records) {
        out += r.method;
        out += ',' + std::to_string(r.n_per_cell);
        out += ',' + std::to_string(r.replication);
        out += ',' + detail::format_double(r.safe_estimate);
        out += ',' + detail::format_double(r.true_optimal);
        out += ',' + detail::format_double(r.realized_return);
        out += ',' + detail::format_double(r.regret);
        out += ',';
        out += r.violation ? '1' : '0';
        out += '\n';
    }
    return out;
}

inline std::vector<ExperimentRecord> records_from_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw invalid_input("records CSV is empty");
    if (line != RECORDS_CSV_HEADER) throw invalid_input("unexpected records CSV header");
    std::vector<ExperimentRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() != 8) throw invalid_input("malformed records CSV row: " + line);
        ExperimentRecord rec;
        rec.method = f[0];
        rec.n_per_cell = std::stol(f[1]);
        rec.replication = std::stol(f[2]);
        rec.safe_estimate = detail::parse_double(f[3]);
        rec.true_optimal = detail::parse_double(f[4]);
        rec.realized_return = detail::parse_double(f[5]);
        rec.regret = detail::parse_double(f[6]);
        rec.violation = f[7] == "1";
        rec.failed = std::isnan(rec.regret);
        records.push_back(std::move(rec));
    }
    return records;
}

inline std::string summary_to_csv(const std::vector<SummaryRow>& rows) {
    std::string out = SUMMARY_CSV_HEADER;
    out += '\n';
    for (const auto& r : rows) {
        out += r.method;
        out += ',' + std::to_string(r.n_per_cell);
        out += ',' + detail::format_double(r.mean_regret);
        out += ',' + detail::format_double(r.stderr_regret);
        out += ',' + detail::format_double(r.violation_rate);
        out += ',' + std::to_string(r.replications);
        out += '\n';
    }
    return out;
}

} // namespace rmdp::bench

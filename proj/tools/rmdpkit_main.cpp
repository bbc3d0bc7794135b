// Command-line front end: solves single problem instances, runs experiment
// grids, and aggregates record files.

#include "rmdp/rmdp.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

namespace {

using namespace rmdp;
using namespace rmdp::bench;

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw invalid_input("cannot open config file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return config_from_json_text(text);
}

void write_output(const std::string& path, const std::string& content) {
    if (path.empty() || path == "-") {
        std::cout << content;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw invalid_input("cannot open output file '" + path + "'");
    out << content;
}

int cmd_solve(const std::string& config_path, const std::string& method_name,
              std::optional<std::uint64_t> seed, std::optional<double> delta,
              const std::string& out_path) {
    ExperimentConfig cfg = load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (delta) cfg.delta = *delta;
    cfg.methods = {method_from_string(method_name)};
    cfg.validate();

    const BenchProblem problem = make_problem(cfg);
    const long n = cfg.sample_grid.front();
    const Method method = cfg.methods.front();
    const ReplicationContext ctx =
        make_replication_context(problem, cfg, n, 0, method != Method::hoeffding);
    const auto [rec, policy] = run_single(problem, cfg, ctx, n, 0, method);
    if (rec.failed) {
        std::cerr << "solve failed: " << rec.failure << "\n";
        return 1;
    }

    std::ostringstream report;
    report << "problem: " << cfg.problem << "\n";
    report << "method: " << rec.method << "\n";
    report << "samples_per_cell: " << n << "\n";
    report << "safe_estimate: " << bench::detail::format_double(rec.safe_estimate) << "\n";
    report << "true_optimal: " << bench::detail::format_double(rec.true_optimal) << "\n";
    report << "realized_return: " << bench::detail::format_double(rec.realized_return) << "\n";
    report << "policy:";
    for (long a : policy)
        report << ' ' << a;
    report << "\n";
    write_output(out_path, report.str());
    return 0;
}

int cmd_experiment(const std::string& config_path, std::optional<std::uint64_t> seed,
                   std::optional<double> delta, const std::string& method_override,
                   const std::string& out_path) {
    ExperimentConfig cfg = load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (delta) cfg.delta = *delta;
    if (!method_override.empty()) cfg.methods = {method_from_string(method_override)};
    RunResult result = run_experiment(cfg);
    write_output(out_path, records_to_csv(result.records));
    return 0;
}

int cmd_summarize(const std::string& records_path, const std::string& out_path) {
    std::ifstream in(records_path);
    if (!in) throw invalid_input("cannot open records file '" + records_path + "'");
    const auto records = records_from_csv(in);
    write_output(out_path, summary_to_csv(summarize(records)));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Data-driven robust MDP toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_path, method_name, records_path;
    std::optional<std::uint64_t> seed;
    std::optional<double> delta;

    auto* solve = app.add_subcommand("solve", "Solve one problem with one method");
    solve->add_option("--config", config_path, "Experiment config (JSON)")->required();
    solve->add_option("--method", method_name, "hoeffding | bci | rsvf | mean")->required();
    solve->add_option("--seed", seed, "Override the config seed");
    solve->add_option("--delta", delta, "Override the confidence level");
    solve->add_option("--out", out_path, "Write the report here instead of stdout");

    auto* experiment = app.add_subcommand("experiment", "Run the full experiment grid");
    experiment->add_option("--config", config_path, "Experiment config (JSON)")->required();
    experiment->add_option("--seed", seed, "Override the config seed");
    experiment->add_option("--delta", delta, "Override the confidence level");
    experiment->add_option("--method", method_name, "Run a single method only");
    experiment->add_option("--out", out_path, "Records CSV path (default: stdout)");

    auto* summarize_cmd = app.add_subcommand("summarize", "Aggregate a records CSV");
    summarize_cmd->add_option("records", records_path, "Records CSV produced by 'experiment'")
        ->required();
    summarize_cmd->add_option("--out", out_path, "Summary CSV path (default: stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (solve->parsed()) return cmd_solve(config_path, method_name, seed, delta, out_path);
        if (experiment->parsed())
            return cmd_experiment(config_path, seed, delta, method_name, out_path);
        return cmd_summarize(records_path, out_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

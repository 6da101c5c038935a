#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fbkan/harness.hpp"

namespace {

void print_summary(const fbkan::RunSummary& s) {
    std::printf("problem        %s\n", s.problem.c_str());
    std::printf("seed           %llu\n", static_cast<unsigned long long>(s.seed));
    std::printf("iterations     %d\n", s.iterations);
    std::printf("parameters     %zu\n", s.param_count);
    std::printf("final loss     %.6e\n", s.final_loss.total);
    std::printf("relative L2    %.6e\n", s.final_rel_l2);
    if (s.mean_relative_noise > 0.0)
        std::printf("data noise     %.4f (mean relative)\n", s.mean_relative_noise);
    std::printf("wall time      %.1f s\n", s.wall_seconds);
    std::printf("run hash       %s\n", s.hash.c_str());
    std::printf("artifacts      %s\n", s.out_dir.c_str());
}

int run_command(const std::string& config_path, const std::vector<std::string>& sets,
                long long seed, bool seed_given, const std::string& out, bool fast) {
    fbkan::ConfigMap config = fbkan::parse_config_file(fbkan::find_preset(config_path));
    fbkan::apply_overrides(config, sets);
    if (seed_given) config.set("run", "seed", std::to_string(seed));
    if (!out.empty()) config.set("run", "out", out);
    const fbkan::RunConfig rc = fbkan::resolve_config(config, fast ? 0.25 : 1.0);
    const fbkan::RunSummary summary = fbkan::run(rc);
    print_summary(summary);
    return 0;
}

int reproduce_command(const std::string& table, const std::string& out, long long seed,
                      bool fast, const std::string& row) {
    const fbkan::ReproduceReport report =
        fbkan::reproduce(table, out, static_cast<std::uint64_t>(seed), fast ? 0.25 : 1.0, row);
    std::printf("\n%-34s %12s %12s %8s  %s\n", "cell", "published", "obtained", "ratio",
                "status");
    for (const fbkan::CellResult& c : report.cells) {
        const char* status = !c.checked ? "info" : (c.passed ? "pass" : "FAIL");
        std::printf("%-34s %12.4e %12.4e %8.2f  %s\n", c.label.c_str(), c.paper, c.obtained,
                    c.ratio, status);
    }
    for (const std::string& line : report.relation_lines) std::printf("%s\n", line.c_str());
    std::printf("result: %s\n", report.required_ok ? "all required cells pass"
                                                   : "required cells FAILED");
    return report.required_ok ? 0 : 1;
}

int sweep_command(const std::string& axis, const std::string& preset,
                  const std::vector<double>& values, const std::string& out, long long seed,
                  bool fast, const std::vector<std::string>& sets) {
    const fbkan::SweepReport report = fbkan::sweep(
        axis, preset, values, out, static_cast<std::uint64_t>(seed), fast ? 0.25 : 1.0, sets);
    std::printf("\n%12s %12s %12s\n", axis.c_str(), "rel_l2", "noise");
    for (const fbkan::SweepRow& row : report.rows)
        std::printf("%12.4g %12.4e %12.4f\n", row.value, row.rel_l2, row.mean_relative_noise);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Finite-basis KAN training and reproduction tool"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> sets;
    long long seed = 0;
    std::string out;
    bool fast = false;

    CLI::App* run_cmd = app.add_subcommand("run", "Train a model from a config file or preset");
    run_cmd->add_option("--config", config_path, "Config file path or preset name")->required();
    run_cmd->add_option("--set", sets, "Override: section.key=value");
    CLI::Option* seed_opt = run_cmd->add_option("--seed", seed, "Random seed");
    run_cmd->add_option("--out", out, "Output directory");
    run_cmd->add_flag("--fast", fast, "Scale iteration counts by 0.25");

    std::string table;
    std::string repro_out = "runs/reproduce";
    std::string row;
    CLI::App* repro_cmd =
        app.add_subcommand("reproduce", "Re-run a published result table and compare");
    repro_cmd->add_option("table", table, "Table name: data2, pi2 or ml-pi")->required();
    repro_cmd->add_option("--out", repro_out, "Output directory");
    repro_cmd->add_option("--seed", seed, "Random seed");
    repro_cmd->add_flag("--fast", fast, "Scale iteration counts by 0.25");
    repro_cmd->add_option("--row", row, "Only run cells whose id contains this substring");

    std::string axis;
    std::string preset;
    std::vector<double> values;
    std::string sweep_out = "runs/sweep";
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "Run one preset across an axis of values");
    sweep_cmd->add_option("axis", axis, "Sweep axis: subdomains or noise")->required();
    sweep_cmd->add_option("--preset", preset, "Base config preset")->required();
    sweep_cmd->add_option("--values", values, "Axis values")->required()->delimiter(',');
    sweep_cmd->add_option("--out", sweep_out, "Output directory");
    sweep_cmd->add_option("--seed", seed, "Random seed");
    sweep_cmd->add_flag("--fast", fast, "Scale iteration counts by 0.25");
    sweep_cmd->add_option("--set", sets, "Override: section.key=value");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed())
            return run_command(config_path, sets, seed, seed_opt->count() > 0, out, fast);
        if (repro_cmd->parsed()) return reproduce_command(table, repro_out, seed, fast, row);
        if (sweep_cmd->parsed())
            return sweep_command(axis, preset, values, sweep_out, seed, fast, sets);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}

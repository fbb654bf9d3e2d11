// Command-line front end: run experiments, benchmark runtime, emit plot data,
// validate spec files.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mnlrl/harness.hpp"

namespace {

int validate_spec_file(const std::string& path)
{
    const mnlrl::MnlMdpSpec spec = mnlrl::load_spec(path);
    auto issues = mnlrl::check_spec(spec);
    if (issues.empty()) {
        // Model-level checks: every kernel row is a distribution.
        for (int h = 0; h < spec.horizon; ++h)
            for (int s = 0; s < spec.num_states; ++s)
                for (int a = 0; a < spec.num_actions; ++a) {
                    const auto d = mnlrl::transition_probs(spec, spec.true_cores[static_cast<std::size_t>(h)], s, a);
                    if (std::abs(d.probs.sum() - 1.0) > 1e-12 || (d.probs.array() < 0.0).any())
                        issues.push_back({"kernel row (h=" + std::to_string(h) + ", s=" + std::to_string(s) +
                                          ", a=" + std::to_string(a) + ") is not a distribution"});
                }
    }
    for (const auto& i : issues) std::cout << "FAIL " << i.what << '\n';
    if (issues.empty())
        std::cout << "OK " << path << ": " << spec.num_states << " states, " << spec.num_actions << " actions, H="
                  << spec.horizon << ", d=" << spec.dim << ", U=" << spec.max_successors() << '\n';
    return issues.empty() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Randomized and optimistic exploration for MNL-MDPs"};
    app.require_subcommand(1);

    std::string config_path, out_dir, aggregate_path, spec_path;
    long seed_offset = 0;
    int jobs = 1;
    int window = 100;
    int episodes_override = 0;

    auto* run = app.add_subcommand("run", "Run every (algorithm, seed) pair of an experiment config");
    run->add_option("config", config_path, "Experiment config or manifest (JSON)")->required();
    run->add_option("--seed-offset", seed_offset, "Added to every seed");
    run->add_option("--jobs", jobs, "Concurrent runs")->check(CLI::PositiveNumber);
    run->add_option("--out", out_dir, "Output directory (overrides config)");

    auto* bench = app.add_subcommand("bench-runtime", "Per-episode compute time and slope test per algorithm");
    bench->add_option("config", config_path, "Experiment config (JSON)")->required();
    bench->add_option("--episodes", episodes_override, "Override K");
    bench->add_option("--seed-offset", seed_offset, "Added to every seed");
    bench->add_option("--out", out_dir, "Also write runtime.json here");

    auto* plot = app.add_subcommand("plot-data", "Smoothed return/regret curves from an aggregate CSV");
    plot->add_option("aggregate", aggregate_path, "aggregate.csv from a run")->required();
    plot->add_option("--window", window, "Rolling window W")->check(CLI::PositiveNumber);
    plot->add_option("--out", out_dir, "Output directory (default: next to the input)");

    auto* validate = app.add_subcommand("validate", "Check every invariant of a spec file");
    validate->add_option("spec", spec_path, "Spec document (JSON)")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run || *bench) {
            mnlrl::ExperimentConfig cfg = mnlrl::load_experiment_config(config_path);
            for (auto& s : cfg.seeds) s += static_cast<std::uint64_t>(seed_offset);
            if (!out_dir.empty()) cfg.output_dir = out_dir;
            if (*run) {
                const auto res = mnlrl::run_experiment(cfg, jobs);
                for (const auto& r : res.runs)
                    if (!r.ok) std::cerr << "run " << r.label << " seed " << r.seed << " failed: " << r.error << '\n';
                std::cout << "wrote " << res.runs.size() << " runs to " << cfg.output_dir << '\n';
                return res.exit_code;
            }
            if (episodes_override > 0) cfg.episodes = episodes_override;
            cfg.timing = true;
            const auto rows = mnlrl::measure_runtime(cfg);
            std::cout << mnlrl::format_runtime_table(rows);
            if (!out_dir.empty()) {
                std::filesystem::create_directories(out_dir);
                nlohmann::json j = nlohmann::json::array();
                for (const auto& r : rows)
                    j.push_back({{"label", r.label},
                                 {"total_s", r.total_s},
                                 {"slope", r.slope.slope},
                                 {"p_two_sided", r.slope.p_two_sided},
                                 {"p_positive", r.slope.p_positive}});
                std::ofstream((std::filesystem::path(out_dir) / "runtime.json").string()) << j.dump(2) << '\n';
            }
            return 0;
        }
        if (*plot) {
            if (out_dir.empty()) out_dir = std::filesystem::path(aggregate_path).parent_path().string();
            if (out_dir.empty()) out_dir = ".";
            for (const auto& p : mnlrl::emit_plot_data(aggregate_path, out_dir, window)) std::cout << "wrote " << p << '\n';
            return 0;
        }
        if (*validate) return validate_spec_file(spec_path);
    } catch (const mnlrl::ConfigError& e) {
        std::cerr << e.what() << '\n';
        return 1;
    } catch (const mnlrl::Error& e) {
        std::cerr << e.what() << '\n';
        return 1;
    }
    return 0;
}

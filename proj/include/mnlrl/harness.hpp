#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mnlrl/agents.hpp"
#include "mnlrl/envs.hpp"
#include "mnlrl/errors.hpp"
#include "mnlrl/oracle.hpp"
#include "mnlrl/spec.hpp"
#include "mnlrl/stats.hpp"

#ifndef MNLRL_VERSION
#define MNLRL_VERSION "unknown"
#endif

namespace mnlrl {

inline constexpr int kMetricsSchemaVersion = 1;

struct EnvironmentConfig {
    std::string type = "riverswim";  // riverswim | random | file
    int n = 4;
    int horizon = 12;
    // random
    int num_states = 5;
    int num_actions = 2;
    int dim = 4;
    int U = 3;
    double L_theta = 1.0;
    std::uint64_t seed = 0;
    // file
    std::string path;
};

struct MonitorConfig {
    bool concentration = false;
    bool optimism = false;
    bool elliptical_potential = false;
    double concentration_delta = 0.1;
    double concentration_scale = 1.0;
};

struct ExperimentConfig {
    EnvironmentConfig environment;
    std::vector<AgentConfig> algorithms;
    int episodes = 1;
    std::vector<std::uint64_t> seeds{0};
    std::string output_dir = "out";
    MonitorConfig monitors;
    bool timing = false;
};

// ---------------------------------------------------------------------------
// Config documents.

namespace detail {

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& into)
{
    if (j.contains(key) && !j.at(key).is_null()) into = j.at(key).get<T>();
}

template <class T>
void read_opt(const nlohmann::json& j, const char* key, std::optional<T>& into)
{
    if (j.contains(key) && !j.at(key).is_null()) into = j.at(key).get<T>();
}

}  // namespace detail

inline AgentConfig agent_config_from_json(const nlohmann::json& j)
{
    AgentConfig c;
    c.kind = algorithm_kind_from_string(j.at("kind").get<std::string>());
    c.label = j.value("label", to_string(c.kind));
    detail::read_opt(j, "lambda", c.lambda);
    detail::read_opt(j, "c_beta", c.c_beta);
    detail::read_opt(j, "sigma_scale", c.sigma_scale);
    detail::read_opt(j, "M", c.M_override);
    detail::read_opt(j, "eta", c.eta);
    detail::read_opt(j, "kappa", c.kappa);
    detail::read_opt(j, "delta", c.delta);
    detail::read_opt(j, "shared_core", c.shared_core);
    detail::read_opt(j, "warm_start_at_truth", c.warm_start_at_truth);
    detail::read_opt(j, "learn", c.learn);
    return c;
}

inline nlohmann::json agent_config_to_json(const AgentConfig& c)
{
    nlohmann::json j{{"label", c.label},
                     {"kind", to_string(c.kind)},
                     {"c_beta", c.c_beta},
                     {"sigma_scale", c.sigma_scale},
                     {"delta", c.delta},
                     {"shared_core", c.shared_core},
                     {"warm_start_at_truth", c.warm_start_at_truth},
                     {"learn", c.learn}};
    if (c.lambda) j["lambda"] = *c.lambda;
    if (c.M_override) j["M"] = *c.M_override;
    if (c.eta) j["eta"] = *c.eta;
    if (c.kappa) j["kappa"] = *c.kappa;
    return j;
}

inline nlohmann::json experiment_config_to_json(const ExperimentConfig& c)
{
    const auto& e = c.environment;
    nlohmann::json env{{"type", e.type}};
    if (e.type == "riverswim") {
        env["n"] = e.n;
        env["horizon"] = e.horizon;
    } else if (e.type == "random") {
        env.update({{"num_states", e.num_states}, {"num_actions", e.num_actions}, {"dim", e.dim}, {"U", e.U},
                    {"horizon", e.horizon}, {"L_theta", e.L_theta}, {"seed", e.seed}});
    } else {
        env["path"] = e.path;
    }
    auto algs = nlohmann::json::array();
    for (const auto& a : c.algorithms) algs.push_back(agent_config_to_json(a));
    return {{"environment", env},
            {"algorithms", algs},
            {"episodes", c.episodes},
            {"seeds", c.seeds},
            {"output_dir", c.output_dir},
            {"monitors",
             {{"concentration", c.monitors.concentration},
              {"optimism", c.monitors.optimism},
              {"elliptical_potential", c.monitors.elliptical_potential},
              {"concentration_delta", c.monitors.concentration_delta},
              {"concentration_scale", c.monitors.concentration_scale}}},
            {"timing", c.timing}};
}

/// Parses an experiment config; a run manifest (which embeds its config under
/// "config") is accepted too. Throws ConfigError on any schema problem.
inline ExperimentConfig experiment_config_from_json(const nlohmann::json& doc)
{
    try {
        const nlohmann::json& j = doc.contains("config") ? doc.at("config") : doc;
        ExperimentConfig c;
        const auto& env = j.at("environment");
        auto& e = c.environment;
        e.type = env.at("type").get<std::string>();
        if (e.type == "riverswim") {
            detail::read_opt(env, "n", e.n);
            detail::read_opt(env, "horizon", e.horizon);
        } else if (e.type == "random") {
            detail::read_opt(env, "num_states", e.num_states);
            detail::read_opt(env, "num_actions", e.num_actions);
            detail::read_opt(env, "dim", e.dim);
            detail::read_opt(env, "U", e.U);
            detail::read_opt(env, "horizon", e.horizon);
            detail::read_opt(env, "L_theta", e.L_theta);
            detail::read_opt(env, "seed", e.seed);
        } else if (e.type == "file") {
            e.path = env.at("path").get<std::string>();
        } else {
            throw ConfigError("unknown environment type '" + e.type + "'");
        }
        for (const auto& a : j.at("algorithms")) c.algorithms.push_back(agent_config_from_json(a));
        c.episodes = j.at("episodes").get<int>();
        detail::read_opt(j, "seeds", c.seeds);
        detail::read_opt(j, "output_dir", c.output_dir);
        detail::read_opt(j, "timing", c.timing);
        if (j.contains("monitors")) {
            const auto& m = j.at("monitors");
            detail::read_opt(m, "concentration", c.monitors.concentration);
            detail::read_opt(m, "optimism", c.monitors.optimism);
            detail::read_opt(m, "elliptical_potential", c.monitors.elliptical_potential);
            detail::read_opt(m, "concentration_delta", c.monitors.concentration_delta);
            detail::read_opt(m, "concentration_scale", c.monitors.concentration_scale);
        }
        if (c.episodes < 1) throw ConfigError("episodes must be >= 1");
        if (c.seeds.empty()) throw ConfigError("seed list must be nonempty");
        if (c.algorithms.empty()) throw ConfigError("algorithm list must be nonempty");
        for (std::size_t i = 0; i < c.algorithms.size(); ++i)
            for (std::size_t k = 0; k < i; ++k)
                if (c.algorithms[i].label == c.algorithms[k].label)
                    throw ConfigError("duplicate algorithm label '" + c.algorithms[i].label + "'");
        return c;
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError(std::string("malformed experiment config: ") + ex.what());
    } catch (const InvalidArgument& ex) {
        throw ConfigError(ex.what());
    }
}

inline ExperimentConfig load_experiment_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError("config file " + path + " is not valid JSON: " + ex.what());
    }
    return experiment_config_from_json(j);
}

inline MnlMdpSpec build_environment(const EnvironmentConfig& e)
{
    MnlMdpSpec spec;
    if (e.type == "riverswim") {
        spec = build_riverswim(e.n, e.horizon);
    } else if (e.type == "random") {
        Rng rng(e.seed);
        spec = random_mnl_mdp(e.num_states, e.num_actions, e.dim, e.U, e.horizon, e.L_theta, rng);
    } else if (e.type == "file") {
        spec = load_spec(e.path);
    } else {
        throw ConfigError("unknown environment type '" + e.type + "'");
    }
    require_valid(spec);
    return spec;
}

// ---------------------------------------------------------------------------
// Single runs.

struct PotentialCheck {
    double sum = 0.0;
    double bound = 0.0;
    bool holds = true;
};

struct RunResult {
    std::string label;
    std::uint64_t seed = 0;
    bool ok = true;
    std::string error;
    std::string csv_path;
    std::vector<double> returns;
    std::vector<double> regrets;  // cumulative
    std::vector<double> wall_times;
    std::vector<int> optimism;
    std::vector<double> concentration;
    std::vector<PotentialCheck> potential;  // per estimator, ONS kinds only
    double total_wall_s = 0.0;
};

inline std::string run_file_name(const std::string& label, std::uint64_t seed)
{
    return "alg=" + label + "_seed=" + std::to_string(seed) + ".csv";
}

inline std::string format_double(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// Environment-side quantities shared by every run of an experiment.
struct EnvironmentContext {
    MnlMdpSpec spec;
    TabularMdp tabular;
    OracleSolution oracle;
    double v_star = 0.0;
};

inline EnvironmentContext make_context(MnlMdpSpec spec)
{
    EnvironmentContext ctx;
    ctx.tabular = tabular_of(spec);
    ctx.oracle = tabular_value_iteration(ctx.tabular);
    ctx.v_star = ctx.oracle.initial_value(spec.initial_state);
    ctx.spec = std::move(spec);
    return ctx;
}

inline Rng environment_rng(std::uint64_t seed)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0xe1u};
    return Rng(seq);
}

/// Largest over horizon steps of ||theta_h - theta*_h||_G / radius_k.
inline double concentration_ratio(const AgentState& agent, const MnlMdpSpec& spec, const MonitorConfig& mon)
{
    const auto& hp = agent.hyper;
    const int k = agent.episode;
    double radius = 0.0;
    if (agent.config.kind == AlgorithmKind::orrl || agent.config.kind == AlgorithmKind::ucb)
        radius = beta_radius(k, hp.d, hp.U, hp.H, hp.L_theta, hp.lambda, mon.concentration_delta, 1.0);
    else
        radius = alpha_radius(k, hp.d, hp.U, hp.L_phi, hp.L_theta, hp.kappa, hp.lambda, mon.concentration_delta);
    radius *= mon.concentration_scale;
    double worst = 0.0;
    for (int h = 0; h < spec.horizon; ++h) {
        const CoreEstimate& est = agent.estimate_at(h);
        const Vector diff = estimate_theta(est) - spec.true_cores[static_cast<std::size_t>(h)];
        worst = std::max(worst, estimate_gram(est).norm(diff) / radius);
    }
    return worst;
}

/// Plays one (algorithm, seed) run and streams its metrics CSV. Failures are
/// captured in the result instead of thrown.
inline RunResult run_single(const EnvironmentContext& ctx, const AgentConfig& cfg, std::uint64_t seed, int episodes,
                            const MonitorConfig& mon, bool timing, const std::string& csv_path)
{
    RunResult res;
    res.label = cfg.label;
    res.seed = seed;
    res.csv_path = csv_path;
    try {
        std::ofstream out(csv_path, std::ios::trunc);
        if (!out) throw IoError("cannot write " + csv_path);
        const bool extra = mon.optimism || mon.concentration;
        out << "# mnlrl-metrics v" << kMetricsSchemaVersion << " alg=" << cfg.label << " seed=" << seed << '\n';
        out << "episode,return,regret,wall_time_s";
        if (extra) out << ",optimism,concentration_ratio";
        out << '\n';

        const MnlMdpSpec& spec = ctx.spec;
        AgentState agent = make_agent(spec, cfg, seed);
        agent.track_potential = mon.elliptical_potential;
        Rng env_rng = environment_rng(seed);
        double cum = 0.0;
        res.returns.reserve(static_cast<std::size_t>(episodes));
        res.regrets.reserve(static_cast<std::size_t>(episodes));
        res.wall_times.reserve(static_cast<std::size_t>(episodes));
        for (int k = 1; k <= episodes; ++k) {
            const double conc = mon.concentration ? concentration_ratio(agent, spec, mon) : 0.0;
            const EpisodeRecord rec = run_episode(agent, spec, env_rng);
            const auto v_pi = evaluate_policy(ctx.tabular, [&](int h, State s) { return greedy_action(agent.tables, h, s); });
            const double gap = ctx.v_star - v_pi.front()(spec.initial_state);
            if (gap < 0.0) throw InvalidState("policy value exceeds the optimum at episode " + std::to_string(k));
            const double next = cum + gap;
            if (next < cum) throw InvalidState("cumulative regret decreased at episode " + std::to_string(k));
            cum = next;
            const double wt = timing ? rec.wall_time_s : 0.0;
            const int opt = rec.initial_value >= ctx.v_star ? 1 : 0;
            res.returns.push_back(rec.episode_return);
            res.regrets.push_back(cum);
            res.wall_times.push_back(wt);
            res.total_wall_s += rec.wall_time_s;
            out << k << ',' << format_double(rec.episode_return) << ',' << format_double(cum) << ','
                << format_double(wt);
            if (extra) {
                res.optimism.push_back(opt);
                res.concentration.push_back(conc);
                out << ',' << opt << ',' << format_double(conc);
            }
            out << '\n';
        }
        if (mon.elliptical_potential && cfg.kind == AlgorithmKind::rrl) {
            for (std::size_t i = 0; i < agent.potential_sum.size(); ++i) {
                PotentialCheck pc;
                pc.sum = agent.potential_sum[i];
                pc.bound = elliptical_potential_bound(agent.potential_count[i], agent.hyper);
                pc.holds = pc.sum <= pc.bound;
                res.potential.push_back(pc);
            }
        }
        if (!out) throw IoError("write failed for " + csv_path);
    } catch (const std::exception& ex) {
        res.ok = false;
        res.error = ex.what();
    }
    return res;
}

// ---------------------------------------------------------------------------
// Experiments.

struct ExperimentResult {
    std::vector<RunResult> runs;
    std::string manifest_path;
    std::string aggregate_path;
    double v_star = 0.0;
    int exit_code = 0;

    const RunResult* find(const std::string& label, std::uint64_t seed) const
    {
        for (const auto& r : runs)
            if (r.label == label && r.seed == seed) return &r;
        return nullptr;
    }
};

/// Runs `count` independent jobs on up to `jobs` threads.
template <class Fn>
void parallel_for(std::size_t count, int jobs, Fn&& fn)
{
    const auto workers = static_cast<std::size_t>(std::max(1, jobs));
    if (workers == 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, count); ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) fn(i);
        });
    for (auto& t : pool) t.join();
}

inline void write_aggregate(const std::string& path, const ExperimentConfig& cfg, const std::vector<RunResult>& runs)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << "# mnlrl-aggregate v" << kMetricsSchemaVersion << '\n';
    out << "algorithm,episode,return_mean,return_std,regret_mean,regret_std,wall_time_mean\n";
    std::vector<double> ret, reg, wt;
    for (const auto& alg : cfg.algorithms) {
        std::vector<const RunResult*> ok;
        for (const auto& r : runs)
            if (r.label == alg.label && r.ok) ok.push_back(&r);
        if (ok.empty()) continue;
        for (int k = 0; k < cfg.episodes; ++k) {
            ret.clear();
            reg.clear();
            wt.clear();
            for (const auto* r : ok) {
                ret.push_back(r->returns[static_cast<std::size_t>(k)]);
                reg.push_back(r->regrets[static_cast<std::size_t>(k)]);
                wt.push_back(r->wall_times[static_cast<std::size_t>(k)]);
            }
            out << alg.label << ',' << (k + 1) << ',' << format_double(stats::mean(ret)) << ','
                << format_double(stats::stddev(ret)) << ',' << format_double(stats::mean(reg)) << ','
                << format_double(stats::stddev(reg)) << ',' << format_double(stats::mean(wt)) << '\n';
        }
    }
    if (!out) throw IoError("write failed for " + path);
}

inline nlohmann::json run_to_json(const RunResult& r, bool timing)
{
    nlohmann::json j{{"label", r.label},
                     {"seed", r.seed},
                     {"status", r.ok ? "ok" : "failed"},
                     {"csv", std::filesystem::path(r.csv_path).filename().string()},
                     {"episodes_completed", r.returns.size()}};
    if (!r.ok) j["error"] = r.error;
    if (timing) j["wall_time_total_s"] = r.total_wall_s;
    if (!r.potential.empty()) {
        auto arr = nlohmann::json::array();
        for (const auto& p : r.potential) arr.push_back({{"sum", p.sum}, {"bound", p.bound}, {"holds", p.holds}});
        j["elliptical_potential"] = arr;
    }
    if (!r.concentration.empty()) {
        long held = 0;
        for (double c : r.concentration) held += c <= 1.0 ? 1 : 0;
        j["concentration_held_fraction"] = static_cast<double>(held) / static_cast<double>(r.concentration.size());
    }
    return j;
}

/// Executes every (algorithm, seed) run, then writes the aggregate CSV and
/// manifest. Exit code 0 on success, 2 if any run failed.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, int jobs = 1)
{
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(cfg.output_dir, ec);
    if (ec || !fs::is_directory(cfg.output_dir)) throw IoError("cannot create output directory " + cfg.output_dir);

    const EnvironmentContext ctx = make_context(build_environment(cfg.environment));
    for (const auto& a : cfg.algorithms) resolve_hyperparameters(a, ctx.spec);  // fail fast on bad values

    struct Job {
        const AgentConfig* alg;
        std::uint64_t seed;
    };
    std::vector<Job> work;
    for (const auto& a : cfg.algorithms)
        for (auto s : cfg.seeds) work.push_back({&a, s});

    ExperimentResult result;
    result.v_star = ctx.v_star;
    result.runs.resize(work.size());
    const auto t0 = std::chrono::steady_clock::now();
    parallel_for(work.size(), jobs, [&](std::size_t i) {
        const auto path = (fs::path(cfg.output_dir) / run_file_name(work[i].alg->label, work[i].seed)).string();
        result.runs[i] = run_single(ctx, *work[i].alg, work[i].seed, cfg.episodes, cfg.monitors, cfg.timing, path);
    });
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    result.aggregate_path = (fs::path(cfg.output_dir) / "aggregate.csv").string();
    write_aggregate(result.aggregate_path, cfg, result.runs);

    bool any_failed = false;
    auto runs = nlohmann::json::array();
    for (const auto& r : result.runs) {
        any_failed = any_failed || !r.ok;
        runs.push_back(run_to_json(r, cfg.timing));
    }
    nlohmann::json manifest{{"schema_version", kMetricsSchemaVersion},
                            {"code_version", MNLRL_VERSION},
                            {"config", experiment_config_to_json(cfg)},
                            {"oracle_initial_value", ctx.v_star},
                            {"runs", runs},
                            {"status", any_failed ? "partial" : "ok"}};
    if (cfg.timing) manifest["wall_clock_total_s"] = elapsed;
    result.manifest_path = (fs::path(cfg.output_dir) / "manifest.json").string();
    std::ofstream mout(result.manifest_path, std::ios::trunc);
    if (!mout) throw IoError("cannot write " + result.manifest_path);
    mout << manifest.dump(2) << '\n';
    result.exit_code = any_failed ? 2 : 0;
    return result;
}

// ---------------------------------------------------------------------------
// Runtime comparison.

struct RuntimeRow {
    std::string label;
    double total_s = 0.0;
    double mean_episode_s = 0.0;
    stats::SlopeTest slope;
};

/// Per-algorithm totals and per-episode time slopes over the config's first
/// K episodes (first seed). The run is played once to snapshot the agent
/// before every episode; the snapshots are then timed in a shuffled order so
/// that slow phases of the machine are not confounded with k.
inline std::vector<RuntimeRow> measure_runtime(const ExperimentConfig& cfg)
{
    const EnvironmentContext ctx = make_context(build_environment(cfg.environment));
    const auto K = static_cast<std::size_t>(cfg.episodes);
    std::vector<std::size_t> order(K);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), Rng(0x5eedu));
    std::vector<double> ks(K);
    for (std::size_t i = 0; i < K; ++i) ks[i] = static_cast<double>(i + 1);

    std::vector<RuntimeRow> rows;
    const std::uint64_t seed = cfg.seeds.front();
    for (const auto& alg : cfg.algorithms) {
        std::vector<std::pair<AgentState, Rng>> snaps;
        snaps.reserve(K);
        AgentState agent = make_agent(ctx.spec, alg, seed);
        Rng env_rng = environment_rng(seed);
        for (std::size_t k = 0; k < K; ++k) {
            snaps.emplace_back(agent, env_rng);
            run_episode(agent, ctx.spec, env_rng);
        }
        std::vector<double> ts(K);
        RuntimeRow row;
        row.label = alg.label;
        for (std::size_t k : order) {
            auto& [a, r] = snaps[k];
            ts[k] = run_episode(a, ctx.spec, r).wall_time_s;
            row.total_s += ts[k];
            snaps[k] = {};  // release early; the baseline's buffers are large
        }
        row.mean_episode_s = row.total_s / cfg.episodes;
        if (cfg.episodes >= 3) row.slope = stats::slope_t_test(ks, ts);
        rows.push_back(row);
    }
    return rows;
}

inline std::string format_runtime_table(const std::vector<RuntimeRow>& rows)
{
    std::ostringstream os;
    char line[256];
    std::snprintf(line, sizeof line, "%-16s %12s %14s %14s %10s %10s\n", "algorithm", "total_s", "per_episode_s",
                  "slope_s/ep", "p_two", "p_pos");
    os << line;
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%-16s %12.6f %14.3e %14.3e %10.4f %10.4g\n", r.label.c_str(), r.total_s,
                      r.mean_episode_s, r.slope.slope, r.slope.p_two_sided, r.slope.p_positive);
        os << line;
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Plot data.

struct AggregateRow {
    std::string algorithm;
    int episode = 0;
    double return_mean = 0.0, return_std = 0.0, regret_mean = 0.0, regret_std = 0.0, wall_time_mean = 0.0;
};

inline std::vector<AggregateRow> read_aggregate(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open aggregate file " + path);
    std::vector<AggregateRow> rows;
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 7) throw IoError("malformed aggregate row: " + line);
        AggregateRow r;
        r.algorithm = cells[0];
        r.episode = std::stoi(cells[1]);
        r.return_mean = std::stod(cells[2]);
        r.return_std = std::stod(cells[3]);
        r.regret_mean = std::stod(cells[4]);
        r.regret_std = std::stod(cells[5]);
        r.wall_time_mean = std::stod(cells[6]);
        rows.push_back(r);
    }
    return rows;
}

/// Writes plot_return.csv and plot_regret.csv (episode, algorithm, mean, std)
/// with a trailing rolling mean of window W applied to both columns.
inline std::vector<std::string> emit_plot_data(const std::string& aggregate_path, const std::string& out_dir,
                                               int window = 100)
{
    namespace fs = std::filesystem;
    const auto rows = read_aggregate(aggregate_path);
    std::vector<std::string> order;
    std::map<std::string, std::vector<AggregateRow>> by_alg;
    for (const auto& r : rows) {
        if (!by_alg.count(r.algorithm)) order.push_back(r.algorithm);
        by_alg[r.algorithm].push_back(r);
    }
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    std::vector<std::string> written;
    for (const std::string metric : {"return", "regret"}) {
        const auto path = (fs::path(out_dir) / ("plot_" + metric + ".csv")).string();
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw IoError("cannot write " + path);
        out << "# mnlrl-plot v" << kMetricsSchemaVersion << " metric=" << metric << " window=" << window << '\n';
        out << "episode,algorithm,mean,std\n";
        for (const auto& alg : order) {
            const auto& series = by_alg[alg];
            std::vector<double> m, s;
            for (const auto& r : series) {
                m.push_back(metric == "return" ? r.return_mean : r.regret_mean);
                s.push_back(metric == "return" ? r.return_std : r.regret_std);
            }
            const auto ms = stats::rolling_mean(m, window);
            const auto ss = stats::rolling_mean(s, window);
            for (std::size_t i = 0; i < series.size(); ++i)
                out << series[i].episode << ',' << alg << ',' << format_double(ms[i]) << ',' << format_double(ss[i])
                    << '\n';
        }
        written.push_back(path);
    }
    return written;
}

}  // namespace mnlrl

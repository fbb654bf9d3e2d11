#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mnlrl/errors.hpp"
#include "mnlrl/estimators.hpp"
#include "mnlrl/mnl_model.hpp"
#include "mnlrl/planner.hpp"
#include "mnlrl/spec.hpp"
#include "mnlrl/stats.hpp"

namespace mnlrl {

/// Phi(-1) / 2: the guaranteed optimism probability and the upper limit for delta.
inline double optimism_floor() { return stats::normal_cdf(-1.0) / 2.0; }

/// Worst-case product of two successor probabilities over the parameter ball:
/// each softmax probability is at least e^{-2L}/U when logits lie in [-L, L],
/// L = L_phi * L_theta.
inline double kappa_lower_bound(double L_phi, double L_theta, int U)
{
    if (L_phi < 0.0 || L_theta < 0.0) throw InvalidArgument("norm bounds must be nonnegative");
    const double u = static_cast<double>(std::max(U, 2));
    const double p_min = std::exp(-2.0 * L_phi * L_theta) / u;
    return p_min * p_min;
}

/// Confidence radius of the ONS estimate (kappa-dependent).
inline double alpha_radius(int k, int d, int U, double L_phi, double L_theta, double kappa, double lambda,
                           double delta)
{
    if (k < 1) throw InvalidArgument("episode index starts at 1");
    const double kk = static_cast<double>(k);
    const double u = static_cast<double>(std::max(U, 1));
    const double dd = static_cast<double>(d);
    const double potential = 8.0 * dd / kappa * std::log(1.0 + kk * u * L_phi * L_phi / (dd * lambda));
    const double grid = std::max(0.0, std::ceil(2.0 * std::log2(kk * u * L_phi * L_theta)));
    const double martingale =
        (32.0 * L_phi * L_theta / 3.0 + 16.0 / kappa) * std::log((1.0 + grid) * kk * kk / delta);
    return std::sqrt(potential + martingale + 2.0 * std::sqrt(2.0) + 2.0 * lambda * L_theta * L_theta);
}

/// Explicit confidence radius of the mirror-descent estimate with its
/// absolute constant exposed as `c_beta`.
inline double beta_radius(int k, int d, int U, int H, double L_theta, double lambda, double delta, double c_beta)
{
    if (k < 1) throw InvalidArgument("episode index starts at 1");
    const double kk = static_cast<double>(k);
    const double u = static_cast<double>(std::max(U, 2));
    const double dd = static_cast<double>(d);
    const double luk = std::log(u * kk);
    const double inner = lambda * luk + luk * std::log(H * std::sqrt(1.0 + 2.0 * kk) / delta) +
                         dd * std::log(1.0 + kk / (dd * lambda));
    return c_beta * std::sqrt(std::log(u) * inner + lambda * L_theta * L_theta);
}

/// Perturbation count ceil(1 - log(n) / log Phi(1)).
inline int optimistic_sample_count(double n)
{
    return static_cast<int>(std::ceil(1.0 - std::log(n) / std::log(stats::normal_cdf(1.0))));
}

struct AgentConfig {
    std::string label;
    AlgorithmKind kind = AlgorithmKind::rrl;
    std::optional<double> lambda;
    double c_beta = 1.0;
    double sigma_scale = 1.0;
    std::optional<int> M_override;
    std::optional<double> eta;
    std::optional<double> kappa;
    double delta = 0.05;
    /// Tie every horizon step to one estimator (homogeneous environments).
    bool shared_core = false;
    /// Diagnostic knobs: start from the true cores and/or freeze the estimates.
    bool warm_start_at_truth = false;
    bool learn = true;
};

/// Hyperparameters after filling in defaults from the environment.
struct Hyperparameters {
    int d = 0;
    int U = 0;
    int H = 0;
    double L_phi = 0.0;
    double L_theta = 0.0;
    double lambda = 0.0;
    double kappa = 0.0;
    double eta = 0.0;
    double delta = 0.0;
};

/// log U + 2 (1 + L_phi L_theta): the self-concordance constant of the
/// mirror-descent analysis. The default step size is half of it.
inline double omd_alpha(int U, double L_phi, double L_theta)
{
    return std::log(static_cast<double>(std::max(U, 2))) + 2.0 * (1.0 + L_phi * L_theta);
}

inline Hyperparameters resolve_hyperparameters(const AgentConfig& cfg, const MnlMdpSpec& spec)
{
    Hyperparameters hp;
    hp.d = spec.dim;
    hp.U = spec.max_successors();
    hp.H = spec.horizon;
    hp.L_phi = spec.L_phi;
    hp.L_theta = spec.L_theta;
    if (!(cfg.delta > 0.0)) throw InvalidArgument("delta must be positive");
    hp.delta = std::min(cfg.delta, std::nextafter(optimism_floor(), 0.0));
    const double alpha = omd_alpha(hp.U, hp.L_phi, hp.L_theta);
    if (cfg.lambda) {
        hp.lambda = *cfg.lambda;
    } else if (cfg.kind == AlgorithmKind::orrl || cfg.kind == AlgorithmKind::ucb) {
        const double lp = hp.L_phi;
        hp.lambda = std::max(12.0 * std::sqrt(2.0) * lp * lp * lp * alpha, 48.0 * lp * lp * hp.d * alpha);
    } else {
        hp.lambda = hp.L_phi * hp.L_phi;
    }
    hp.kappa = cfg.kappa ? *cfg.kappa : kappa_lower_bound(hp.L_phi, hp.L_theta, hp.U);
    hp.eta = cfg.eta ? *cfg.eta : alpha / 2.0;
    if (!(hp.lambda > 0.0)) throw InvalidArgument("lambda must be positive");
    if (!(hp.kappa > 0.0)) throw InvalidArgument("kappa must be positive");
    if (!(hp.eta > 0.0)) throw InvalidArgument("eta must be positive");
    if (!(cfg.c_beta > 0.0) || !(cfg.sigma_scale > 0.0)) throw InvalidArgument("scales must be positive");
    return hp;
}

struct RrlSchedule {
    double sigma = 0.0;
    int M = 1;
};

inline RrlSchedule schedule_rrl(int k, const Hyperparameters& hp, const AgentConfig& cfg)
{
    const double alpha = alpha_radius(k, hp.d, hp.U, hp.L_phi, hp.L_theta, hp.kappa, hp.lambda, hp.delta);
    return {cfg.sigma_scale * hp.H * alpha, cfg.M_override ? *cfg.M_override : optimistic_sample_count(hp.H)};
}

struct OrrlSchedule {
    double beta = 0.0;
    double sigma = 0.0;
    int M = 1;
    double eta = 0.0;
};

inline OrrlSchedule schedule_orrl(int k, const Hyperparameters& hp, const AgentConfig& cfg)
{
    if (k < 1) throw InvalidArgument("episode index starts at 1");
    const double u = static_cast<double>(std::max(hp.U, 2));
    const double beta = cfg.c_beta * std::sqrt(static_cast<double>(hp.d)) * std::log(u) *
                        std::log(static_cast<double>(k) * hp.H + 1.0);
    const int M = cfg.M_override ? *cfg.M_override : optimistic_sample_count(hp.H * u);
    return {beta, cfg.sigma_scale * hp.H * beta, M, hp.eta};
}

inline ScheduleValues schedule_for(int k, const Hyperparameters& hp, const AgentConfig& cfg)
{
    ScheduleValues sv;
    switch (cfg.kind) {
    case AlgorithmKind::rrl: {
        const auto r = schedule_rrl(k, hp, cfg);
        sv.sigma = r.sigma;
        sv.M = r.M;
        break;
    }
    case AlgorithmKind::orrl:
    case AlgorithmKind::ucb: {
        const auto o = schedule_orrl(k, hp, cfg);
        sv.beta = o.beta;
        sv.sigma = o.sigma;
        sv.M = o.M;
        break;
    }
    case AlgorithmKind::baseline:
        sv.alpha = cfg.c_beta * alpha_radius(k, hp.d, hp.U, hp.L_phi, hp.L_theta, hp.kappa, hp.lambda, hp.delta);
        break;
    }
    return sv;
}

// ---------------------------------------------------------------------------

struct EpisodeRecord {
    std::vector<State> states;   // H + 1 visited states
    std::vector<Action> actions;
    std::vector<double> rewards;
    std::vector<int> responses;  // slot of the observed successor (one-hot y)
    double episode_return = 0.0;
    double initial_value = 0.0;  // the agent's V_1(s_1) for this episode
    double wall_time_s = 0.0;    // planning + estimation only
};

struct AgentState {
    AgentConfig config;
    Hyperparameters hyper;
    std::vector<CoreEstimate> estimates;  // H entries, or 1 when shared
    int episode = 1;                      // index of the next episode
    ValueTables tables;
    Rng rng;
    bool track_potential = false;
    std::vector<double> potential_sum;   // per estimator
    std::vector<long> potential_count;

    const CoreEstimate& estimate_at(int h) const
    {
        return estimates[config.shared_core ? 0 : static_cast<std::size_t>(h)];
    }
    CoreEstimate& estimate_at(int h) { return estimates[config.shared_core ? 0 : static_cast<std::size_t>(h)]; }
};

inline AgentState make_agent(const MnlMdpSpec& spec, AgentConfig config, std::uint64_t seed)
{
    AgentState ag;
    ag.hyper = resolve_hyperparameters(config, spec);
    ag.config = std::move(config);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x5eedu};
    ag.rng.seed(seq);
    const int n_est = ag.config.shared_core ? 1 : spec.horizon;
    const auto& hp = ag.hyper;
    for (int i = 0; i < n_est; ++i) {
        switch (ag.config.kind) {
        case AlgorithmKind::rrl: ag.estimates.emplace_back(make_ons_state(hp.d, hp.kappa, hp.lambda)); break;
        case AlgorithmKind::orrl:
        case AlgorithmKind::ucb: ag.estimates.emplace_back(make_omd_state(hp.d, hp.eta, hp.lambda)); break;
        case AlgorithmKind::baseline:
            ag.estimates.emplace_back(BaselineState{make_mle_state(hp.d, hp.lambda), GramMatrix(hp.d, hp.lambda), hp.kappa});
            break;
        }
        if (ag.config.warm_start_at_truth) {
            const Vector& truth = spec.true_cores[static_cast<std::size_t>(i)];
            std::visit(
                [&](auto& e) {
                    using T = std::decay_t<decltype(e)>;
                    if constexpr (std::is_same_v<T, BaselineState>) e.mle.theta = truth;
                    else e.theta = truth;
                },
                ag.estimates.back());
        }
    }
    ag.potential_sum.assign(static_cast<std::size_t>(n_est), 0.0);
    ag.potential_count.assign(static_cast<std::size_t>(n_est), 0);
    return ag;
}

/// Samples s_{h+1} from the true kernel at step h.
inline State sample_next_state(const MnlMdpSpec& spec, int h, State s, Action a, Rng& env_rng)
{
    const auto& core = spec.true_cores[static_cast<std::size_t>(h)];
    const Vector p = mnl::softmax(spec.feature_block(s, a), core);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double u = unif(env_rng);
    double acc = 0.0;
    const auto& succ = spec.successors(s, a);
    for (std::size_t j = 0; j + 1 < succ.size(); ++j) {
        acc += p(static_cast<Eigen::Index>(j));
        if (u < acc) return succ[j];
    }
    return succ.back();
}

/// Builds the episode's value tables without acting (used by monitors).
inline ValueTables plan_episode(AgentState& agent, const MnlMdpSpec& spec)
{
    std::vector<const CoreEstimate*> views;
    views.reserve(static_cast<std::size_t>(spec.horizon));
    for (int h = 0; h < spec.horizon; ++h) views.push_back(&agent.estimate_at(h));
    const ScheduleValues sched = schedule_for(agent.episode, agent.hyper, agent.config);
    return build_value_tables(spec, views, agent.config.kind, sched, agent.rng);
}

namespace detail {

inline void update_estimate(AgentState& agent, const MnlMdpSpec& spec, int h, State s, Action a, State next)
{
    const std::size_t slot = agent.config.shared_core ? 0 : static_cast<std::size_t>(h);
    CoreEstimate& est = agent.estimates[slot];
    std::visit(
        [&](auto& e) {
            using T = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<T, OnsState>) {
                if (agent.track_potential) {
                    agent.potential_sum[slot] += max_inv_norm_sq(spec.feature_block(s, a), e.gram_A);
                    ++agent.potential_count[slot];
                }
                e = ons_update(std::move(e), spec, s, a, next);
            } else if constexpr (std::is_same_v<T, OmdState>) {
                e = omd_update(std::move(e), spec, s, a, next);
            } else {
                const Matrix& phi = spec.feature_block(s, a);
                for (Eigen::Index r = 0; r < phi.rows(); ++r) e.gram_A.accumulate_outer(phi.row(r).transpose(), 0.5 * e.kappa);
                e.gram_A.refresh();
            }
        },
        est);
}

}  // namespace detail

/// Plays one episode: plan, act greedily, observe the true kernel, update the
/// estimators. Wall time covers planning and estimation only.
inline EpisodeRecord run_episode(AgentState& agent, const MnlMdpSpec& spec, Rng& env_rng)
{
    using clock = std::chrono::steady_clock;
    const int H = spec.horizon;
    EpisodeRecord rec;
    rec.states.reserve(static_cast<std::size_t>(H + 1));
    rec.actions.reserve(static_cast<std::size_t>(H));
    rec.rewards.reserve(static_cast<std::size_t>(H));
    rec.responses.reserve(static_cast<std::size_t>(H));

    clock::duration busy{};
    auto t0 = clock::now();
    agent.tables = plan_episode(agent, spec);
    busy += clock::now() - t0;

    const bool baseline = agent.config.kind == AlgorithmKind::baseline;
    std::vector<std::vector<Transition>> fresh(baseline ? agent.estimates.size() : 0);

    State s = spec.initial_state;
    rec.states.push_back(s);
    rec.initial_value = agent.tables.V[0](s);
    for (int h = 0; h < H; ++h) {
        t0 = clock::now();
        const Action a = greedy_action(agent.tables, h, s);
        busy += clock::now() - t0;

        const State next = sample_next_state(spec, h, s, a, env_rng);
        const double r = spec.reward(s, a);
        rec.actions.push_back(a);
        rec.rewards.push_back(r);
        rec.responses.push_back(spec.successor_slot(s, a, next));
        rec.states.push_back(next);
        rec.episode_return += r;

        if (agent.config.learn) {
            t0 = clock::now();
            detail::update_estimate(agent, spec, h, s, a, next);
            if (baseline) fresh[agent.config.shared_core ? 0 : static_cast<std::size_t>(h)].push_back({s, a, next});
            busy += clock::now() - t0;
        }
        s = next;
    }
    if (baseline && agent.config.learn) {
        t0 = clock::now();
        for (std::size_t i = 0; i < agent.estimates.size(); ++i) {
            auto& e = std::get<BaselineState>(agent.estimates[i]);
            e.mle = mle_fit(std::move(e.mle), spec, fresh[i]);
        }
        busy += clock::now() - t0;
    }
    ++agent.episode;
    rec.wall_time_s = std::chrono::duration<double>(busy).count();
    return rec;
}

/// Elliptical-potential limit (4/kappa) d log(1 + n U L_phi^2 / (d lambda))
/// for an estimator that has absorbed n observations.
inline double elliptical_potential_bound(long n, const Hyperparameters& hp)
{
    const double d = static_cast<double>(hp.d);
    return 4.0 / hp.kappa * d *
           std::log(1.0 + static_cast<double>(n) * hp.U * hp.L_phi * hp.L_phi / (d * hp.lambda));
}

}  // namespace mnlrl

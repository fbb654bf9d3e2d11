#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "mnlrl/agents.hpp"
#include "mnlrl/envs.hpp"
#include "mnlrl/oracle.hpp"
#include "test_support.hpp"

using namespace mnlrl;
namespace ts = testing_support;

namespace {

AgentConfig config(AlgorithmKind kind)
{
    AgentConfig c;
    c.label = to_string(kind);
    c.kind = kind;
    return c;
}

}  // namespace

TEST(Kappa, ClosedForms)
{
    EXPECT_DOUBLE_EQ(kappa_lower_bound(0.0, 0.0, 4), 1.0 / 16.0);
    EXPECT_NEAR(kappa_lower_bound(1.0, std::log(2.0), 2), 1.0 / 64.0, 1e-15);
    EXPECT_THROW(kappa_lower_bound(-1.0, 1.0, 2), InvalidArgument);
}

TEST(Kappa, BoundsSampledPairProducts)
{
    std::mt19937_64 g(1);
    for (int rep = 0; rep < 20; ++rep) {
        const auto spec = ts::small_instance(g, 4, 4);
        const int U = spec.max_successors();
        if (U < 2) continue;
        const double bound = kappa_lower_bound(spec.L_phi, spec.L_theta, U);
        double worst = 1.0;
        for (int t = 0; t < 10000 / 20; ++t) {
            const Vector theta = ts::random_in_ball(spec.dim, spec.L_theta, g);
            for (State s = 0; s < spec.num_states; ++s) {
                const auto d = transition_probs(spec, theta, s, 0);
                if (d.probs.size() < 2) continue;
                Vector p = d.probs;
                std::sort(p.data(), p.data() + p.size());
                worst = std::min(worst, p(0) * p(1));
            }
        }
        EXPECT_LE(bound, worst);
    }
}

TEST(Schedules, PerturbationCounts)
{
    EXPECT_EQ(optimistic_sample_count(12), 16);
    EXPECT_EQ(optimistic_sample_count(1), 1);
    EXPECT_EQ(optimistic_sample_count(36), 22);

    const auto spec = build_riverswim(4, 12);
    EXPECT_EQ(schedule_rrl(1, resolve_hyperparameters(config(AlgorithmKind::rrl), spec), config(AlgorithmKind::rrl)).M, 16);
    EXPECT_EQ(schedule_orrl(1, resolve_hyperparameters(config(AlgorithmKind::orrl), spec), config(AlgorithmKind::orrl)).M,
              22);
    auto c = config(AlgorithmKind::orrl);
    c.M_override = 5;
    EXPECT_EQ(schedule_orrl(3, resolve_hyperparameters(c, spec), c).M, 5);
}

TEST(Schedules, RadiiMonotoneInEpisode)
{
    for (int d : {1, 4, 17})
        for (int U : {2, 3, 5})
            for (double L : {0.5, 2.0})
                for (double kappa : {1e-3, 0.2})
                    for (double lambda : {0.1, 1.0, 50.0}) {
                        double prev_a = 0.0, prev_b = 0.0;
                        for (int k = 1; k <= 300; ++k) {
                            const double a = alpha_radius(k, d, U, 1.0, L, kappa, lambda, 0.05);
                            const double b = beta_radius(k, d, U, 12, L, lambda, 0.05, 1.0);
                            EXPECT_GE(a, prev_a);
                            EXPECT_GE(b, prev_b);
                            prev_a = a;
                            prev_b = b;
                        }
                    }
    EXPECT_THROW(alpha_radius(0, 2, 2, 1.0, 1.0, 0.1, 1.0, 0.05), InvalidArgument);
}

TEST(Schedules, OrrlBetaStrictlyIncreasing)
{
    const auto spec = build_riverswim(4, 12);
    const auto c = config(AlgorithmKind::orrl);
    const auto hp = resolve_hyperparameters(c, spec);
    double prev = 0.0;
    for (int k = 1; k < 500; ++k) {
        const auto s = schedule_orrl(k, hp, c);
        EXPECT_GT(s.beta, prev);
        EXPECT_DOUBLE_EQ(s.sigma, 12 * s.beta);
        EXPECT_DOUBLE_EQ(s.eta, hp.eta);
        prev = s.beta;
    }
    const double u = 3.0;
    EXPECT_NEAR(schedule_orrl(1, hp, c).beta, std::sqrt(double(hp.d)) * std::log(u) * std::log(13.0), 1e-12);
}

TEST(Schedules, RrlSigmaIsScaledAlpha)
{
    const auto spec = build_riverswim(4, 12);
    auto c = config(AlgorithmKind::rrl);
    c.sigma_scale = 0.25;
    const auto hp = resolve_hyperparameters(c, spec);
    const double a = alpha_radius(7, hp.d, hp.U, hp.L_phi, hp.L_theta, hp.kappa, hp.lambda, hp.delta);
    EXPECT_DOUBLE_EQ(schedule_rrl(7, hp, c).sigma, 0.25 * 12 * a);
}

TEST(Hyperparameters, DefaultsAndGuards)
{
    const auto spec = build_riverswim(4, 12);
    const auto hp_rrl = resolve_hyperparameters(config(AlgorithmKind::rrl), spec);
    EXPECT_EQ(hp_rrl.lambda, 1.0);
    EXPECT_EQ(hp_rrl.U, 3);
    EXPECT_EQ(hp_rrl.H, 12);
    EXPECT_DOUBLE_EQ(hp_rrl.kappa, kappa_lower_bound(1.0, spec.L_theta, 3));
    const double alpha = std::log(3.0) + 2.0 * (1.0 + spec.L_theta);
    EXPECT_DOUBLE_EQ(hp_rrl.eta, alpha / 2.0);

    const auto hp_orrl = resolve_hyperparameters(config(AlgorithmKind::orrl), spec);
    EXPECT_DOUBLE_EQ(hp_orrl.lambda, std::max(12.0 * std::sqrt(2.0) * alpha, 48.0 * spec.dim * alpha));

    auto c = config(AlgorithmKind::rrl);
    c.delta = 0.5;
    EXPECT_LT(resolve_hyperparameters(c, spec).delta, optimism_floor());
    c.delta = 0.0;
    EXPECT_THROW(resolve_hyperparameters(c, spec), InvalidArgument);
    c = config(AlgorithmKind::rrl);
    c.lambda = -1.0;
    EXPECT_THROW(resolve_hyperparameters(c, spec), InvalidArgument);
    c = config(AlgorithmKind::ucb);
    c.c_beta = 0.0;
    EXPECT_THROW(resolve_hyperparameters(c, spec), InvalidArgument);
    c = config(AlgorithmKind::rrl);
    c.kappa = 0.0;
    EXPECT_THROW(resolve_hyperparameters(c, spec), InvalidArgument);
}

// ---------------------------------------------------------------------------

TEST(RunEpisode, SingleStepSingleAction)
{
    MnlMdpSpec spec;
    spec.num_states = 2;
    spec.num_actions = 1;
    spec.horizon = 1;
    spec.dim = 2;
    spec.reachable = {{0, 1}, {0, 1}};
    spec.features = {Matrix::Identity(2, 2), Matrix::Identity(2, 2)};
    spec.rewards = (Matrix(2, 1) << 0.37, 0.9).finished();
    spec.true_cores = {Vector::Zero(2)};
    for (const auto kind : {AlgorithmKind::rrl, AlgorithmKind::orrl, AlgorithmKind::ucb, AlgorithmKind::baseline}) {
        auto agent = make_agent(spec, config(kind), 3);
        Rng env(4);
        const auto rec = run_episode(agent, spec, env);
        EXPECT_EQ(rec.actions.size(), 1u);
        EXPECT_EQ(rec.states.size(), 2u);
        EXPECT_DOUBLE_EQ(rec.episode_return, 0.37);
        EXPECT_EQ(agent.episode, 2);
        EXPECT_GE(rec.wall_time_s, 0.0);
    }
}

TEST(RunEpisode, CounterAndEstimateLayout)
{
    const auto spec = build_riverswim(4, 6);
    for (const auto kind : {AlgorithmKind::rrl, AlgorithmKind::orrl, AlgorithmKind::ucb, AlgorithmKind::baseline}) {
        auto agent = make_agent(spec, config(kind), 1);
        EXPECT_EQ(agent.estimates.size(), 6u);
        Rng env(2);
        for (int k = 1; k <= 20; ++k) {
            EXPECT_EQ(agent.episode, k);
            const auto rec = run_episode(agent, spec, env);
            EXPECT_EQ(rec.states.size(), 7u);
            EXPECT_EQ(rec.responses.size(), 6u);
            EXPECT_EQ(rec.states.front(), spec.initial_state);
            for (std::size_t h = 0; h < 6; ++h)
                EXPECT_EQ(spec.successors(rec.states[h], rec.actions[h])[static_cast<std::size_t>(rec.responses[h])],
                          rec.states[h + 1]);
        }
        if (kind == AlgorithmKind::baseline) {
            for (const auto& e : agent.estimates) EXPECT_EQ(std::get<BaselineState>(e).mle.sample_buffer.size(), 20u);
        } else {
            // Online kinds carry no sample buffer at all.
            for (const auto& e : agent.estimates) EXPECT_FALSE(std::holds_alternative<BaselineState>(e));
        }
    }
    auto c = config(AlgorithmKind::rrl);
    c.shared_core = true;
    EXPECT_EQ(make_agent(spec, c, 1).estimates.size(), 1u);
}

TEST(RunEpisode, DeterministicUnderSeed)
{
    const auto spec = build_riverswim(5, 8);
    for (const auto kind : {AlgorithmKind::rrl, AlgorithmKind::orrl, AlgorithmKind::ucb, AlgorithmKind::baseline}) {
        auto c = config(kind);
        c.c_beta = 0.01;
        c.sigma_scale = 0.01;
        auto a = make_agent(spec, c, 11);
        auto b = make_agent(spec, c, 11);
        Rng ea(5), eb(5);
        for (int k = 0; k < 15; ++k) {
            const auto ra = run_episode(a, spec, ea);
            const auto rb = run_episode(b, spec, eb);
            EXPECT_EQ(ra.states, rb.states);
            EXPECT_EQ(ra.actions, rb.actions);
            EXPECT_EQ(ra.initial_value, rb.initial_value);
        }
        for (int h = 0; h < 8; ++h) {
            EXPECT_EQ(estimate_theta(a.estimate_at(h)), estimate_theta(b.estimate_at(h)));
            EXPECT_EQ(estimate_gram(a.estimate_at(h)).matrix(), estimate_gram(b.estimate_at(h)).matrix());
        }
    }
}

TEST(RunEpisode, PerfectModelPlaysOptimalPolicy)
{
    const auto spec = build_riverswim(4, 12);
    const auto oracle = exact_value_iteration(spec);
    std::vector<CoreEstimate> ests;
    for (const auto& t : spec.true_cores) {
        auto st = make_ons_state(spec.dim, 0.1, 1.0);
        st.theta = t;
        ests.emplace_back(std::move(st));
    }
    std::vector<const CoreEstimate*> views;
    for (const auto& e : ests) views.push_back(&e);
    Rng rng(1);
    const auto tables = build_value_tables(spec, views, AlgorithmKind::rrl, ScheduleValues{}, rng);
    for (int h = 0; h < 12; ++h)
        for (State s = 0; s < 4; ++s)
            EXPECT_EQ(greedy_action(tables, h, s), oracle.optimal_policy[static_cast<std::size_t>(h)][static_cast<std::size_t>(s)]);
}

TEST(Greedy, InvariantToConstantShift)
{
    std::mt19937_64 g(3);
    std::normal_distribution<double> n;
    for (int rep = 0; rep < 200; ++rep) {
        ValueTables t;
        t.Q.assign(2, Matrix(3, 4));
        for (auto& q : t.Q)
            for (int i = 0; i < q.size(); ++i) q.data()[i] = std::round(2.0 * n(g)) / 2.0;  // plenty of ties
        ValueTables u = t;
        const double c = std::ldexp(std::round(8.0 * n(g)), -2);
        for (auto& q : u.Q) q.array() += c;
        for (int h = 0; h < 2; ++h)
            for (State s = 0; s < 3; ++s) EXPECT_EQ(greedy_action(t, h, s), greedy_action(u, h, s));
    }
}

TEST(Baseline, MleConsistencyOnRiverSwim)
{
    const auto spec = build_riverswim(4, 12);
    auto agent = make_agent(spec, config(AlgorithmKind::baseline), 1);
    auto& est = std::get<BaselineState>(agent.estimates[0]);
    Rng env(9);
    std::vector<Transition> samples;
    for (State s = 0; s < 4; ++s)
        for (Action a = 0; a < 2; ++a)
            for (int i = 0; i < 5000; ++i) samples.push_back({s, a, sample_next_state(spec, 0, s, a, env)});
    est.mle = mle_fit(std::move(est.mle), spec, samples);
    for (State s = 0; s < 4; ++s)
        for (Action a = 0; a < 2; ++a) {
            const auto fit = transition_probs(spec, est.mle.theta, s, a);
            const auto truth = transition_probs(spec, spec.true_cores[0], s, a);
            EXPECT_LT(0.5 * (fit.probs - truth.probs).cwiseAbs().sum(), 0.05);
        }
}

TEST(EllipticalPotential, HoldsWithNontrivialKappa)
{
    const auto spec = build_riverswim(4, 6);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        auto c = config(AlgorithmKind::rrl);
        c.kappa = 0.5;
        c.lambda = 0.25;
        c.sigma_scale = 1e-3;
        auto agent = make_agent(spec, c, seed);
        agent.track_potential = true;
        Rng env(seed + 100);
        for (int k = 0; k < 300; ++k) run_episode(agent, spec, env);
        for (std::size_t i = 0; i < agent.estimates.size(); ++i) {
            EXPECT_EQ(agent.potential_count[i], 300);
            EXPECT_GT(agent.potential_sum[i], 0.0);
            EXPECT_LE(agent.potential_sum[i], elliptical_potential_bound(agent.potential_count[i], agent.hyper));
        }
    }
}

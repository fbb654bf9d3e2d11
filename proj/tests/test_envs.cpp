#include <cmath>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "mnlrl/envs.hpp"
#include "mnlrl/estimators.hpp"
#include "mnlrl/mnl_model.hpp"
#include "test_support.hpp"

using namespace mnlrl;

namespace {

TabularKernel single_group(const Vector& probs)
{
    TabularKernel k;
    k.num_states = static_cast<int>(probs.size());
    k.num_actions = 1;
    std::vector<TransitionDist> step;
    std::vector<State> support(static_cast<std::size_t>(probs.size()));
    for (int i = 0; i < probs.size(); ++i) support[static_cast<std::size_t>(i)] = i;
    for (int s = 0; s < k.num_states; ++s) step.push_back({support, probs});
    k.probs = {step};
    return k;
}

}  // namespace

TEST(RiverSwim, FourStateKernel)
{
    const auto spec = build_riverswim(4, 12);
    EXPECT_EQ(spec.num_states, 4);
    EXPECT_EQ(spec.num_actions, 2);
    EXPECT_EQ(spec.dim, 14);
    EXPECT_EQ(spec.initial_state, 0);
    EXPECT_TRUE(check_spec(spec).empty());
    const Vector& core = spec.true_cores[5];

    const auto mid = transition_probs(spec, core, 1, 1);
    EXPECT_EQ(mid.support, (std::vector<State>{0, 1, 2}));
    EXPECT_NEAR(mid.probs(0), 0.05, 1e-12);
    EXPECT_NEAR(mid.probs(1), 0.6, 1e-12);
    EXPECT_NEAR(mid.probs(2), 0.35, 1e-12);

    const auto left = transition_probs(spec, core, 2, 0);
    EXPECT_EQ(left.support, (std::vector<State>{1}));
    EXPECT_EQ(left.probs(0), 1.0);
    EXPECT_EQ(spec.reward(2, 0), 0.0);

    const auto first = transition_probs(spec, core, 0, 1);
    EXPECT_NEAR(first.probs(0), 0.4, 1e-12);
    EXPECT_NEAR(first.probs(1), 0.6, 1e-12);
    const auto last = transition_probs(spec, core, 3, 1);
    EXPECT_EQ(last.support, (std::vector<State>{2, 3}));
    EXPECT_NEAR(last.probs(0), 0.4, 1e-12);
    EXPECT_NEAR(last.probs(1), 0.6, 1e-12);
    EXPECT_EQ(spec.successors(0, 0), (std::vector<State>{0}));
}

TEST(RiverSwim, Rewards)
{
    for (int n : {3, 4, 8}) {
        const auto spec = build_riverswim(n, 5);
        for (State s = 0; s < n; ++s)
            for (Action a = 0; a < 2; ++a) {
                double expected = 0.0;
                if (s == 0 && a == 0) expected = 0.005;
                if (s == n - 1 && a == 1) expected = 1.0;
                EXPECT_EQ(spec.reward(s, a), expected);
            }
    }
}

TEST(RiverSwim, Errors)
{
    EXPECT_THROW(build_riverswim(2, 5), InvalidArgument);
    EXPECT_THROW(build_riverswim(4, 0), InvalidArgument);
}

TEST(RiverSwim, RoundTripsEveryStep)
{
    for (int n : {3, 4, 6, 8}) {
        const auto tab = riverswim_tabular(n, 7);
        const auto spec = spec_from_tabular(tab);
        for (int h = 0; h < 7; ++h)
            for (State s = 0; s < n; ++s)
                for (Action a = 0; a < 2; ++a) {
                    const auto& want = tab.kernel.at(h, s, a);
                    const auto got = transition_probs(spec, spec.true_cores[static_cast<std::size_t>(h)], s, a);
                    EXPECT_EQ(got.support, want.support);
                    EXPECT_LT((got.probs - want.probs).cwiseAbs().maxCoeff(), 1e-12);
                }
        EXPECT_EQ(spec.dim, n + 2 + 3 * (n - 2) + 2);  // left: one slot each
    }
}

TEST(Embedding, UniformKernelHasZeroCore)
{
    const auto e = tabular_embed(single_group(Vector::Constant(4, 0.25)));
    EXPECT_EQ(e.theta_star[0].cwiseAbs().maxCoeff(), 0.0);
}

TEST(Embedding, TwoSuccessorCenteredLogits)
{
    const auto e = tabular_embed(single_group((Vector(2) << 0.25, 0.75).finished()));
    EXPECT_NEAR(e.theta_star[0](0), -std::log(3.0) / 2.0, 1e-15);
    EXPECT_NEAR(e.theta_star[0](1), std::log(3.0) / 2.0, 1e-15);
    EXPECT_EQ(e.dim, 4);
    EXPECT_EQ(e.features[1](1, 3), 1.0);
    EXPECT_EQ(e.features[1].sum(), 2.0);
}

TEST(Embedding, CenteringIsMinimumNorm)
{
    // Any other representative of the same group differs by a constant shift.
    const Vector p = (Vector(3) << 0.2, 0.5, 0.3).finished();
    const auto e = tabular_embed(single_group(p));
    const Vector c = e.theta_star[0].head(3);
    for (double shift : {-1.0, -0.1, 0.1, 1.0}) EXPECT_LT(c.norm(), (c.array() + shift).matrix().norm());
}

TEST(Embedding, Errors)
{
    EXPECT_THROW(tabular_embed(single_group((Vector(2) << 0.0, 1.0).finished())), InvalidKernel);
    TabularKernel empty;
    EXPECT_THROW(tabular_embed(empty), InvalidKernel);
}

TEST(Embedding, MleRecoversKernelWithLotsOfData)
{
    const auto spec = build_riverswim(4, 1);
    auto st = make_mle_state(spec.dim, 1e-6);
    Rng env(4);
    std::vector<Transition> samples;
    samples.reserve(100000);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 100000; ++i) {
        const State s = static_cast<State>(i % 4);
        const Action a = static_cast<Action>((i / 4) % 2);
        const auto d = transition_probs(spec, spec.true_cores[0], s, a);
        double acc = 0.0, x = u(env);
        std::size_t j = 0;
        for (; j + 1 < d.support.size(); ++j) {
            acc += d.probs(static_cast<Eigen::Index>(j));
            if (x < acc) break;
        }
        samples.push_back({s, a, d.support[j]});
    }
    st = mle_fit(st, spec, samples);
    for (State s = 0; s < 4; ++s)
        for (Action a = 0; a < 2; ++a) {
            const auto fit = transition_probs(spec, st.theta, s, a);
            const auto truth = transition_probs(spec, spec.true_cores[0], s, a);
            EXPECT_LT(0.5 * (fit.probs - truth.probs).cwiseAbs().sum(), 0.01);
        }
}

TEST(RandomMdp, InvariantsOnManySeeds)
{
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        Rng rng(seed);
        const int S = 2 + static_cast<int>(seed % 6);
        const int U = 1 + static_cast<int>(seed % static_cast<std::uint64_t>(S));
        const auto spec = random_mnl_mdp(S, 1 + static_cast<int>(seed % 3), 1 + static_cast<int>(seed % 7), U,
                                         1 + static_cast<int>(seed % 4), 0.5 + 0.01 * static_cast<double>(seed % 200), rng);
        EXPECT_TRUE(check_spec(spec).empty()) << "seed " << seed;
        for (const auto& phi : spec.features)
            for (Eigen::Index r = 0; r < phi.rows(); ++r) EXPECT_LE(phi.row(r).norm(), spec.L_phi + 1e-12);
        for (const auto& c : spec.true_cores) EXPECT_LE(c.norm(), spec.L_theta + 1e-12);
        for (const auto& r : spec.reachable) {
            EXPECT_EQ(static_cast<int>(r.size()), U);
            EXPECT_TRUE(std::is_sorted(r.begin(), r.end()));
            EXPECT_EQ(std::adjacent_find(r.begin(), r.end()), r.end());
        }
        EXPECT_GE(spec.rewards.minCoeff(), 0.0);
        EXPECT_LE(spec.rewards.maxCoeff(), 1.0);
    }
}

TEST(RandomMdp, DeterministicKernelWhenSingleSuccessor)
{
    Rng rng(3);
    const auto spec = random_mnl_mdp(4, 2, 3, 1, 2, 1.0, rng);
    const Vector theta = Vector::Constant(3, 0.4);
    for (State s = 0; s < 4; ++s)
        for (Action a = 0; a < 2; ++a) {
            EXPECT_EQ(transition_probs(spec, theta, s, a).probs(0), 1.0);
            EXPECT_EQ(loss_gradient(spec, theta, s, a, spec.successors(s, a)[0]).norm(), 0.0);
        }
}

TEST(RandomMdp, SameSeedSameSpec)
{
    Rng a(17), b(17);
    const auto x = random_mnl_mdp(5, 2, 4, 3, 3, 2.0, a);
    const auto y = random_mnl_mdp(5, 2, 4, 3, 3, 2.0, b);
    EXPECT_EQ(spec_to_json(x).dump(), spec_to_json(y).dump());
}

TEST(RandomMdp, Errors)
{
    Rng rng(1);
    EXPECT_THROW(random_mnl_mdp(3, 1, 2, 4, 1, 1.0, rng), InvalidArgument);
    EXPECT_THROW(random_mnl_mdp(3, 1, 0, 2, 1, 1.0, rng), InvalidArgument);
    EXPECT_THROW(random_mnl_mdp(3, 1, 2, 2, 1, -1.0, rng), InvalidArgument);
}

TEST(SpecIo, JsonRoundTrip)
{
    Rng rng(8);
    const auto spec = random_mnl_mdp(5, 3, 4, 3, 2, 1.7, rng);
    const auto path = (std::filesystem::temp_directory_path() / "mnlrl_spec_roundtrip.json").string();
    save_spec(spec, path);
    const auto back = load_spec(path);
    EXPECT_EQ(back.dim, spec.dim);
    EXPECT_EQ(back.reachable, spec.reachable);
    EXPECT_EQ(back.rewards, spec.rewards);
    ASSERT_EQ(back.features.size(), spec.features.size());
    for (std::size_t i = 0; i < spec.features.size(); ++i) EXPECT_EQ(back.features[i], spec.features[i]);
    for (std::size_t i = 0; i < spec.true_cores.size(); ++i) EXPECT_EQ(back.true_cores[i], spec.true_cores[i]);
    EXPECT_EQ(back.L_theta, spec.L_theta);
    std::filesystem::remove(path);
    EXPECT_THROW(load_spec(path), IoError);
}

TEST(SpecIo, ValidationCatchesBrokenSpecs)
{
    auto spec = build_riverswim(4, 3);
    EXPECT_TRUE(check_spec(spec).empty());
    auto bad = spec;
    bad.true_cores.pop_back();
    EXPECT_FALSE(check_spec(bad).empty());
    bad = spec;
    bad.features[3](0, 0) = 5.0;  // norm above L_phi
    EXPECT_FALSE(check_spec(bad).empty());
    bad = spec;
    bad.reachable[2].push_back(9);
    EXPECT_FALSE(check_spec(bad).empty());
    EXPECT_THROW(require_valid(bad), InvalidArgument);
}

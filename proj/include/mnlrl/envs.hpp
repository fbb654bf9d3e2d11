#pragma once

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "mnlrl/errors.hpp"
#include "mnlrl/estimators.hpp"
#include "mnlrl/linalg.hpp"
#include "mnlrl/mnl_model.hpp"
#include "mnlrl/spec.hpp"

namespace mnlrl {

/// Explicit next-state distributions, indexed [h][s * num_actions + a].
struct TabularKernel {
    int num_states = 0;
    int num_actions = 0;
    std::vector<std::vector<TransitionDist>> probs;

    int horizon() const { return static_cast<int>(probs.size()); }
    const TransitionDist& at(int h, State s, Action a) const
    {
        return probs[static_cast<std::size_t>(h)][static_cast<std::size_t>(s * num_actions + a)];
    }
};

/// A tabular MDP: kernel plus known rewards and start state.
struct TabularMdp {
    TabularKernel kernel;
    Matrix rewards;
    State initial_state = 0;
};

struct Embedding {
    std::vector<Matrix> features;  // per (s, a), one-hot rows
    std::vector<Vector> theta_star;  // per h
    int dim = 0;
};

/// Exact MNL representation of a strictly positive tabular kernel: one
/// one-hot coordinate per (s, a, s') slot, and per-group mean-centered log
/// probabilities as the core (the minimum-norm choice within each group).
inline Embedding tabular_embed(const TabularKernel& kernel)
{
    if (kernel.horizon() == 0) throw InvalidKernel("kernel has no horizon steps");
    const auto pairs = static_cast<std::size_t>(kernel.num_states * kernel.num_actions);
    const auto& first = kernel.probs.front();
    if (first.size() != pairs) throw InvalidKernel("kernel has wrong number of state-action pairs");

    Embedding e;
    std::vector<int> offset(pairs);
    for (std::size_t i = 0; i < pairs; ++i) {
        offset[i] = e.dim;
        e.dim += static_cast<int>(first[i].support.size());
    }
    e.features.resize(pairs);
    for (std::size_t i = 0; i < pairs; ++i) {
        const auto u = static_cast<Eigen::Index>(first[i].support.size());
        e.features[i] = Matrix::Zero(u, e.dim);
        for (Eigen::Index j = 0; j < u; ++j) e.features[i](j, offset[i] + j) = 1.0;
    }
    for (int h = 0; h < kernel.horizon(); ++h) {
        const auto& step = kernel.probs[static_cast<std::size_t>(h)];
        if (step.size() != pairs) throw InvalidKernel("kernel has wrong number of state-action pairs");
        Vector theta = Vector::Zero(e.dim);
        for (std::size_t i = 0; i < pairs; ++i) {
            if (step[i].support != first[i].support) throw InvalidKernel("supports must not change with h");
            const Vector& p = step[i].probs;
            if (p.size() == 0) throw InvalidKernel("empty support");
            if ((p.array() <= 0.0).any()) throw InvalidKernel("zero probability on support has no log");
            const Vector logs = p.array().log().matrix();
            theta.segment(offset[i], p.size()) = (logs.array() - logs.mean()).matrix();
        }
        e.theta_star.push_back(std::move(theta));
    }
    return e;
}

inline MnlMdpSpec spec_from_tabular(const TabularMdp& mdp)
{
    const Embedding e = tabular_embed(mdp.kernel);
    MnlMdpSpec spec;
    spec.num_states = mdp.kernel.num_states;
    spec.num_actions = mdp.kernel.num_actions;
    spec.horizon = mdp.kernel.horizon();
    spec.dim = e.dim;
    for (const auto& d : mdp.kernel.probs.front()) spec.reachable.push_back(d.support);
    spec.features = e.features;
    spec.rewards = mdp.rewards;
    spec.true_cores = e.theta_star;
    spec.L_phi = 1.0;
    double core_norm = 0.0;
    for (const auto& c : e.theta_star) core_norm = std::max(core_norm, c.norm());
    spec.L_theta = core_norm > 0.0 ? 1.5 * core_norm : 1.0;
    spec.initial_state = mdp.initial_state;
    return spec;
}

/// RiverSwim chain with n states (0 = leftmost). Action 0 swims left
/// (deterministic), action 1 swims right against the current.
inline TabularMdp riverswim_tabular(int n, int horizon)
{
    if (n < 3) throw InvalidArgument("RiverSwim needs at least 3 states");
    if (horizon < 1) throw InvalidArgument("horizon must be positive");
    TabularMdp mdp;
    mdp.kernel.num_states = n;
    mdp.kernel.num_actions = 2;
    std::vector<TransitionDist> step(static_cast<std::size_t>(2 * n));
    for (State s = 0; s < n; ++s) {
        const auto left = static_cast<std::size_t>(2 * s);
        const auto right = left + 1;
        step[left] = {{s == 0 ? 0 : s - 1}, Vector::Ones(1)};
        if (s == 0) {
            step[right] = {{0, 1}, (Vector(2) << 0.4, 0.6).finished()};
        } else if (s == n - 1) {
            step[right] = {{n - 2, n - 1}, (Vector(2) << 0.4, 0.6).finished()};
        } else {
            step[right] = {{s - 1, s, s + 1}, (Vector(3) << 0.05, 0.6, 0.35).finished()};
        }
    }
    mdp.kernel.probs.assign(static_cast<std::size_t>(horizon), step);
    mdp.rewards = Matrix::Zero(n, 2);
    mdp.rewards(0, 0) = 0.005;
    mdp.rewards(n - 1, 1) = 1.0;
    mdp.initial_state = 0;
    return mdp;
}

inline MnlMdpSpec build_riverswim(int n, int horizon) { return spec_from_tabular(riverswim_tabular(n, horizon)); }

namespace detail {

inline Vector uniform_in_ball(int dim, double radius, Rng& rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Vector v(dim);
    double n = 0.0;
    while (n == 0.0) {
        for (int i = 0; i < dim; ++i) v(i) = normal(rng);
        n = v.norm();
    }
    return v * (radius * std::pow(unif(rng), 1.0 / dim) / n);
}

}  // namespace detail

/// Random MNL-MDP: features and cores uniform in their balls, every
/// reachable set a uniformly drawn U-subset, rewards uniform in [0, 1].
inline MnlMdpSpec random_mnl_mdp(int num_states, int num_actions, int dim, int U, int horizon, double L_theta, Rng& rng,
                                 double L_phi = 1.0)
{
    if (num_states < 1 || num_actions < 1 || dim < 1 || horizon < 1) throw InvalidArgument("sizes must be positive");
    if (U < 1 || U > num_states) throw InvalidArgument("U must be in [1, num_states]");
    if (!(L_theta > 0.0) || !(L_phi > 0.0)) throw InvalidArgument("norm bounds must be positive");
    MnlMdpSpec spec;
    spec.num_states = num_states;
    spec.num_actions = num_actions;
    spec.horizon = horizon;
    spec.dim = dim;
    spec.L_phi = L_phi;
    spec.L_theta = L_theta;
    std::vector<State> pool(static_cast<std::size_t>(num_states));
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < num_states * num_actions; ++i) {
        for (int j = 0; j < U; ++j) {
            std::uniform_int_distribution<int> pick(j, num_states - 1);
            std::swap(pool[static_cast<std::size_t>(j)], pool[static_cast<std::size_t>(pick(rng))]);
        }
        std::vector<State> succ(pool.begin(), pool.begin() + U);
        std::sort(succ.begin(), succ.end());
        Matrix phi(U, dim);
        for (int j = 0; j < U; ++j) phi.row(j) = detail::uniform_in_ball(dim, L_phi, rng).transpose();
        spec.reachable.push_back(std::move(succ));
        spec.features.push_back(std::move(phi));
    }
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    spec.rewards = Matrix(num_states, num_actions);
    for (int s = 0; s < num_states; ++s)
        for (int a = 0; a < num_actions; ++a) spec.rewards(s, a) = unif(rng);
    for (int h = 0; h < horizon; ++h) spec.true_cores.push_back(detail::uniform_in_ball(dim, L_theta, rng));
    return spec;
}

/// True kernel of a spec as an explicit table.
inline TabularKernel kernel_of(const MnlMdpSpec& spec)
{
    TabularKernel k;
    k.num_states = spec.num_states;
    k.num_actions = spec.num_actions;
    for (int h = 0; h < spec.horizon; ++h) {
        std::vector<TransitionDist> step;
        for (State s = 0; s < spec.num_states; ++s)
            for (Action a = 0; a < spec.num_actions; ++a)
                step.push_back(transition_probs(spec, spec.true_cores[static_cast<std::size_t>(h)], s, a));
        k.probs.push_back(std::move(step));
    }
    return k;
}

// ---------------------------------------------------------------------------
// JSON documents.

inline nlohmann::json spec_to_json(const MnlMdpSpec& spec)
{
    nlohmann::json j;
    j["num_states"] = spec.num_states;
    j["num_actions"] = spec.num_actions;
    j["horizon"] = spec.horizon;
    j["dim"] = spec.dim;
    j["L_phi"] = spec.L_phi;
    j["L_theta"] = spec.L_theta;
    j["initial_state"] = spec.initial_state;
    j["reachable"] = spec.reachable;
    auto feats = nlohmann::json::array();
    for (const auto& f : spec.features) feats.push_back(detail::matrix_to_json(f));
    j["features"] = feats;
    j["rewards"] = detail::matrix_to_json(spec.rewards);
    auto cores = nlohmann::json::array();
    for (const auto& c : spec.true_cores) cores.push_back(detail::vector_to_json(c));
    j["true_cores"] = cores;
    return j;
}

inline MnlMdpSpec spec_from_json(const nlohmann::json& j)
{
    try {
        MnlMdpSpec spec;
        spec.num_states = j.at("num_states").get<int>();
        spec.num_actions = j.at("num_actions").get<int>();
        spec.horizon = j.at("horizon").get<int>();
        spec.dim = j.at("dim").get<int>();
        spec.L_phi = j.at("L_phi").get<double>();
        spec.L_theta = j.at("L_theta").get<double>();
        spec.initial_state = j.value("initial_state", 0);
        spec.reachable = j.at("reachable").get<std::vector<std::vector<int>>>();
        for (const auto& f : j.at("features")) spec.features.push_back(detail::matrix_from_json(f, spec.dim));
        spec.rewards = detail::matrix_from_json(j.at("rewards"));
        for (const auto& c : j.at("true_cores")) spec.true_cores.push_back(detail::vector_from_json(c));
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed spec document: ") + e.what());
    }
}

inline MnlMdpSpec load_spec(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open spec file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument("spec file " + path + " is not valid JSON: " + e.what());
    }
    return spec_from_json(j);
}

inline void save_spec(const MnlMdpSpec& spec, const std::string& path)
{
    std::ofstream out(path);
    if (!out) throw IoError("cannot write spec file " + path);
    out << spec_to_json(spec).dump(2) << '\n';
}

}  // namespace mnlrl

#pragma once

#include <algorithm>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "mnlrl/errors.hpp"
#include "mnlrl/linalg.hpp"

namespace mnlrl {

using State = int;
using Action = int;
using Rng = std::mt19937_64;

/// Full definition of an episodic MNL-MDP.
///
/// Per-(s,a) data is stored row-major by `s * num_actions + a`. The feature
/// block of a pair has one row per reachable successor, in the same order as
/// `reachable`. Horizon steps are 0-based internally (h = 0 .. horizon-1).
/// The true cores are only consulted by the simulator and the oracle.
struct MnlMdpSpec {
    int num_states = 0;
    int num_actions = 0;
    int horizon = 0;
    int dim = 0;
    std::vector<std::vector<State>> reachable;
    std::vector<Matrix> features;
    Matrix rewards;  // num_states x num_actions
    std::vector<Vector> true_cores;
    double L_phi = 1.0;
    double L_theta = 1.0;
    State initial_state = 0;

    std::size_t pair_index(State s, Action a) const
    {
        if (s < 0 || s >= num_states) throw InvalidArgument("state " + std::to_string(s) + " out of range");
        if (a < 0 || a >= num_actions) throw InvalidArgument("action " + std::to_string(a) + " out of range");
        return static_cast<std::size_t>(s) * static_cast<std::size_t>(num_actions) + static_cast<std::size_t>(a);
    }

    const std::vector<State>& successors(State s, Action a) const { return reachable[pair_index(s, a)]; }

    /// Rows are phi(s, a, s') for s' in successors(s, a).
    const Matrix& feature_block(State s, Action a) const { return features[pair_index(s, a)]; }

    double reward(State s, Action a) const { return rewards(s, a); }

    /// Position of `next` within successors(s, a), or -1.
    int successor_slot(State s, Action a, State next) const
    {
        const auto& succ = successors(s, a);
        auto it = std::find(succ.begin(), succ.end(), next);
        return it == succ.end() ? -1 : static_cast<int>(it - succ.begin());
    }

    /// Maximum reachable-set cardinality.
    int max_successors() const
    {
        std::size_t u = 0;
        for (const auto& r : reachable) u = std::max(u, r.size());
        return static_cast<int>(u);
    }
};

struct ValidationIssue {
    std::string what;
};

/// Checks every structural invariant and the norm bounds; returns the list
/// of violations (empty when the spec is valid).
inline std::vector<ValidationIssue> check_spec(const MnlMdpSpec& spec, double tol = 1e-9)
{
    std::vector<ValidationIssue> issues;
    auto fail = [&](std::string w) { issues.push_back({std::move(w)}); };

    if (spec.num_states <= 0) fail("num_states must be positive");
    if (spec.num_actions <= 0) fail("num_actions must be positive");
    if (spec.horizon <= 0) fail("horizon must be positive");
    if (spec.dim <= 0) fail("dim must be positive");
    if (!(spec.L_phi > 0.0)) fail("L_phi must be positive");
    if (!(spec.L_theta > 0.0)) fail("L_theta must be positive");
    if (!issues.empty()) return issues;

    const auto pairs = static_cast<std::size_t>(spec.num_states) * static_cast<std::size_t>(spec.num_actions);
    if (spec.reachable.size() != pairs) fail("reachable must have num_states*num_actions entries");
    if (spec.features.size() != pairs) fail("features must have num_states*num_actions entries");
    if (spec.rewards.rows() != spec.num_states || spec.rewards.cols() != spec.num_actions)
        fail("rewards must be num_states x num_actions");
    if (static_cast<int>(spec.true_cores.size()) != spec.horizon) fail("true_cores must have one core per horizon step");
    if (spec.initial_state < 0 || spec.initial_state >= spec.num_states) fail("initial_state out of range");
    if (!issues.empty()) return issues;

    for (std::size_t i = 0; i < pairs; ++i) {
        const auto& succ = spec.reachable[i];
        const std::string where = "pair " + std::to_string(i);
        if (succ.empty()) fail(where + ": empty reachable set");
        for (std::size_t j = 0; j < succ.size(); ++j) {
            if (succ[j] < 0 || succ[j] >= spec.num_states) fail(where + ": successor out of range");
            for (std::size_t l = 0; l < j; ++l)
                if (succ[l] == succ[j]) fail(where + ": duplicate successor");
        }
        const auto& f = spec.features[i];
        if (f.rows() != static_cast<Eigen::Index>(succ.size()) || f.cols() != spec.dim) {
            fail(where + ": feature block shape mismatch");
            continue;
        }
        for (Eigen::Index r = 0; r < f.rows(); ++r)
            if (f.row(r).norm() > spec.L_phi + tol) fail(where + ": feature norm exceeds L_phi");
    }
    for (int s = 0; s < spec.num_states; ++s)
        for (int a = 0; a < spec.num_actions; ++a) {
            const double r = spec.rewards(s, a);
            if (!(r >= 0.0 && r <= 1.0)) fail("reward outside [0,1]");
        }
    for (int h = 0; h < spec.horizon; ++h) {
        const auto& c = spec.true_cores[static_cast<std::size_t>(h)];
        if (c.size() != spec.dim) fail("true core dimension mismatch at h=" + std::to_string(h));
        else if (c.norm() > spec.L_theta + tol) fail("true core norm exceeds L_theta at h=" + std::to_string(h));
    }
    return issues;
}

inline void require_valid(const MnlMdpSpec& spec)
{
    auto issues = check_spec(spec);
    if (!issues.empty()) throw InvalidArgument("spec: " + issues.front().what);
}

}  // namespace mnlrl

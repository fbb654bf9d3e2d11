#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "mnlrl/agents.hpp"
#include "mnlrl/envs.hpp"
#include "mnlrl/errors.hpp"
#include "mnlrl/linalg.hpp"
#include "mnlrl/mnl_model.hpp"
#include "mnlrl/spec.hpp"
#include "mnlrl/stats.hpp"

namespace mnlrl {

struct OracleSolution {
    std::vector<Vector> V_star;          // H + 1 entries, V_star[H] = 0
    std::vector<Matrix> Q_star;          // H entries, states x actions
    std::vector<std::vector<Action>> optimal_policy;  // [h][s], lowest index wins ties

    double initial_value(State s) const { return V_star.front()(s); }
};

namespace detail {

template <class ProbsAt>
OracleSolution backward_induction(int S, int A, int H, const Matrix& rewards, ProbsAt&& probs_at)
{
    OracleSolution sol;
    sol.V_star.assign(static_cast<std::size_t>(H + 1), Vector::Zero(S));
    sol.Q_star.assign(static_cast<std::size_t>(H), Matrix::Zero(S, A));
    sol.optimal_policy.assign(static_cast<std::size_t>(H), std::vector<Action>(static_cast<std::size_t>(S), 0));
    for (int h = H - 1; h >= 0; --h) {
        const auto hu = static_cast<std::size_t>(h);
        const Vector& v_next = sol.V_star[hu + 1];
        for (State s = 0; s < S; ++s) {
            for (Action a = 0; a < A; ++a) {
                const TransitionDist& d = probs_at(h, s, a);
                double ev = 0.0;
                for (std::size_t j = 0; j < d.support.size(); ++j)
                    ev += d.probs(static_cast<Eigen::Index>(j)) * v_next(d.support[j]);
                sol.Q_star[hu](s, a) = rewards(s, a) + ev;
            }
            Action best = 0;
            for (Action a = 1; a < A; ++a)
                if (sol.Q_star[hu](s, a) > sol.Q_star[hu](s, best)) best = a;
            sol.optimal_policy[hu][static_cast<std::size_t>(s)] = best;
            sol.V_star[hu](s) = sol.Q_star[hu](s, best);
        }
    }
    return sol;
}

}  // namespace detail

/// Backward induction under the true cores, evaluating the MNL model directly.
inline OracleSolution exact_value_iteration(const MnlMdpSpec& spec)
{
    require_valid(spec);
    return detail::backward_induction(spec.num_states, spec.num_actions, spec.horizon, spec.rewards,
                                      [&](int h, State s, Action a) {
                                          return transition_probs(spec, spec.true_cores[static_cast<std::size_t>(h)], s, a);
                                      });
}

/// Backward induction over an explicit tabular kernel. Shares no code with
/// the MNL model, so the two paths cross-check each other.
inline OracleSolution tabular_value_iteration(const TabularMdp& mdp)
{
    const auto& k = mdp.kernel;
    if (mdp.rewards.rows() != k.num_states || mdp.rewards.cols() != k.num_actions)
        throw InvalidArgument("rewards shape does not match kernel");
    return detail::backward_induction(k.num_states, k.num_actions, k.horizon(), mdp.rewards,
                                      [&](int h, State s, Action a) -> const TransitionDist& { return k.at(h, s, a); });
}

/// Value of a deterministic Markov policy policy(h, s) under a tabular kernel.
/// Summation order matches backward_induction, so the result never exceeds
/// the optimal value computed from the same kernel.
inline std::vector<Vector> evaluate_policy(const TabularMdp& mdp, const std::function<Action(int, State)>& policy)
{
    const auto& k = mdp.kernel;
    const int H = k.horizon();
    std::vector<Vector> V(static_cast<std::size_t>(H + 1), Vector::Zero(k.num_states));
    for (int h = H - 1; h >= 0; --h) {
        const auto hu = static_cast<std::size_t>(h);
        for (State s = 0; s < k.num_states; ++s) {
            const Action a = policy(h, s);
            const TransitionDist& d = k.at(h, s, a);
            double ev = 0.0;
            for (std::size_t j = 0; j < d.support.size(); ++j)
                ev += d.probs(static_cast<Eigen::Index>(j)) * V[hu + 1](d.support[j]);
            V[hu](s) = mdp.rewards(s, a) + ev;
        }
    }
    return V;
}

inline TabularMdp tabular_of(const MnlMdpSpec& spec) { return {kernel_of(spec), spec.rewards, spec.initial_state}; }

// ---------------------------------------------------------------------------

struct FiniteDiffReport {
    double max_rel_error = 0.0;
    int worst_index = -1;
    bool passed = true;
};

/// |a - b| / max(1, |a|, |b|)
inline double relative_error(double a, double b)
{
    return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

/// Central differences of the scalar field f against the claimed gradient g.
inline FiniteDiffReport finite_diff_check(const Vector& point, const std::function<double(const Vector&)>& f,
                                          const std::function<Vector(const Vector&)>& g, double step, double tol)
{
    if (!(step > 0.0)) throw InvalidArgument("finite-difference step must be positive");
    const Vector claimed = g(point);
    if (claimed.size() != point.size()) throw InvalidArgument("gradient has wrong dimension");
    FiniteDiffReport rep;
    Vector x = point;
    for (Eigen::Index i = 0; i < point.size(); ++i) {
        x(i) = point(i) + step;
        const double fp = f(x);
        x(i) = point(i) - step;
        const double fm = f(x);
        x(i) = point(i);
        const double err = relative_error((fp - fm) / (2.0 * step), claimed(i));
        if (err > rep.max_rel_error || rep.worst_index < 0) {
            rep.max_rel_error = err;
            rep.worst_index = static_cast<int>(i);
        }
    }
    rep.passed = rep.max_rel_error < tol;
    return rep;
}

/// Column-wise central differences of a vector field f against its claimed
/// Jacobian J (rows = outputs, columns = inputs).
inline FiniteDiffReport finite_diff_jacobian_check(const Vector& point, const std::function<Vector(const Vector&)>& f,
                                                   const std::function<Matrix(const Vector&)>& J, double step,
                                                   double tol)
{
    if (!(step > 0.0)) throw InvalidArgument("finite-difference step must be positive");
    const Matrix claimed = J(point);
    if (claimed.cols() != point.size()) throw InvalidArgument("jacobian has wrong column count");
    FiniteDiffReport rep;
    Vector x = point;
    for (Eigen::Index i = 0; i < point.size(); ++i) {
        x(i) = point(i) + step;
        const Vector fp = f(x);
        x(i) = point(i) - step;
        const Vector fm = f(x);
        x(i) = point(i);
        const Vector fd = (fp - fm) / (2.0 * step);
        for (Eigen::Index r = 0; r < claimed.rows(); ++r) {
            const double err = relative_error(fd(r), claimed(r, i));
            if (err > rep.max_rel_error || rep.worst_index < 0) {
                rep.max_rel_error = err;
                rep.worst_index = static_cast<int>(r * point.size() + i);
            }
        }
    }
    rep.passed = rep.max_rel_error < tol;
    return rep;
}

// ---------------------------------------------------------------------------

struct OptimismRate {
    long optimistic = 0;
    long trials = 0;

    double rate() const { return trials == 0 ? 0.0 : static_cast<double>(optimistic) / static_cast<double>(trials); }
};

/// Fraction of (episode, seed) pairs whose planned initial value reaches the
/// optimal one. The agent plays the true environment between checks.
inline OptimismRate empirical_optimism_rate(const MnlMdpSpec& spec, const AgentConfig& config, int episodes,
                                            const std::vector<std::uint64_t>& seeds)
{
    if (episodes < 1 || seeds.empty()) throw InvalidArgument("need at least one episode and one seed");
    const double v_star = exact_value_iteration(spec).initial_value(spec.initial_state);
    OptimismRate out;
    for (std::uint64_t seed : seeds) {
        AgentState agent = make_agent(spec, config, seed);
        Rng env_rng(seed ^ 0x9e3779b97f4a7c15ull);
        for (int k = 0; k < episodes; ++k) {
            const EpisodeRecord rec = run_episode(agent, spec, env_rng);
            if (rec.initial_value >= v_star) ++out.optimistic;
            ++out.trials;
        }
    }
    return out;
}

}  // namespace mnlrl

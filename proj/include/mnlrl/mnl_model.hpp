#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mnlrl/errors.hpp"
#include "mnlrl/linalg.hpp"
#include "mnlrl/spec.hpp"

namespace mnlrl {

/// Next-state distribution over the reachable set of one (s, a).
struct TransitionDist {
    std::vector<State> support;
    Vector probs;
};

// Block-level kernels. `phi` has one row per successor; all functions assume
// the dimensions were already checked.
namespace mnl {

/// Softmax of phi * theta with the max logit subtracted before exp, written
/// into caller-owned buffers (resized only when the block size changes).
inline void softmax_into(const Matrix& phi, const Vector& theta, Vector& logits, Vector& p)
{
    logits.resize(phi.rows());
    p.resize(phi.rows());
    logits.noalias() = phi * theta;
    const double top = logits.maxCoeff();
    p = (logits.array() - top).exp().matrix();
    p /= p.sum();
}

inline Vector softmax(const Matrix& phi, const Vector& theta)
{
    Vector logits, p;
    softmax_into(phi, theta, logits, p);
    return p;
}

/// Rows: phi(s') - sum_j p_j phi(s_j).
inline Matrix centralized(const Matrix& phi, const Vector& probs)
{
    const Eigen::RowVectorXd mean = probs.transpose() * phi;
    return phi.rowwise() - mean;
}

/// sum_i p_i cbar_i cbar_i^T
inline Matrix hessian(const Matrix& phi, const Vector& probs)
{
    const Matrix cbar = centralized(phi, probs);
    return cbar.transpose() * probs.asDiagonal() * cbar;
}

/// sum_i (p_i - y_i) phi_i where y is one-hot at `observed`.
inline Vector gradient(const Matrix& phi, const Vector& probs, int observed)
{
    Vector resid = probs;
    resid(observed) -= 1.0;
    return phi.transpose() * resid;
}

/// -log p_observed computed from logits (stable for tiny probabilities).
inline double neg_log_prob(const Matrix& phi, const Vector& theta, int observed)
{
    const Vector logits = phi * theta;
    const double top = logits.maxCoeff();
    const double lse = top + std::log((logits.array() - top).exp().sum());
    return lse - logits(observed);
}

}  // namespace mnl

namespace detail {

inline const Matrix& checked_block(const MnlMdpSpec& spec, const Vector& theta, State s, Action a)
{
    if (theta.size() != spec.dim)
        throw InvalidArgument("theta has dimension " + std::to_string(theta.size()) + ", expected " +
                              std::to_string(spec.dim));
    const auto idx = spec.pair_index(s, a);
    if (spec.reachable[idx].empty())
        throw InvalidState("(" + std::to_string(s) + "," + std::to_string(a) + ") has no reachable successors");
    return spec.features[idx];
}

inline int checked_slot(const MnlMdpSpec& spec, State s, Action a, State next)
{
    const int slot = spec.successor_slot(s, a, next);
    if (slot < 0)
        throw InvalidObservation("state " + std::to_string(next) + " is not reachable from (" + std::to_string(s) +
                                 "," + std::to_string(a) + ")");
    return slot;
}

}  // namespace detail

inline TransitionDist transition_probs(const MnlMdpSpec& spec, const Vector& theta, State s, Action a)
{
    const Matrix& phi = detail::checked_block(spec, theta, s, a);
    return {spec.successors(s, a), mnl::softmax(phi, theta)};
}

/// Negative log-likelihood of one observed transition.
inline double per_episode_loss(const MnlMdpSpec& spec, const Vector& theta, State s, Action a, State observed_next)
{
    const Matrix& phi = detail::checked_block(spec, theta, s, a);
    const int slot = detail::checked_slot(spec, s, a, observed_next);
    return std::max(0.0, mnl::neg_log_prob(phi, theta, slot));
}

inline Vector loss_gradient(const MnlMdpSpec& spec, const Vector& theta, State s, Action a, State observed_next)
{
    const Matrix& phi = detail::checked_block(spec, theta, s, a);
    const int slot = detail::checked_slot(spec, s, a, observed_next);
    return mnl::gradient(phi, mnl::softmax(phi, theta), slot);
}

/// Loss Hessian in centralized form; it does not depend on the observation.
inline Matrix loss_hessian(const MnlMdpSpec& spec, const Vector& theta, State s, Action a)
{
    const Matrix& phi = detail::checked_block(spec, theta, s, a);
    return mnl::hessian(phi, mnl::softmax(phi, theta));
}

inline Vector centralized_feature(const MnlMdpSpec& spec, const Vector& theta, State s, Action a, State s_prime)
{
    const Matrix& phi = detail::checked_block(spec, theta, s, a);
    const int slot = detail::checked_slot(spec, s, a, s_prime);
    const Vector p = mnl::softmax(phi, theta);
    return phi.row(slot).transpose() - phi.transpose() * p;
}

/// Gradient of P_theta(s' | s, a) with respect to theta.
inline Vector transition_grad(const MnlMdpSpec& spec, const Vector& theta, State s, Action a, State s_prime)
{
    const Matrix& phi = detail::checked_block(spec, theta, s, a);
    const int slot = detail::checked_slot(spec, s, a, s_prime);
    const Vector p = mnl::softmax(phi, theta);
    return p(slot) * (phi.row(slot).transpose() - phi.transpose() * p);
}

}  // namespace mnlrl

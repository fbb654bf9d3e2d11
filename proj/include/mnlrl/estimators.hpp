#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "mnlrl/errors.hpp"
#include "mnlrl/linalg.hpp"
#include "mnlrl/mnl_model.hpp"
#include "mnlrl/spec.hpp"

namespace mnlrl {

namespace detail {

inline Vector project_with_eigen(const Vector& z, const Matrix& w, double radius)
{
    Eigen::SelfAdjointEigenSolver<Matrix> eig(w);
    if (eig.info() != Eigen::Success) throw NumericalFailure("eigendecomposition failed in projection");
    const Vector& ev = eig.eigenvalues();
    if (!(ev.minCoeff() > 0.0)) throw InvalidArgument("projection weight matrix is not positive definite");
    const Matrix& q = eig.eigenvectors();
    const Vector c = q.transpose() * z;

    // theta(mu) = (W + mu I)^{-1} W z, expressed in W's eigenbasis.
    auto coords = [&](double mu) -> Vector { return (ev.array() * c.array() / (ev.array() + mu)).matrix(); };

    const double tol = 1e-10 * radius;
    double lo = 0.0;
    double hi = std::max(1.0, ev.maxCoeff());
    Vector at_hi = coords(hi);
    for (int grow = 0; at_hi.norm() > radius; ++grow) {
        if (grow > 2000) throw NumericalFailure("could not bracket projection multiplier");
        lo = hi;
        hi *= 2.0;
        at_hi = coords(hi);
    }
    for (int it = 0; it < 200; ++it) {
        const double gap = radius - at_hi.norm();
        if (gap <= tol) return q * at_hi;
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) return q * at_hi;  // interval exhausted at double precision
        Vector at_mid = coords(mid);
        if (at_mid.norm() > radius) {
            lo = mid;
        } else {
            hi = mid;
            at_hi = std::move(at_mid);
        }
    }
    throw NumericalFailure("projection bisection did not converge in 200 iterations");
}

}  // namespace detail

/// argmin over ||theta||_2 <= radius of (theta - z)^T W (theta - z).
///
/// Solves the Lagrangian condition theta(mu) = (W + mu I)^{-1} W z for the
/// multiplier by bisection; the returned point is always feasible.
inline Vector project_weighted_ball(const Vector& z, const Matrix& w, double radius)
{
    if (!(radius > 0.0)) throw InvalidArgument("projection radius must be positive");
    if (w.rows() != w.cols() || w.rows() != z.size()) throw InvalidArgument("projection dimension mismatch");
    Eigen::LLT<Matrix> llt(w);
    if (llt.info() != Eigen::Success) throw InvalidArgument("projection weight matrix is not positive definite");
    if (z.norm() <= radius) return z;
    return detail::project_with_eigen(z, w, radius);
}

/// Same as above for a matrix already known to be positive definite.
inline Vector project_weighted_ball(const Vector& z, const GramMatrix& w, double radius)
{
    if (!(radius > 0.0)) throw InvalidArgument("projection radius must be positive");
    if (w.dim() != z.size()) throw InvalidArgument("projection dimension mismatch");
    if (z.norm() <= radius) return z;
    return detail::project_with_eigen(z, w.matrix(), radius);
}

// ---------------------------------------------------------------------------
// Online Newton step with the kappa-scaled global Gram matrix.

struct OnsState {
    Vector theta;
    GramMatrix gram_A;
    double kappa = 0.0;
    double lambda = 0.0;
};

inline OnsState make_ons_state(int dim, double kappa, double lambda)
{
    if (!(kappa > 0.0)) throw InvalidArgument("kappa must be positive");
    return {Vector::Zero(dim), GramMatrix(dim, lambda), kappa, lambda};
}

/// One ONS step: grows A by (kappa/2) sum phi phi^T over the reachable set,
/// then minimizes the quadratic surrogate around the old iterate over the ball.
inline OnsState ons_update(OnsState state, const MnlMdpSpec& spec, State s, Action a, State observed_next)
{
    const Vector grad = loss_gradient(spec, state.theta, s, a, observed_next);
    const Matrix& phi = spec.feature_block(s, a);
    for (Eigen::Index r = 0; r < phi.rows(); ++r) state.gram_A.accumulate_outer(phi.row(r).transpose(), 0.5 * state.kappa);
    state.gram_A.refresh();
    const Vector target = state.theta - state.gram_A.solve(grad);
    state.theta = project_weighted_ball(target, state.gram_A, spec.L_theta);
    return state;
}

// ---------------------------------------------------------------------------
// Online mirror descent with the local (Hessian) Gram matrix.

struct OmdState {
    Vector theta;
    GramMatrix gram_B;
    double eta = 0.0;
    double lambda = 0.0;
};

inline OmdState make_omd_state(int dim, double eta, double lambda)
{
    if (!(eta > 0.0)) throw InvalidArgument("eta must be positive");
    return {Vector::Zero(dim), GramMatrix(dim, lambda), eta, lambda};
}

/// Result of one mirror-descent step, including the intermediate matrix that
/// defines the surrogate (used by diagnostics and tests).
struct OmdStep {
    OmdState state;
    GramMatrix gram_B_tilde;
    Vector gradient;
};

inline OmdStep omd_step(OmdState state, const MnlMdpSpec& spec, State s, Action a, State observed_next)
{
    const Matrix& phi = detail::checked_block(spec, state.theta, s, a);
    const int slot = detail::checked_slot(spec, s, a, observed_next);
    const Vector p_old = mnl::softmax(phi, state.theta);
    const Vector grad = mnl::gradient(phi, p_old, slot);

    GramMatrix tilde = state.gram_B;
    tilde.accumulate(state.eta * mnl::hessian(phi, p_old));
    tilde.refresh();

    const Vector target = state.theta - state.eta * tilde.solve(grad);
    state.theta = project_weighted_ball(target, tilde, spec.L_theta);

    state.gram_B.accumulate(mnl::hessian(phi, mnl::softmax(phi, state.theta)));
    state.gram_B.refresh();
    return {std::move(state), std::move(tilde), grad};
}

inline OmdState omd_update(OmdState state, const MnlMdpSpec& spec, State s, Action a, State observed_next)
{
    return omd_step(std::move(state), spec, s, a, observed_next).state;
}

// ---------------------------------------------------------------------------
// Regularized maximum likelihood over every stored sample (baseline).

struct Transition {
    State s = 0;
    Action a = 0;
    State next = 0;
};

struct MleState {
    Vector theta;
    std::vector<Transition> sample_buffer;
    double lambda = 0.0;
    int last_iterations = 0;
};

inline MleState make_mle_state(int dim, double lambda)
{
    if (!(lambda > 0.0)) throw InvalidArgument("lambda must be positive");
    return {Vector::Zero(dim), {}, lambda, 0};
}

namespace detail {

/// Loss sum over a buffer plus (lambda/2)||theta||^2.
inline double mle_objective(const MnlMdpSpec& spec, std::span<const Transition> buffer,
                            std::span<const int> slots, const Vector& theta, double lambda)
{
    double total = 0.5 * lambda * theta.squaredNorm();
    Vector logits(spec.max_successors());
    for (std::size_t i = 0; i < buffer.size(); ++i) {
        const Matrix& phi = spec.feature_block(buffer[i].s, buffer[i].a);
        auto lg = logits.head(phi.rows());
        lg.noalias() = phi * theta;
        const double top = lg.maxCoeff();
        total += top + std::log((lg.array() - top).exp().sum()) - lg(slots[i]);
    }
    return total;
}

/// Gradient and Hessian of the regularized objective, accumulated per sample.
inline void mle_derivatives(const MnlMdpSpec& spec, std::span<const Transition> buffer,
                            std::span<const int> slots, const Vector& theta, double lambda, Vector& grad,
                            Matrix& hess)
{
    const auto d = theta.size();
    const int u_max = spec.max_successors();
    grad = lambda * theta;
    hess = Matrix::Identity(d, d) * lambda;
    Vector logits(u_max);
    Vector p(u_max);
    Eigen::RowVectorXd mean(d);
    Vector cbar(d);
    for (std::size_t i = 0; i < buffer.size(); ++i) {
        const Matrix& phi = spec.feature_block(buffer[i].s, buffer[i].a);
        const auto u = phi.rows();
        auto lg = logits.head(u);
        auto pr = p.head(u);
        lg.noalias() = phi * theta;
        const double top = lg.maxCoeff();
        pr = (lg.array() - top).exp();
        pr /= pr.sum();
        mean.noalias() = pr.transpose() * phi;
        for (Eigen::Index j = 0; j < u; ++j) {
            cbar = phi.row(j).transpose() - mean.transpose();
            hess.selfadjointView<Eigen::Lower>().rankUpdate(cbar, pr(j));
        }
        grad.noalias() += mean.transpose() - phi.row(slots[i]).transpose();
    }
    hess.triangularView<Eigen::StrictlyUpper>() = hess.transpose().triangularView<Eigen::StrictlyUpper>();
}

}  // namespace detail

/// Appends `new_samples` and refits theta by damped projected Newton.
///
/// Each Newton step moves toward the minimizer of the local quadratic model
/// over the ball (projection in the Hessian metric) and backtracks by halving.
/// Converges when the projected Newton step has Hessian-weighted size
/// (equal to the gradient norm in the interior) at most 1e-8.
inline MleState mle_fit(MleState state, const MnlMdpSpec& spec, std::span<const Transition> new_samples)
{
    for (const auto& t : new_samples) {
        detail::checked_block(spec, state.theta, t.s, t.a);
        detail::checked_slot(spec, t.s, t.a, t.next);
        state.sample_buffer.push_back(t);
    }
    if (state.sample_buffer.empty()) throw InvalidArgument("mle_fit requires a nonempty sample buffer");

    std::vector<int> slots(state.sample_buffer.size());
    for (std::size_t i = 0; i < slots.size(); ++i) {
        const auto& t = state.sample_buffer[i];
        slots[i] = spec.successor_slot(t.s, t.a, t.next);
    }
    const std::span<const Transition> buffer(state.sample_buffer);
    const std::span<const int> slot_span(slots);

    constexpr double kGradTol = 1e-8;
    constexpr int kMaxIter = 100;
    constexpr int kMaxHalvings = 30;

    Vector grad;
    Matrix hess;
    double objective = detail::mle_objective(spec, buffer, slot_span, state.theta, state.lambda);
    double stationarity = std::numeric_limits<double>::infinity();
    for (int it = 0; it < kMaxIter; ++it) {
        detail::mle_derivatives(spec, buffer, slot_span, state.theta, state.lambda, grad, hess);
        const GramMatrix curvature = GramMatrix::from_matrix(hess);
        const Vector target = state.theta - curvature.solve(grad);
        const Vector step = project_weighted_ball(target, curvature, spec.L_theta) - state.theta;
        stationarity = (hess * step).norm();
        if (stationarity <= kGradTol || grad.norm() <= kGradTol) {
            state.last_iterations = it;
            return state;
        }
        const double slope = grad.dot(step);
        // Predicted decrease below the objective's rounding floor: the line
        // search cannot discriminate, and we are deep in the quadratic region.
        if (-slope <= 1e-13 * (1.0 + std::fabs(objective))) {
            state.theta += step;
            objective = detail::mle_objective(spec, buffer, slot_span, state.theta, state.lambda);
            continue;
        }
        double t = 1.0;
        bool accepted = false;
        for (int halving = 0; halving <= kMaxHalvings; ++halving, t *= 0.5) {
            const Vector candidate = state.theta + t * step;
            const double value = detail::mle_objective(spec, buffer, slot_span, candidate, state.lambda);
            if (value <= objective + 1e-4 * t * slope) {
                state.theta = candidate;
                objective = value;
                accepted = true;
                break;
            }
        }
        // No representable decrease left: the iterate is optimal to working precision.
        if (!accepted) {
            state.last_iterations = it;
            return state;
        }
    }
    throw NumericalFailure("mle_fit did not converge in 100 iterations (stationarity " +
                           std::to_string(stationarity) + ", objective " + std::to_string(objective) + ", samples " +
                           std::to_string(state.sample_buffer.size()) + ")");
}

// ---------------------------------------------------------------------------
// JSON snapshots for checkpoint/resume.

namespace detail {

inline nlohmann::json vector_to_json(const Vector& v)
{
    return std::vector<double>(v.data(), v.data() + v.size());
}

inline Vector vector_from_json(const nlohmann::json& j)
{
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

inline nlohmann::json matrix_to_json(const Matrix& m)
{
    auto rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vector_to_json(m.row(r).transpose()));
    return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j, Eigen::Index cols = -1)
{
    const auto n = static_cast<Eigen::Index>(j.size());
    if (n == 0) return Matrix(0, std::max<Eigen::Index>(cols, 0));
    const auto c = static_cast<Eigen::Index>(j.at(0).size());
    Matrix m(n, c);
    for (Eigen::Index r = 0; r < n; ++r) {
        if (static_cast<Eigen::Index>(j.at(r).size()) != c) throw InvalidArgument("ragged matrix in JSON");
        m.row(r) = vector_from_json(j.at(r)).transpose();
    }
    return m;
}

}  // namespace detail

inline nlohmann::json to_json(const OnsState& st)
{
    return {{"kind", "ons"},
            {"theta", detail::vector_to_json(st.theta)},
            {"gram", detail::matrix_to_json(st.gram_A.matrix())},
            {"kappa", st.kappa},
            {"lambda", st.lambda}};
}

inline nlohmann::json to_json(const OmdState& st)
{
    return {{"kind", "omd"},
            {"theta", detail::vector_to_json(st.theta)},
            {"gram", detail::matrix_to_json(st.gram_B.matrix())},
            {"eta", st.eta},
            {"lambda", st.lambda}};
}

inline nlohmann::json to_json(const MleState& st)
{
    auto buf = nlohmann::json::array();
    for (const auto& t : st.sample_buffer) buf.push_back({t.s, t.a, t.next});
    return {{"kind", "mle"}, {"theta", detail::vector_to_json(st.theta)}, {"lambda", st.lambda}, {"buffer", buf}};
}

inline OnsState ons_from_json(const nlohmann::json& j)
{
    if (j.at("kind") != "ons") throw InvalidArgument("snapshot is not an ONS state");
    return {detail::vector_from_json(j.at("theta")), GramMatrix::from_matrix(detail::matrix_from_json(j.at("gram"))),
            j.at("kappa").get<double>(), j.at("lambda").get<double>()};
}

inline OmdState omd_from_json(const nlohmann::json& j)
{
    if (j.at("kind") != "omd") throw InvalidArgument("snapshot is not an OMD state");
    return {detail::vector_from_json(j.at("theta")), GramMatrix::from_matrix(detail::matrix_from_json(j.at("gram"))),
            j.at("eta").get<double>(), j.at("lambda").get<double>()};
}

inline MleState mle_from_json(const nlohmann::json& j)
{
    if (j.at("kind") != "mle") throw InvalidArgument("snapshot is not an MLE state");
    MleState st{detail::vector_from_json(j.at("theta")), {}, j.at("lambda").get<double>(), 0};
    for (const auto& t : j.at("buffer")) st.sample_buffer.push_back({t.at(0).get<int>(), t.at(1).get<int>(), t.at(2).get<int>()});
    return st;
}

}  // namespace mnlrl

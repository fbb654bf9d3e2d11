#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <boost/random/normal_distribution.hpp>

#include "mnlrl/errors.hpp"
#include "mnlrl/estimators.hpp"
#include "mnlrl/linalg.hpp"
#include "mnlrl/mnl_model.hpp"
#include "mnlrl/spec.hpp"

namespace mnlrl {

enum class AlgorithmKind { rrl, orrl, ucb, baseline };

inline std::string to_string(AlgorithmKind k)
{
    switch (k) {
    case AlgorithmKind::rrl: return "rrl";
    case AlgorithmKind::orrl: return "orrl";
    case AlgorithmKind::ucb: return "ucb";
    case AlgorithmKind::baseline: return "baseline";
    }
    return "?";
}

inline AlgorithmKind algorithm_kind_from_string(const std::string& s)
{
    if (s == "rrl") return AlgorithmKind::rrl;
    if (s == "orrl") return AlgorithmKind::orrl;
    if (s == "ucb") return AlgorithmKind::ucb;
    if (s == "baseline") return AlgorithmKind::baseline;
    throw InvalidArgument("unknown algorithm kind '" + s + "'");
}

/// M Gaussian perturbation vectors, stored as the columns of a d x M matrix.
struct PerturbationSet {
    Matrix samples;
    double sigma = 0.0;
    std::string gram_used;

    int size() const { return static_cast<int>(samples.cols()); }
};

/// Draws M vectors from N(0, sigma^2 gram^{-1}) as sigma * L^{-T} z with L L^T = gram.
inline PerturbationSet sample_perturbations(const GramMatrix& gram, double sigma, int M, Rng& rng,
                                            std::string gram_id = {})
{
    if (M < 1) throw InvalidArgument("perturbation count must be at least 1");
    if (!(sigma >= 0.0)) throw InvalidArgument("sigma must be nonnegative");
    const auto d = gram.dim();
    boost::random::normal_distribution<double> normal(0.0, 1.0);
    Matrix z(d, M);
    for (int m = 0; m < M; ++m)
        for (Eigen::Index i = 0; i < d; ++i) z(i, m) = normal(rng);
    gram.factor().matrixU().solveInPlace(z);  // L^T x = z
    z *= sigma;
    return {std::move(z), sigma, std::move(gram_id)};
}

namespace detail {

/// Reusable buffers for one (s, a) backup. `white` holds L^{-1} phi^T
/// (gram = L L^T), so every gram^{-1}-weighted norm of the block, raw or
/// centralized, is a column norm of it.
struct BlockScratch {
    Vector logits;
    Vector probs;
    Matrix white;
    Vector white_mean;
    Vector norms_sq;
    Eigen::RowVectorXd mean;
    Matrix cbar;
    Matrix scores;
    Eigen::RowVectorXd row_scores;
};

inline void whiten(const Matrix& phi, const GramMatrix& gram, BlockScratch& w)
{
    w.white = phi.transpose();
    gram.factor().matrixL().solveInPlace(w.white);
    w.norms_sq = w.white.colwise().squaredNorm().transpose();
}

/// argmax of norms_sq, lowest index wins ties.
inline int argmax_first(const Vector& v)
{
    int best = 0;
    for (Eigen::Index r = 1; r < v.size(); ++r)
        if (v(r) > v(best)) best = static_cast<int>(r);
    return best;
}

}  // namespace detail

/// Index of the successor whose feature has the largest gram^{-1}-weighted
/// norm; lowest index wins ties.
inline int dominant_slot(const Matrix& phi, const GramMatrix& gram)
{
    detail::BlockScratch w;
    detail::whiten(phi, gram, w);
    return detail::argmax_first(w.norms_sq);
}

inline Vector dominant_feature(const MnlMdpSpec& spec, const GramMatrix& gram, State s, Action a)
{
    const auto idx = spec.pair_index(s, a);
    if (spec.reachable[idx].empty()) throw InvalidState("empty reachable set");
    const Matrix& phi = spec.features[idx];
    return phi.row(dominant_slot(phi, gram)).transpose();
}

namespace detail {

inline double expected_next_value(const MnlMdpSpec& spec, State s, Action a, const Vector& probs,
                                  const Vector& v_next)
{
    const auto& succ = spec.successors(s, a);
    double ev = 0.0;
    for (std::size_t j = 0; j < succ.size(); ++j) ev += probs(static_cast<Eigen::Index>(j)) * v_next(succ[j]);
    return ev;
}

/// max_j ||phi_j||^2_{gram^{-1}}
inline double max_inv_norm_sq(const Matrix& phi, const GramMatrix& gram)
{
    BlockScratch w;
    whiten(phi, gram, w);
    return w.norms_sq.maxCoeff();
}

inline void centralize(const Matrix& phi, BlockScratch& w)
{
    w.mean.noalias() = w.probs.transpose() * phi;
    w.cbar = phi.rowwise() - w.mean;
}

// Bonus kernels; expect softmax_into and whiten to have filled `w`.

inline double rrl_bonus(const Matrix& phi, const PerturbationSet& perturbs, BlockScratch& w)
{
    const int slot = argmax_first(w.norms_sq);
    w.row_scores.noalias() = phi.row(slot).lazyProduct(perturbs.samples);
    return w.row_scores.maxCoeff();
}

inline double orrl_bonus(const Matrix& phi, const PerturbationSet& perturbs, double beta, double horizon,
                         BlockScratch& w)
{
    centralize(phi, w);
    w.scores.noalias() = w.cbar.lazyProduct(perturbs.samples);  // successors x M
    double noise_term = 0.0;
    for (Eigen::Index j = 0; j < phi.rows(); ++j) noise_term += w.probs(j) * w.scores.row(j).maxCoeff();
    return noise_term + 3.0 * horizon * beta * beta * w.norms_sq.maxCoeff();
}

inline double ucb_bonus(const BlockScratch& w_in, double beta, double horizon, BlockScratch& w)
{
    // L^{-1} cbar_j = white_j - white * p
    w.white_mean.noalias() = w_in.white * w_in.probs;
    double width = 0.0;
    for (Eigen::Index j = 0; j < w_in.white.cols(); ++j)
        width += w_in.probs(j) * (w_in.white.col(j) - w.white_mean).norm();
    return horizon * beta * width + 3.0 * horizon * beta * beta * w_in.norms_sq.maxCoeff();
}

/// Prepares probabilities and whitened features of one block.
inline const Matrix& prepare_block(const MnlMdpSpec& spec, const Vector& theta, const GramMatrix& gram, State s,
                                   Action a, BlockScratch& w)
{
    const Matrix& phi = checked_block(spec, theta, s, a);
    mnl::softmax_into(phi, theta, w.logits, w.probs);
    whiten(phi, gram, w);
    return phi;
}

}  // namespace detail

/// Randomized bonus of the optimistic randomized backup. Each successor picks
/// its own most optimistic perturbation against its centralized feature.
inline double randomized_bonus(const Matrix& phi, const Vector& probs, const GramMatrix& gram,
                               const PerturbationSet& perturbs, double beta, double horizon)
{
    detail::BlockScratch w;
    w.probs = probs;
    detail::whiten(phi, gram, w);
    return detail::orrl_bonus(phi, perturbs, beta, horizon, w);
}

/// Deterministic optimistic bonus: centralized-feature confidence width plus
/// the second-order term.
inline double optimistic_bonus(const Matrix& phi, const Vector& probs, const GramMatrix& gram, double beta,
                               double horizon)
{
    detail::BlockScratch w;
    w.probs = probs;
    detail::whiten(phi, gram, w);
    return detail::ucb_bonus(w, beta, horizon, w);
}

namespace detail {

inline double backup_rrl(const MnlMdpSpec& spec, const Vector& theta, const GramMatrix& gram,
                         const PerturbationSet& perturbs, const Vector& v_next, State s, Action a, BlockScratch& w)
{
    const Matrix& phi = prepare_block(spec, theta, gram, s, a, w);
    const double ev = expected_next_value(spec, s, a, w.probs, v_next);
    return std::min(spec.reward(s, a) + ev + rrl_bonus(phi, perturbs, w), static_cast<double>(spec.horizon));
}

inline double backup_orrl(const MnlMdpSpec& spec, const Vector& theta, const GramMatrix& gram,
                          const PerturbationSet& perturbs, double beta_k, const Vector& v_next, State s, Action a,
                          BlockScratch& w)
{
    const Matrix& phi = prepare_block(spec, theta, gram, s, a, w);
    const double ev = expected_next_value(spec, s, a, w.probs, v_next);
    const double h = static_cast<double>(spec.horizon);
    return std::min(spec.reward(s, a) + ev + orrl_bonus(phi, perturbs, beta_k, h, w), h);
}

inline double backup_ucb(const MnlMdpSpec& spec, const Vector& theta, const GramMatrix& gram, double beta_k,
                         const Vector& v_next, State s, Action a, BlockScratch& w)
{
    prepare_block(spec, theta, gram, s, a, w);
    const double ev = expected_next_value(spec, s, a, w.probs, v_next);
    return spec.reward(s, a) + ev + ucb_bonus(w, beta_k, static_cast<double>(spec.horizon), w);
}

inline double backup_mle_ucb(const MnlMdpSpec& spec, const Vector& theta, const GramMatrix& gram, double alpha,
                             const Vector& v_next, State s, Action a, BlockScratch& w)
{
    prepare_block(spec, theta, gram, s, a, w);
    const double ev = expected_next_value(spec, s, a, w.probs, v_next);
    const double h = static_cast<double>(spec.horizon);
    return std::min(spec.reward(s, a) + ev + h * alpha * std::sqrt(w.norms_sq.maxCoeff()), h);
}

}  // namespace detail

/// Stochastically optimistic backup: estimated Bellman backup plus the most
/// optimistic inner product of the dominant feature with the perturbations,
/// truncated at H.
inline double backup_rrl(const MnlMdpSpec& spec, const Vector& theta, const GramMatrix& gram,
                         const PerturbationSet& perturbs, const Vector& v_next, State s, Action a)
{
    detail::BlockScratch w;
    return detail::backup_rrl(spec, theta, gram, perturbs, v_next, s, a, w);
}

inline double backup_rrl(const MnlMdpSpec& spec, const OnsState& est, const PerturbationSet& perturbs,
                         const Vector& v_next, State s, Action a)
{
    return backup_rrl(spec, est.theta, est.gram_A, perturbs, v_next, s, a);
}

inline double backup_orrl(const MnlMdpSpec& spec, const Vector& theta, const GramMatrix& gram,
                          const PerturbationSet& perturbs, double beta_k, const Vector& v_next, State s, Action a)
{
    detail::BlockScratch w;
    return detail::backup_orrl(spec, theta, gram, perturbs, beta_k, v_next, s, a, w);
}

inline double backup_orrl(const MnlMdpSpec& spec, const OmdState& est, const PerturbationSet& perturbs,
                          double beta_k, const Vector& v_next, State s, Action a)
{
    return backup_orrl(spec, est.theta, est.gram_B, perturbs, beta_k, v_next, s, a);
}

/// Optimistic backup; not truncated here, the value is clipped instead.
inline double backup_ucb(const MnlMdpSpec& spec, const Vector& theta, const GramMatrix& gram, double beta_k,
                         const Vector& v_next, State s, Action a)
{
    detail::BlockScratch w;
    return detail::backup_ucb(spec, theta, gram, beta_k, v_next, s, a, w);
}

inline double backup_ucb(const MnlMdpSpec& spec, const OmdState& est, double beta_k, const Vector& v_next, State s,
                         Action a)
{
    return backup_ucb(spec, est.theta, est.gram_B, beta_k, v_next, s, a);
}

/// Baseline backup: full-MLE model with a dominant-feature UCB bonus H * alpha * ||phi_hat||_{A^-1}.
inline double backup_mle_ucb(const MnlMdpSpec& spec, const Vector& theta, const GramMatrix& gram, double alpha,
                             const Vector& v_next, State s, Action a)
{
    detail::BlockScratch w;
    return detail::backup_mle_ucb(spec, theta, gram, alpha, v_next, s, a, w);
}

// ---------------------------------------------------------------------------

/// Baseline estimator: full-sample MLE plus the kappa-scaled Gram matrix
/// that shapes its bonus.
struct BaselineState {
    MleState mle;
    GramMatrix gram_A;
    double kappa = 0.0;
};

using CoreEstimate = std::variant<OnsState, OmdState, BaselineState>;

inline const Vector& estimate_theta(const CoreEstimate& est)
{
    return std::visit(
        [](const auto& e) -> const Vector& {
            using T = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<T, BaselineState>) return e.mle.theta;
            else return e.theta;
        },
        est);
}

inline const GramMatrix& estimate_gram(const CoreEstimate& est)
{
    return std::visit(
        [](const auto& e) -> const GramMatrix& {
            using T = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<T, OmdState>) return e.gram_B;
            else return e.gram_A;
        },
        est);
}

/// Per-episode schedule values consumed by the planner.
struct ScheduleValues {
    double sigma = 0.0;  // perturbation scale (rrl, orrl)
    int M = 1;           // perturbation count (rrl, orrl)
    double beta = 0.0;   // confidence radius (orrl, ucb)
    double alpha = 0.0;  // bonus radius (baseline)
};

/// Q[h] is num_states x num_actions for h = 0..H-1; V has H+1 entries with V[H] = 0.
struct ValueTables {
    std::vector<Matrix> Q;
    std::vector<Vector> V;
    AlgorithmKind algorithm_kind = AlgorithmKind::rrl;
    std::vector<PerturbationSet> perturbations;
};

/// Greedy action with the lowest index winning ties.
inline Action greedy_action(const ValueTables& tables, int h, State s)
{
    const Matrix& q = tables.Q[static_cast<std::size_t>(h)];
    Action best = 0;
    for (Eigen::Index a = 1; a < q.cols(); ++a)
        if (q(s, a) > q(s, best)) best = static_cast<Action>(a);
    return best;
}

/// Backward sweep h = H-1 .. 0. For the randomized kinds one perturbation set
/// per horizon step is drawn (in order h = 0 .. H-1) before the sweep and
/// shared by every (s, a) backup at that step.
inline ValueTables build_value_tables(const MnlMdpSpec& spec, std::span<const CoreEstimate* const> estimates,
                                      AlgorithmKind kind, const ScheduleValues& sched, Rng& rng)
{
    const int H = spec.horizon;
    if (static_cast<int>(estimates.size()) != H) throw InvalidArgument("need one estimate per horizon step");
    ValueTables t;
    t.algorithm_kind = kind;
    t.Q.assign(static_cast<std::size_t>(H), Matrix::Zero(spec.num_states, spec.num_actions));
    t.V.assign(static_cast<std::size_t>(H + 1), Vector::Zero(spec.num_states));

    const bool randomized = kind == AlgorithmKind::rrl || kind == AlgorithmKind::orrl;
    if (randomized) {
        t.perturbations.reserve(static_cast<std::size_t>(H));
        for (int h = 0; h < H; ++h)
            t.perturbations.push_back(sample_perturbations(estimate_gram(*estimates[static_cast<std::size_t>(h)]),
                                                           sched.sigma, sched.M, rng, "h=" + std::to_string(h)));
    }

    const double cap = static_cast<double>(H);
    detail::BlockScratch scratch;
    for (int h = H - 1; h >= 0; --h) {
        const auto hu = static_cast<std::size_t>(h);
        const CoreEstimate& est = *estimates[hu];
        const Vector& theta = estimate_theta(est);
        const GramMatrix& gram = estimate_gram(est);
        const Vector& v_next = t.V[hu + 1];
        Matrix& q = t.Q[hu];
        for (State s = 0; s < spec.num_states; ++s) {
            for (Action a = 0; a < spec.num_actions; ++a) {
                switch (kind) {
                case AlgorithmKind::rrl:
                    q(s, a) = detail::backup_rrl(spec, theta, gram, t.perturbations[hu], v_next, s, a, scratch);
                    break;
                case AlgorithmKind::orrl:
                    q(s, a) = detail::backup_orrl(spec, theta, gram, t.perturbations[hu], sched.beta, v_next, s, a,
                                                  scratch);
                    break;
                case AlgorithmKind::ucb:
                    q(s, a) = detail::backup_ucb(spec, theta, gram, sched.beta, v_next, s, a, scratch);
                    break;
                case AlgorithmKind::baseline:
                    q(s, a) = detail::backup_mle_ucb(spec, theta, gram, sched.alpha, v_next, s, a, scratch);
                    break;
                }
            }
            double best = q.row(s).maxCoeff();
            if (kind == AlgorithmKind::ucb) best = std::min(best, cap);
            t.V[hu](s) = best;
        }
    }
    return t;
}

}  // namespace mnlrl

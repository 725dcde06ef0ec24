#pragma once

// Linear constraints whose violations follow a two-component zero-mean
// Gaussian mixture, trained with one-step contrastive divergence. The
// reconstruction sampler draws the violations first and maps them back to
// data space through the pseudo-inverse of the augmented constraint matrix.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fas/datagen.hpp"
#include "fas/error.hpp"
#include "fas/numerics.hpp"

namespace fas::cd {

/// Parameters of one expert. Latent s = 1 selects variance exp(log_var1),
/// chosen a priori with probability sigmoid(mixing_logit).
struct ExpertParams {
    double mixing_logit = 0.0;
    double log_var1 = 0.0;
    double log_var0 = 0.0;
};

/// m mixture experts over n inputs; column j of lambda is constraint j.
struct MixtureExpertSet {
    Matrix lambda;  // n x m
    Vector mixing_logit;
    Vector log_var1;
    Vector log_var0;
    // Scale eps of the identity block appended below lambda when drawing
    // reconstructions. The CD update shrinks |lambda_j| at a rate that
    // grows with eps^2 / |lambda_j|^2, so the block is kept small.
    double augmentation_scale = 0.1;
    // Append the block even when lambda has full column rank.
    bool always_augment = false;

    std::size_t n() const { return static_cast<std::size_t>(lambda.rows()); }
    std::size_t m() const { return static_cast<std::size_t>(lambda.cols()); }

    ExpertParams expert(std::size_t j) const {
        const auto k = static_cast<Eigen::Index>(j);
        return {mixing_logit(k), log_var1(k), log_var0(k)};
    }

    bool all_finite() const {
        return lambda.allFinite() && mixing_logit.allFinite() && log_var1.allFinite() && log_var0.allFinite();
    }
};

inline void check_consistent(const MixtureExpertSet& model) {
    const auto m = model.lambda.cols();
    if (model.mixing_logit.size() != m || model.log_var1.size() != m || model.log_var0.size() != m) {
        throw InvalidInput("mixture expert parameter vectors must have one entry per column of lambda");
    }
    if (!(model.augmentation_scale > 0.0) || !std::isfinite(model.augmentation_scale)) {
        throw InvalidInput("augmentation scale must be positive");
    }
}

/// lambda ~ N(0, 1/n), logits 0, broad variance 1, narrow variance 0.01.
inline MixtureExpertSet init_mixture_experts(std::size_t n, std::size_t m, RngStream rng) {
    MixtureExpertSet model;
    const auto rows = static_cast<Eigen::Index>(n);
    const auto cols = static_cast<Eigen::Index>(m);
    model.lambda.resize(rows, cols);
    const double sd = n ? 1.0 / std::sqrt(static_cast<double>(n)) : 0.0;
    for (auto& x : model.lambda.reshaped()) {
        x = sd * rng.normal();
    }
    model.mixing_logit = Vector::Zero(cols);
    model.log_var1 = Vector::Constant(cols, std::log(1.0));
    model.log_var0 = Vector::Constant(cols, std::log(0.01));
    return model;
}

namespace detail {

inline constexpr double kLog2Pi = 1.8378770664093454836;

/// log(1 + exp(x))
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double log_normal(double v, double log_var) { return -0.5 * (kLog2Pi + log_var + v * v * std::exp(-log_var)); }

struct ComponentLogs {
    double broad;   // log pi + log N(v; 0, var1)
    double narrow;  // log(1 - pi) + log N(v; 0, var0)
};

inline ComponentLogs component_logs(const ExpertParams& e, double v) {
    return {-softplus(-e.mixing_logit) + log_normal(v, e.log_var1),
            -softplus(e.mixing_logit) + log_normal(v, e.log_var0)};
}

}  // namespace detail

inline double prior_probability(const ExpertParams& e) { return 1.0 / (1.0 + std::exp(-e.mixing_logit)); }

/// log[pi N(v; 0, var1) + (1 - pi) N(v; 0, var0)]
inline double expert_log_density(const ExpertParams& e, double v) {
    const auto c = detail::component_logs(e, v);
    return log_add_exp(c.broad, c.narrow);
}

/// Posterior P(s = 1 | v). s0 is 1 - s1.
inline double responsibility(const ExpertParams& e, double v) {
    const auto c = detail::component_logs(e, v);
    // sigmoid of the log-odds, evaluated on the side that cannot overflow
    const double log_odds = c.broad - c.narrow;
    if (log_odds >= 0.0) {
        return 1.0 / (1.0 + std::exp(-log_odds));
    }
    const double z = std::exp(log_odds);
    return z / (1.0 + z);
}

/// d expert_log_density / d mixing_logit = s1 - pi. The CD update uses the
/// bare s1; the prior term is identical on data and reconstruction and
/// cancels in the difference.
inline double mixing_logit_derivative(const ExpertParams& e, double v) {
    return responsibility(e, v) - prior_probability(e);
}

/// Violations lambda_j . d. Accepts raw data (length n) or augmented data
/// (length n + m, whose tail is matched against the eps * I block).
inline Vector violations(const MixtureExpertSet& model, const Vector& d) {
    const auto n = static_cast<Eigen::Index>(model.n());
    const auto m = static_cast<Eigen::Index>(model.m());
    if (d.size() == n) {
        return model.lambda.transpose() * d;
    }
    if (d.size() == n + m) {
        return model.lambda.transpose() * d.head(n) + model.augmentation_scale * d.tail(m);
    }
    throw InvalidInput("data length " + std::to_string(d.size()) + " matches neither n nor n + m");
}

/// Per-expert derivatives of log f_j at one data vector.
struct ExpertGradients {
    Vector mixing;    // s1
    Vector log_var1;  // s1 (v^2 / var1 - 1) / 2
    Vector log_var0;  // s0 (v^2 / var0 - 1) / 2
    Matrix lambda;    // dim(d) x m; column j = -(s1/var1 + s0/var0) v_j d
    Vector responsibility;
    Vector violation;
};

inline ExpertGradients positive_gradients(const MixtureExpertSet& model, const Vector& d) {
    check_consistent(model);
    const Vector v = violations(model, d);
    const auto m = static_cast<Eigen::Index>(model.m());
    ExpertGradients g;
    g.mixing.resize(m);
    g.log_var1.resize(m);
    g.log_var0.resize(m);
    g.lambda.resize(d.size(), m);
    g.responsibility.resize(m);
    g.violation = v;
    for (Eigen::Index j = 0; j < m; ++j) {
        const ExpertParams e = model.expert(static_cast<std::size_t>(j));
        const double s1 = responsibility(e, v(j));
        const double s0 = 1.0 - s1;
        const double inv1 = std::exp(-e.log_var1);
        const double inv0 = std::exp(-e.log_var0);
        g.responsibility(j) = s1;
        g.mixing(j) = s1;
        g.log_var1(j) = 0.5 * s1 * (v(j) * v(j) * inv1 - 1.0);
        g.log_var0(j) = 0.5 * s0 * (v(j) * v(j) * inv0 - 1.0);
        // Differentiating log N(v; 0, var) = -v^2 / (2 var) + ... gives the minus sign.
        g.lambda.col(j) = -(s1 * inv1 + s0 * inv0) * v(j) * d;
    }
    return g;
}

/// Relative singular-value threshold below which lambda is treated as
/// column-rank deficient.
inline constexpr double kRankTolerance = 1e-6;

/// Base model plus the augmented constraint matrix A = [lambda; eps I_m]
/// and the map P = A (A^T A)^-1, which satisfies A^T P = I and sends sampled
/// violations u to reconstructions d_hat = P u lying in span(A).
///
/// When lambda already has full column rank (and always_augment is off)
/// eps is 0 and P is the pseudo-inverse of lambda^T; otherwise eps is the
/// model's augmentation_scale, which restores full column rank.
class AugmentedModel {
public:
    explicit AugmentedModel(MixtureExpertSet base) : base_(std::move(base)) {
        check_consistent(base_);
        require_finite(base_.lambda, "AugmentedModel");
        const auto n = base_.lambda.rows();
        const auto m = base_.lambda.cols();
        augmented_ = Matrix::Zero(n + m, m);
        augmented_.topRows(n) = base_.lambda;

        if (!base_.always_augment && m <= n && m > 0) {
            Eigen::BDCSVD<Eigen::MatrixXd> svd(base_.lambda, Eigen::ComputeThinU | Eigen::ComputeThinV);
            const Vector& sv = svd.singularValues();
            if (sv(m - 1) > kRankTolerance * sv(0)) {
                map_ = Matrix::Zero(n + m, m);
                map_.topRows(n) = svd.matrixU() * sv.cwiseInverse().asDiagonal() * svd.matrixV().transpose();
                return;
            }
        }

        scale_ = base_.augmentation_scale;
        augmented_.bottomRows(m) = scale_ * Matrix::Identity(m, m);
        // A^T A = lambda^T lambda + eps^2 I has every eigenvalue >= eps^2.
        const Eigen::MatrixXd gram = augmented_.transpose() * augmented_;
        Eigen::LLT<Eigen::MatrixXd> llt(gram);
        if (llt.info() != Eigen::Success) {
            throw InvariantFailure("augmented constraint matrix lost full column rank");
        }
        const Eigen::MatrixXd at = augmented_.transpose();
        map_ = llt.solve(at).transpose();
    }

    /// eps actually used; 0 when no augmentation was needed.
    double effective_scale() const { return scale_; }
    const MixtureExpertSet& base() const { return base_; }
    const Matrix& augmented_lambda() const { return augmented_; }
    const Matrix& reconstruction_map() const { return map_; }
    std::size_t n() const { return base_.n(); }
    std::size_t m() const { return base_.m(); }

    /// Appends m zeros to a data vector.
    Vector augment(const Vector& d) const {
        if (static_cast<std::size_t>(d.size()) != n()) {
            throw InvalidInput("data length " + std::to_string(d.size()) + " != model dimension " +
                               std::to_string(n()));
        }
        Vector out = Vector::Zero(static_cast<Eigen::Index>(n() + m()));
        out.head(d.size()) = d;
        return out;
    }

private:
    MixtureExpertSet base_;
    Matrix augmented_;
    Matrix map_;
    double scale_ = 0.0;
};

struct Reconstruction {
    std::vector<int> states;  // sampled s_j in {0, 1}
    Vector precision;         // D_jj
    Vector u_hat;             // sampled violations
    Vector d_hat;             // augmented reconstruction, length n + m
};

/// Given latent states: u ~ N(0, D^-1), d_hat = P u.
inline Reconstruction reconstruct_from_states(const AugmentedModel& model, const std::vector<int>& states,
                                              RngStream& rng) {
    if (states.size() != model.m()) {
        throw InvalidInput("need one latent state per expert");
    }
    Reconstruction r;
    r.states = states;
    const auto m = static_cast<Eigen::Index>(model.m());
    r.precision.resize(m);
    Vector variance(m);
    for (Eigen::Index j = 0; j < m; ++j) {
        const ExpertParams e = model.base().expert(static_cast<std::size_t>(j));
        r.precision(j) = states[static_cast<std::size_t>(j)] ? std::exp(-e.log_var1) : std::exp(-e.log_var0);
        variance(j) = 1.0 / r.precision(j);
    }
    r.u_hat = sample_gaussian_diag(variance, rng);
    r.d_hat = model.reconstruction_map() * r.u_hat;
    return r;
}

/// One full Gibbs step from d: s_j ~ p(s_j | d), then d_hat | s.
inline Reconstruction reconstruct(const AugmentedModel& model, const Vector& d, RngStream& rng) {
    const Vector v = violations(model.base(), d);
    std::vector<int> states(model.m());
    for (std::size_t j = 0; j < model.m(); ++j) {
        states[j] = rng.bernoulli(responsibility(model.base().expert(j), v(static_cast<Eigen::Index>(j)))) ? 1 : 0;
    }
    return reconstruct_from_states(model, states, rng);
}

struct CdTrainConfig {
    std::size_t experts = 16;
    double learning_rate = 0.001;
    double momentum = 0.9;
    std::size_t batch_size = 100;
    std::size_t updates = 1000;
    std::uint64_t seed = 0;
    // Multipliers on learning_rate per parameter group.
    double lambda_scale = 1.0;
    double mixing_scale = 0.1;
    double variance_scale = 0.1;
    std::size_t checkpoint_every = 0;
};

inline void validate(const CdTrainConfig& c) {
    if (!(c.learning_rate >= 0.0) || !std::isfinite(c.learning_rate)) {
        throw InvalidInput("learning rate must be finite and nonnegative");
    }
    if (!(c.momentum >= 0.0 && c.momentum < 1.0)) {
        throw InvalidInput("momentum must lie in [0, 1)");
    }
    if (c.batch_size == 0) {
        throw InvalidInput("batch size must be positive");
    }
    if (c.lambda_scale < 0.0 || c.mixing_scale < 0.0 || c.variance_scale < 0.0) {
        throw InvalidInput("learning-rate scales must be nonnegative");
    }
}

/// Momentum buffers, shaped like the parameters.
struct CdVelocity {
    Matrix lambda;
    Vector mixing_logit;
    Vector log_var1;
    Vector log_var0;

    static CdVelocity zeros_like(const MixtureExpertSet& m) {
        return {Matrix::Zero(m.lambda.rows(), m.lambda.cols()), Vector::Zero(m.mixing_logit.size()),
                Vector::Zero(m.log_var1.size()), Vector::Zero(m.log_var0.size())};
    }
};

struct CdDiagnostics {
    std::size_t update = 0;
    double reconstruction_error = 0.0;  // mean ||d - d_hat[0:n]||
    double mean_responsibility = 0.0;   // mean s1 on the data
    double lambda_norm = 0.0;           // Frobenius
    double mean_mixing_logit = 0.0;
    double mean_log_var1 = 0.0;
    double mean_log_var0 = 0.0;
};

/// Replaces the sampler in cd_update; receives and returns augmented vectors.
using ReconstructionOverride = std::function<Vector(const Vector& augmented_data)>;

/// One CD-1 step: (data statistics - reconstruction statistics) averaged
/// over the batch, applied with momentum. Only the first n rows of the
/// augmented constraint matrix learn. Case c uses rng.split(c).
inline CdDiagnostics cd_update(MixtureExpertSet& model, CdVelocity& velocity, const DataBatch& batch,
                               const CdTrainConfig& config, const RngStream& rng, std::size_t update_index = 0,
                               const ReconstructionOverride& override_reconstruction = nullptr) {
    validate(config);
    if (batch.n() != model.n()) {
        throw InvalidInput("batch dimension " + std::to_string(batch.n()) + " != model dimension " +
                           std::to_string(model.n()));
    }
    const AugmentedModel aug(model);
    const auto n = static_cast<Eigen::Index>(model.n());
    const auto m = static_cast<Eigen::Index>(model.m());

    Matrix d_lambda = Matrix::Zero(n, m);
    Vector d_mixing = Vector::Zero(m);
    Vector d_var1 = Vector::Zero(m);
    Vector d_var0 = Vector::Zero(m);
    CdDiagnostics diag;
    diag.update = update_index;

    for (std::size_t c = 0; c < batch.count(); ++c) {
        RngStream case_rng = rng.split(c);
        const Vector d = aug.augment(batch.row(c));
        const ExpertGradients pos = positive_gradients(model, d);
        const Vector d_hat = override_reconstruction ? override_reconstruction(d) : reconstruct(aug, d, case_rng).d_hat;
        const ExpertGradients neg = positive_gradients(model, d_hat);

        d_mixing += pos.mixing - neg.mixing;
        d_var1 += pos.log_var1 - neg.log_var1;
        d_var0 += pos.log_var0 - neg.log_var0;
        d_lambda += pos.lambda.topRows(n) - neg.lambda.topRows(n);

        diag.reconstruction_error += (d.head(n) - d_hat.head(n)).norm();
        diag.mean_responsibility += pos.responsibility.mean();
    }

    const double count = static_cast<double>(batch.count());
    if (count > 0) {
        const double inv = 1.0 / count;
        diag.reconstruction_error *= inv;
        diag.mean_responsibility *= inv;
        const double lr = config.learning_rate * inv;
        velocity.lambda = config.momentum * velocity.lambda + lr * config.lambda_scale * d_lambda;
        velocity.mixing_logit = config.momentum * velocity.mixing_logit + lr * config.mixing_scale * d_mixing;
        velocity.log_var1 = config.momentum * velocity.log_var1 + lr * config.variance_scale * d_var1;
        velocity.log_var0 = config.momentum * velocity.log_var0 + lr * config.variance_scale * d_var0;
        model.lambda += velocity.lambda;
        model.mixing_logit += velocity.mixing_logit;
        model.log_var1 += velocity.log_var1;
        model.log_var0 += velocity.log_var0;
    }
    if (!model.all_finite()) {
        throw Divergence(update_index, "non-finite mixture-expert parameter");
    }

    diag.lambda_norm = model.lambda.norm();
    if (m > 0) {
        diag.mean_mixing_logit = model.mixing_logit.mean();
        diag.mean_log_var1 = model.log_var1.mean();
        diag.mean_log_var0 = model.log_var0.mean();
    }
    return diag;
}

struct CdTrainResult {
    MixtureExpertSet model;
    std::vector<CdDiagnostics> trace;
};

using CdCheckpoint = std::function<void(std::size_t update, const MixtureExpertSet&)>;

/// Update u draws its batch from source(u, batch_size) and its sampler
/// stream from RngStream(seed, 3).split(u).
inline CdTrainResult train_cd(MixtureExpertSet model, const DataSource& source, const CdTrainConfig& config,
                              const CdCheckpoint& checkpoint = nullptr) {
    validate(config);
    check_consistent(model);
    CdTrainResult result;
    result.trace.reserve(config.updates);
    CdVelocity velocity = CdVelocity::zeros_like(model);
    const RngStream root(config.seed, 3);
    for (std::size_t u = 0; u < config.updates; ++u) {
        const DataBatch batch = source(u, config.batch_size);
        result.trace.push_back(cd_update(model, velocity, batch, config, root.split(u), u));
        if (checkpoint && config.checkpoint_every && (u + 1) % config.checkpoint_every == 0) {
            checkpoint(u + 1, model);
        }
    }
    result.model = std::move(model);
    return result;
}

}  // namespace fas::cd

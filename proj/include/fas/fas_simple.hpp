#pragma once

// Linear FAS constraints with a student-t violation cost, fitted by
// momentum gradient descent on the summed energy with per-expert weight-sum
// normalisation and energy-proportional case reweighting.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fas/datagen.hpp"
#include "fas/error.hpp"
#include "fas/numerics.hpp"

namespace fas::simple {

/// m linear constraints over n inputs. Row j of weights is expert j.
struct StudentTExpertSet {
    Matrix weights;
    double stiffness = 100.0;

    std::size_t n() const { return static_cast<std::size_t>(weights.cols()); }
    std::size_t m() const { return static_cast<std::size_t>(weights.rows()); }
};

struct SimpleTrainConfig {
    std::size_t experts = 25;
    double stiffness = 100.0;
    double learning_rate = 1e-7;
    double momentum = 0.98;
    std::size_t batch_size = 1000;
    std::size_t updates = 4000;
    bool reweight_by_energy = true;
    // Remove the component of each expert's gradient along (1, ..., 1) so
    // the step keeps sum_i w_i fixed. Without it the rescale that follows a
    // raw step on all-positive data shrinks the sum and inflates the weights.
    bool project_gradient = true;
    std::uint64_t seed = 0;
};

inline void validate(const SimpleTrainConfig& c) {
    if (!(c.learning_rate >= 0.0) || !std::isfinite(c.learning_rate)) {
        throw InvalidInput("learning rate must be finite and nonnegative");
    }
    if (!(c.momentum >= 0.0 && c.momentum < 1.0)) {
        throw InvalidInput("momentum must lie in [0, 1)");
    }
    if (!(c.stiffness > 0.0) || !std::isfinite(c.stiffness)) {
        throw InvalidInput("stiffness k must be positive");
    }
    if (c.batch_size == 0) {
        throw InvalidInput("batch size must be positive");
    }
}

/// v = sum_i w_i d_i
template <typename W, typename D>
double violation(const Eigen::MatrixBase<W>& w, const Eigen::MatrixBase<D>& d) {
    if (w.size() != d.size()) {
        throw InvalidInput("violation: weight length " + std::to_string(w.size()) + " != data length " +
                           std::to_string(d.size()));
    }
    return w.reshaped().dot(d.reshaped());
}

/// log(1 + k v^2); the additive constant of the student-t cost is dropped.
inline double violation_energy(double v, double k) { return std::log1p(k * v * v); }

/// d/dv log(1 + k v^2)
inline double violation_energy_slope(double v, double k) { return 2.0 * k * v / (1.0 + k * v * v); }

inline void require_dimension(const StudentTExpertSet& model, const DataBatch& batch) {
    if (batch.n() != model.n()) {
        throw InvalidInput("batch dimension " + std::to_string(batch.n()) + " != model dimension " +
                           std::to_string(model.n()));
    }
}

struct EnergyReport {
    Vector per_case;  // E_c
    double total = 0.0;
};

/// Violations for every case and expert (count x m).
inline Matrix violations(const StudentTExpertSet& model, const DataBatch& batch) {
    require_dimension(model, batch);
    return batch.values * model.weights.transpose();
}

inline EnergyReport total_energy(const StudentTExpertSet& model, const DataBatch& batch) {
    const Matrix v = violations(model, batch);
    EnergyReport r;
    r.per_case = Vector::Zero(v.rows());
    for (Eigen::Index c = 0; c < v.rows(); ++c) {
        double e = 0.0;
        for (Eigen::Index j = 0; j < v.cols(); ++j) {
            e += violation_energy(v(c, j), model.stiffness);
        }
        r.per_case(c) = e;
    }
    r.total = r.per_case.sum();
    return r;
}

/// dE_total/dw, weighted per case: row j is the gradient for expert j.
inline Matrix energy_gradient(const StudentTExpertSet& model, const DataBatch& batch, const Vector& case_weights) {
    if (static_cast<std::size_t>(case_weights.size()) != batch.count()) {
        throw InvalidInput("case weight count does not match batch");
    }
    if ((case_weights.array() < 0.0).any()) {
        throw InvalidInput("case weights must be nonnegative");
    }
    Matrix slope = violations(model, batch);  // count x m
    for (Eigen::Index c = 0; c < slope.rows(); ++c) {
        for (Eigen::Index j = 0; j < slope.cols(); ++j) {
            slope(c, j) = case_weights(c) * violation_energy_slope(slope(c, j), model.stiffness);
        }
    }
    return slope.transpose() * batch.values;
}

/// g_c = E_c / mean(E); uniform weights when every energy is zero.
inline Vector energy_case_weights(const Vector& per_case_energy) {
    const Eigen::Index count = per_case_energy.size();
    if (count == 0) {
        return Vector();
    }
    const double mean = per_case_energy.mean();
    if (!(mean > 0.0)) {
        return Vector::Ones(count);
    }
    return per_case_energy / mean;
}

/// Divide each expert by its component sum so that sum_i w_i = 1.
inline void rescale_weights(StudentTExpertSet& model) {
    for (Eigen::Index j = 0; j < model.weights.rows(); ++j) {
        const double s = model.weights.row(j).sum();
        if (!(std::abs(s) > 1e-8)) {
            throw DegenerateConstraint(static_cast<std::size_t>(j), "weight sum is too close to zero to rescale");
        }
        model.weights.row(j) /= s;
    }
}

/// Per-row projection onto {g : sum_i g_i = 0}.
inline void project_to_sum_plane(Matrix& grad) {
    for (Eigen::Index j = 0; j < grad.rows(); ++j) {
        grad.row(j).array() -= grad.row(j).mean();
    }
}

/// N(0, 0.01) entries followed by one rescale.
inline StudentTExpertSet init_experts(std::size_t n, std::size_t m, double stiffness, RngStream rng) {
    StudentTExpertSet model;
    model.stiffness = stiffness;
    model.weights.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    for (Eigen::Index j = 0; j < model.weights.rows(); ++j) {
        for (Eigen::Index i = 0; i < model.weights.cols(); ++i) {
            model.weights(j, i) = 0.1 * rng.normal();
        }
    }
    rescale_weights(model);
    return model;
}

struct SimpleTrainResult {
    StudentTExpertSet model;
    std::vector<double> mean_energy;  // per update, mean_c E_c before the step
};

/// Alternates gradient steps with rescaling: rescale, then per update
/// dw <- momentum dw - lr grad; w <- w + dw; rescale.
inline SimpleTrainResult train_simple(StudentTExpertSet model, const DataSource& source,
                                      const SimpleTrainConfig& config) {
    validate(config);
    rescale_weights(model);
    SimpleTrainResult result;
    result.mean_energy.reserve(config.updates);
    Matrix velocity = Matrix::Zero(model.weights.rows(), model.weights.cols());

    for (std::size_t u = 0; u < config.updates; ++u) {
        const DataBatch batch = source(u, config.batch_size);
        const EnergyReport energy = total_energy(model, batch);
        if (!std::isfinite(energy.total)) {
            throw Divergence(u, "non-finite energy");
        }
        result.mean_energy.push_back(batch.count() ? energy.total / static_cast<double>(batch.count()) : 0.0);

        const Vector weights = config.reweight_by_energy ? energy_case_weights(energy.per_case)
                                                         : Vector::Ones(energy.per_case.size());
        Matrix grad = energy_gradient(model, batch, weights);
        if (config.project_gradient) {
            project_to_sum_plane(grad);
        }
        velocity = config.momentum * velocity - config.learning_rate * grad;
        model.weights += velocity;
        if (!model.weights.allFinite()) {
            throw Divergence(u, "non-finite weights");
        }
        try {
            rescale_weights(model);
        } catch (const DegenerateConstraint& e) {
            throw Divergence(u, e.what());
        }
    }
    result.model = std::move(model);
    return result;
}

}  // namespace fas::simple

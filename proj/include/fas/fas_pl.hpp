#pragma once

// Pseudo-likelihood learning of student-t linear constraints over quantized
// visible variables, single-site Gibbs sampling from the product of experts,
// and exact enumeration of the joint for tiny state spaces.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fas/datagen.hpp"
#include "fas/error.hpp"
#include "fas/fas_simple.hpp"
#include "fas/numerics.hpp"

namespace fas::pl {

using simple::StudentTExpertSet;

inline constexpr double kLatticeTolerance = 1e-12;

/// The a admissible values of every visible variable, strictly increasing.
class QuantizedSpace {
public:
    QuantizedSpace() = default;

    explicit QuantizedSpace(std::vector<double> levels) : levels_(std::move(levels)) {
        if (levels_.size() < 2) {
            throw InvalidInput("quantized space needs at least 2 levels");
        }
        for (std::size_t t = 0; t < levels_.size(); ++t) {
            if (!std::isfinite(levels_[t]) || levels_[t] < 0.0 || levels_[t] > 1.0) {
                throw InvalidInput("quantization levels must lie in [0, 1]");
            }
            if (t > 0 && !(levels_[t] > levels_[t - 1])) {
                throw InvalidInput("quantization levels must be strictly increasing");
            }
        }
    }

    /// a levels evenly spaced on [0, 1].
    static QuantizedSpace uniform(std::size_t a) {
        if (a < 2) {
            throw InvalidInput("quantized space needs at least 2 levels");
        }
        std::vector<double> lv(a);
        for (std::size_t t = 0; t < a; ++t) {
            lv[t] = static_cast<double>(t) / static_cast<double>(a - 1);
        }
        return QuantizedSpace(std::move(lv));
    }

    std::size_t size() const { return levels_.size(); }
    double level(std::size_t t) const { return levels_[t]; }
    const std::vector<double>& levels() const { return levels_; }

    /// Index of the level equal to value within kLatticeTolerance.
    std::optional<std::size_t> index_of(double value) const {
        const std::size_t t = nearest(value);
        if (std::abs(levels_[t] - value) <= kLatticeTolerance) {
            return t;
        }
        return std::nullopt;
    }

    std::size_t nearest(double value) const {
        auto it = std::lower_bound(levels_.begin(), levels_.end(), value);
        if (it == levels_.end()) {
            return levels_.size() - 1;
        }
        const auto t = static_cast<std::size_t>(it - levels_.begin());
        if (t > 0 && value - levels_[t - 1] < *it - value) {
            return t - 1;
        }
        return t;
    }

private:
    std::vector<double> levels_;
};

struct PlModel {
    StudentTExpertSet experts;
    QuantizedSpace space;

    std::size_t n() const { return experts.n(); }
    std::size_t m() const { return experts.m(); }
};

template <typename D>
void require_on_lattice(const PlModel& model, const Eigen::MatrixBase<D>& d) {
    if (static_cast<std::size_t>(d.size()) != model.n()) {
        throw InvalidInput("data length " + std::to_string(d.size()) + " != model dimension " +
                           std::to_string(model.n()));
    }
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        if (!model.space.index_of(d(i))) {
            throw InvalidInput("component " + std::to_string(i) + " (" + std::to_string(d(i)) +
                               ") is not a quantization level");
        }
    }
}

inline void require_on_lattice(const PlModel& model, const DataBatch& batch) {
    for (std::size_t c = 0; c < batch.count(); ++c) {
        require_on_lattice(model, batch.row(c));
    }
}

struct SnapReport {
    DataBatch batch;
    double max_distance = 0.0;
};

/// Replace every value by its nearest level, reporting the largest move.
inline SnapReport snap_to_lattice(DataBatch batch, const QuantizedSpace& space) {
    SnapReport r;
    for (auto& x : batch.values.reshaped()) {
        const double snapped = space.level(space.nearest(x));
        r.max_distance = std::max(r.max_distance, std::abs(snapped - x));
        x = snapped;
    }
    r.batch = std::move(batch);
    return r;
}

namespace detail {

inline double energy_from_violations(const Vector& v, double k) {
    double e = 0.0;
    for (Eigen::Index j = 0; j < v.size(); ++j) {
        e += simple::violation_energy(v(j), k);
    }
    return e;
}

/// Energies E_t of the a states of site i given base violations v.
/// Writes the shifted violations into shifted (m x a) when non-null.
inline void site_energies(const PlModel& model, const Vector& v, Eigen::Index i, double current, Vector& energies,
                          Matrix* shifted = nullptr) {
    const std::size_t a = model.space.size();
    const auto m = static_cast<Eigen::Index>(model.m());
    const double k = model.experts.stiffness;
    energies.resize(static_cast<Eigen::Index>(a));
    for (std::size_t t = 0; t < a; ++t) {
        const double delta = model.space.level(t) - current;
        double e = 0.0;
        for (Eigen::Index j = 0; j < m; ++j) {
            const double vt = v(j) + model.experts.weights(j, i) * delta;
            e += simple::violation_energy(vt, k);
            if (shifted) {
                (*shifted)(j, static_cast<Eigen::Index>(t)) = vt;
            }
        }
        energies(static_cast<Eigen::Index>(t)) = e;
    }
}

/// log p_t = -E_t - logsumexp(-E)
inline Vector log_softmax_neg(const Vector& energies) {
    const double emin = energies.minCoeff();
    double z = 0.0;
    for (Eigen::Index t = 0; t < energies.size(); ++t) {
        z += std::exp(emin - energies(t));
    }
    const double log_z = -emin + std::log(z);
    return (-energies.array() - log_z).matrix();
}

}  // namespace detail

/// E(d) = sum_j log(1 + k (w_j . d)^2)
template <typename D>
double case_energy(const PlModel& model, const Eigen::MatrixBase<D>& d) {
    require_on_lattice(model, d);
    const Vector v = model.experts.weights * d;
    return detail::energy_from_violations(v, model.experts.stiffness);
}

/// p(d_i = level_t | rest), computed from O(m) violation shifts per level.
template <typename D>
Vector conditional_distribution(const PlModel& model, const Eigen::MatrixBase<D>& d, std::size_t i) {
    if (i >= model.n()) {
        throw InvalidInput("site index " + std::to_string(i) + " out of range");
    }
    require_on_lattice(model, d);
    const Vector v = model.experts.weights * d;
    Vector energies;
    detail::site_energies(model, v, static_cast<Eigen::Index>(i), d(static_cast<Eigen::Index>(i)), energies);
    return detail::log_softmax_neg(energies).array().exp().matrix();
}

/// sum_c sum_i log p(d_i^c | d_rest^c)
inline double log_pseudo_likelihood(const PlModel& model, const DataBatch& batch) {
    require_on_lattice(model, batch);
    double total = 0.0;
    Vector energies;
    for (std::size_t c = 0; c < batch.count(); ++c) {
        const Vector d = batch.row(c);
        const Vector v = model.experts.weights * d;
        for (Eigen::Index i = 0; i < d.size(); ++i) {
            detail::site_energies(model, v, i, d(i), energies);
            const Vector logp = detail::log_softmax_neg(energies);
            total += logp(static_cast<Eigen::Index>(*model.space.index_of(d(i))));
        }
    }
    return total;
}

/// Exact gradient of log_pseudo_likelihood with respect to the weights
/// (m x n). Per case: one O(mn) pass for the violations, then for every
/// site and level an O(m) shift, so O(mna) overall.
///
/// With phi = dE/dv and p_it the site conditionals,
///   grad_jl = d_l (sum_i A_ji - n phi_j) + B_jl
///   A_ji = sum_t p_it phi(v_j + w_ji delta_it)
///   B_ji = sum_t p_it phi(v_j + w_ji delta_it) delta_it,  delta_it = level_t - d_i
inline Matrix pl_gradient(const PlModel& model, const DataBatch& batch) {
    require_on_lattice(model, batch);
    const auto m = static_cast<Eigen::Index>(model.m());
    const auto n = static_cast<Eigen::Index>(model.n());
    const auto a = static_cast<Eigen::Index>(model.space.size());
    const double k = model.experts.stiffness;
    Matrix grad = Matrix::Zero(m, n);
    if (m == 0) {
        return grad;
    }

    Vector energies;
    Matrix shifted(m, a);
    Vector a_sum(m);
    for (std::size_t c = 0; c < batch.count(); ++c) {
        const Vector d = batch.row(c);
        const Vector v = model.experts.weights * d;
        a_sum.setZero();
        for (Eigen::Index i = 0; i < n; ++i) {
            detail::site_energies(model, v, i, d(i), energies, &shifted);
            const Vector p = detail::log_softmax_neg(energies).array().exp().matrix();
            for (Eigen::Index t = 0; t < a; ++t) {
                const double delta = model.space.level(static_cast<std::size_t>(t)) - d(i);
                for (Eigen::Index j = 0; j < m; ++j) {
                    const double w = p(t) * simple::violation_energy_slope(shifted(j, t), k);
                    a_sum(j) += w;
                    grad(j, i) += w * delta;
                }
            }
        }
        for (Eigen::Index j = 0; j < m; ++j) {
            const double coef = a_sum(j) - static_cast<double>(n) * simple::violation_energy_slope(v(j), k);
            grad.row(j) += coef * d.transpose();
        }
    }
    return grad;
}

enum class ScanOrder { sequential, random };

/// One sweep of single-site Gibbs updates over all n sites.
template <typename D>
Vector gibbs_sweep(const PlModel& model, const Eigen::MatrixBase<D>& start, RngStream& rng,
                   ScanOrder order = ScanOrder::sequential) {
    require_on_lattice(model, start);
    Vector d = start;
    Vector v = model.experts.weights * d;
    Vector energies;
    const auto n = static_cast<Eigen::Index>(model.n());
    for (Eigen::Index step = 0; step < n; ++step) {
        const Eigen::Index i =
            order == ScanOrder::sequential ? step : static_cast<Eigen::Index>(rng.index(model.n()));
        detail::site_energies(model, v, i, d(i), energies);
        const Vector p = detail::log_softmax_neg(energies).array().exp().matrix();
        const double u = rng.uniform();
        Eigen::Index t = 0;
        double acc = p(0);
        while (t + 1 < p.size() && u >= acc) {
            ++t;
            acc += p(t);
        }
        const double next = model.space.level(static_cast<std::size_t>(t));
        v += model.experts.weights.col(i) * (next - d(i));
        d(i) = next;
    }
    return d;
}

inline constexpr std::size_t kMaxEnumeratedStates = 1'000'000;

/// Exact distribution over all a^n lattice states. State index s encodes
/// site i as digit i in base a (site 0 least significant).
struct JointTable {
    std::size_t n = 0;
    std::size_t a = 0;
    Vector energy;
    Vector probability;
    double log_partition = 0.0;

    std::size_t states() const { return static_cast<std::size_t>(probability.size()); }
};

inline std::size_t enumerated_state_count(std::size_t n, std::size_t a) {
    std::size_t total = 1;
    for (std::size_t i = 0; i < n; ++i) {
        if (total > kMaxEnumeratedStates / a) {
            throw CapacityError("state space a^n exceeds " + std::to_string(kMaxEnumeratedStates) + " states");
        }
        total *= a;
    }
    return total;
}

inline Vector state_vector(const QuantizedSpace& space, std::size_t n, std::size_t index) {
    Vector d(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        d(static_cast<Eigen::Index>(i)) = space.level(index % space.size());
        index /= space.size();
    }
    return d;
}

template <typename D>
std::size_t state_index(const QuantizedSpace& space, const Eigen::MatrixBase<D>& d) {
    std::size_t index = 0;
    for (Eigen::Index i = d.size() - 1; i >= 0; --i) {
        const auto t = space.index_of(d(i));
        if (!t) {
            throw InvalidInput("component " + std::to_string(i) + " is not a quantization level");
        }
        index = index * space.size() + *t;
    }
    return index;
}

inline JointTable brute_force_joint(const PlModel& model) {
    JointTable table;
    table.n = model.n();
    table.a = model.space.size();
    const std::size_t states = enumerated_state_count(table.n, table.a);
    table.energy.resize(static_cast<Eigen::Index>(states));
    for (std::size_t s = 0; s < states; ++s) {
        const Vector d = state_vector(model.space, table.n, s);
        table.energy(static_cast<Eigen::Index>(s)) =
            detail::energy_from_violations(model.experts.weights * d, model.experts.stiffness);
    }
    const double emin = table.energy.minCoeff();
    table.probability = (emin - table.energy.array()).exp().matrix();
    const double z = table.probability.sum();
    table.probability /= z;
    table.log_partition = -emin + std::log(z);
    return table;
}

/// p(d_i | rest) read off the enumerated joint.
template <typename D>
Vector joint_conditional(const PlModel& model, const JointTable& table, const Eigen::MatrixBase<D>& d,
                         std::size_t i) {
    Vector probe = d;
    Vector p(static_cast<Eigen::Index>(table.a));
    for (std::size_t t = 0; t < table.a; ++t) {
        probe(static_cast<Eigen::Index>(i)) = model.space.level(t);
        p(static_cast<Eigen::Index>(t)) = table.probability(static_cast<Eigen::Index>(state_index(model.space, probe)));
    }
    return p / p.sum();
}

/// Every lattice state as one batch row, in state-index order.
inline DataBatch enumerate_states(const QuantizedSpace& space, std::size_t n) {
    const std::size_t states = enumerated_state_count(n, space.size());
    DataBatch all(Matrix(static_cast<Eigen::Index>(states), static_cast<Eigen::Index>(n)));
    for (std::size_t s = 0; s < states; ++s) {
        all.values.row(static_cast<Eigen::Index>(s)) = state_vector(space, n, s).transpose();
    }
    return all;
}

/// Largest disagreements between the incremental conditionals and the
/// enumerated joint, over every state and site.
struct OracleReport {
    double conditional = 0.0;         // max |p - p_joint|
    double pseudo_likelihood = 0.0;   // |log PL - sum log p_joint(d_i | rest)| over all states
    double normalization = 0.0;       // |sum p - 1|
    std::size_t states = 0;

    double worst() const { return std::max({conditional, pseudo_likelihood, normalization}); }
};

inline OracleReport oracle_report(const PlModel& model) {
    const JointTable table = brute_force_joint(model);
    const DataBatch all = enumerate_states(model.space, model.n());
    OracleReport r;
    r.states = table.states();
    r.normalization = std::abs(table.probability.sum() - 1.0);
    double reference = 0.0;
    for (std::size_t s = 0; s < all.count(); ++s) {
        const Vector d = all.row(s);
        for (std::size_t i = 0; i < model.n(); ++i) {
            const Vector fast = conditional_distribution(model, d, i);
            const Vector slow = joint_conditional(model, table, d, i);
            r.conditional = std::max(r.conditional, (fast - slow).cwiseAbs().maxCoeff());
            reference += std::log(slow(static_cast<Eigen::Index>(*model.space.index_of(d(static_cast<Eigen::Index>(i))))));
        }
    }
    r.pseudo_likelihood = std::abs(log_pseudo_likelihood(model, all) - reference);
    return r;
}

struct ExactLikelihood {
    double log_likelihood = 0.0;
    Matrix gradient;  // m x n
};

/// Exact log-likelihood of the batch and its gradient: data average of
/// d log f_j / dw minus the model expectation under the enumerated joint,
/// summed over cases.
inline ExactLikelihood exact_log_likelihood(const PlModel& model, const DataBatch& batch) {
    require_on_lattice(model, batch);
    const JointTable table = brute_force_joint(model);
    const double k = model.experts.stiffness;
    const auto m = static_cast<Eigen::Index>(model.m());
    const auto n = static_cast<Eigen::Index>(model.n());

    // d log f_j(d) / d w_jl = -phi(v_j) d_l
    auto score = [&](const Vector& d) {
        Matrix g(m, n);
        const Vector v = model.experts.weights * d;
        for (Eigen::Index j = 0; j < m; ++j) {
            g.row(j) = -simple::violation_energy_slope(v(j), k) * d.transpose();
        }
        return g;
    };

    ExactLikelihood out;
    out.gradient = Matrix::Zero(m, n);
    for (std::size_t c = 0; c < batch.count(); ++c) {
        const Vector d = batch.row(c);
        out.log_likelihood += std::log(table.probability(static_cast<Eigen::Index>(state_index(model.space, d))));
        out.gradient += score(d);
    }
    Matrix expectation = Matrix::Zero(m, n);
    for (std::size_t s = 0; s < table.states(); ++s) {
        expectation += table.probability(static_cast<Eigen::Index>(s)) * score(state_vector(model.space, table.n, s));
    }
    out.gradient -= static_cast<double>(batch.count()) * expectation;
    return out;
}

enum class PlOptimizer { momentum, conjugate_gradient };

struct PlTrainConfig {
    std::size_t experts = 8;
    double stiffness = 100.0;
    std::size_t levels = 16;
    double learning_rate = 0.05;  // applied to the per-case mean gradient
    double momentum = 0.9;
    std::size_t iterations = 100;
    bool line_search = true;
    std::size_t max_backtracks = 30;
    PlOptimizer optimizer = PlOptimizer::momentum;
    std::uint64_t seed = 0;
};

inline void validate(const PlTrainConfig& c) {
    if (!(c.learning_rate >= 0.0) || !std::isfinite(c.learning_rate)) {
        throw InvalidInput("learning rate must be finite and nonnegative");
    }
    if (!(c.momentum >= 0.0 && c.momentum < 1.0)) {
        throw InvalidInput("momentum must lie in [0, 1)");
    }
    if (!(c.stiffness > 0.0)) {
        throw InvalidInput("stiffness k must be positive");
    }
    if (c.levels < 2) {
        throw InvalidInput("need at least 2 quantization levels");
    }
}

/// Small N(0, 0.01) weights; no weight-sum normalisation for this learner.
inline PlModel init_pl_model(std::size_t n, std::size_t m, double stiffness, QuantizedSpace space, RngStream rng) {
    PlModel model;
    model.space = std::move(space);
    model.experts.stiffness = stiffness;
    model.experts.weights.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    for (auto& w : model.experts.weights.reshaped()) {
        w = 0.1 * rng.normal();
    }
    return model;
}

struct PlTrainResult {
    PlModel model;
    std::vector<double> objective;  // initial value, then one per iteration
};

/// Gradient ascent on the log pseudo-likelihood. With line_search the
/// proposed step is halved until the objective does not decrease (and
/// dropped, resetting momentum, if no halving succeeds), so the trace is
/// non-decreasing.
inline PlTrainResult train_pl(PlModel model, const DataBatch& batch, const PlTrainConfig& config) {
    validate(config);
    require_on_lattice(model, batch);
    const double scale = batch.count() ? 1.0 / static_cast<double>(batch.count()) : 0.0;

    PlTrainResult result;
    double f = log_pseudo_likelihood(model, batch);
    if (!std::isfinite(f)) {
        throw Divergence(0, "non-finite pseudo-likelihood");
    }
    result.objective.push_back(f);

    Matrix velocity = Matrix::Zero(model.experts.weights.rows(), model.experts.weights.cols());
    Matrix prev_grad;
    Matrix direction;
    for (std::size_t it = 0; it < config.iterations; ++it) {
        const Matrix grad = scale * pl_gradient(model, batch);
        Matrix step;
        if (config.optimizer == PlOptimizer::momentum) {
            step = config.momentum * velocity + config.learning_rate * grad;
        } else {
            double beta = 0.0;
            if (prev_grad.size() && prev_grad.squaredNorm() > 0.0) {
                beta = std::max(0.0, grad.cwiseProduct(grad - prev_grad).sum() / prev_grad.squaredNorm());
            }
            direction = direction.size() ? Matrix(grad + beta * direction) : grad;
            if (direction.cwiseProduct(grad).sum() <= 0.0) {
                direction = grad;
            }
            prev_grad = grad;
            step = config.learning_rate * direction;
        }

        PlModel trial = model;
        trial.experts.weights += step;
        double f_trial = log_pseudo_likelihood(trial, batch);
        if (config.line_search) {
            std::size_t tries = 0;
            while (!(f_trial >= f) && tries < config.max_backtracks) {
                step *= 0.5;
                trial.experts.weights = model.experts.weights + step;
                f_trial = log_pseudo_likelihood(trial, batch);
                ++tries;
            }
            if (!(f_trial >= f)) {
                step.setZero();
                trial = model;
                f_trial = f;
                direction.resize(0, 0);
            }
        }
        if (!std::isfinite(f_trial)) {
            throw Divergence(it, "non-finite pseudo-likelihood");
        }
        velocity = step;
        model = std::move(trial);
        f = f_trial;
        result.objective.push_back(f);
    }
    result.model = std::move(model);
    return result;
}

/// Tiny enumerable model used by the oracle checks: n = 3, a = 4, m = 2,
/// k = 100, N(0, 1) weights.
inline PlModel tiny_reference_model(std::uint64_t seed = 1) {
    PlModel model;
    model.space = QuantizedSpace::uniform(4);
    model.experts.stiffness = 100.0;
    model.experts.weights.resize(2, 3);
    RngStream rng(seed);
    for (auto& w : model.experts.weights.reshaped()) {
        w = rng.normal();
    }
    return model;
}

}  // namespace fas::pl

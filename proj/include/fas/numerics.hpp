#pragma once

// Dense linear algebra and seedable random streams shared by all learners.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "fas/error.hpp"

namespace fas {

/// Row-major so that a batch row (one case) is contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline void require_finite(const Matrix& a, const char* what) {
    if (!a.allFinite()) {
        throw InvalidInput(std::string(what) + ": non-finite entry");
    }
}

inline void require_finite(const Vector& a, const char* what) {
    if (!a.allFinite()) {
        throw InvalidInput(std::string(what) + ": non-finite entry");
    }
}

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

}  // namespace detail

/// Reproducible random stream identified by (seed, stream-id).
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard; all transforms to doubles and normals are done here rather
/// than through <random> distributions, whose algorithms are
/// implementation-defined. Child streams are derived with split(), so
/// independent workers never share state.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0)
        : seed_(seed), stream_(stream_id), engine_(mix(seed, stream_id)) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_; }

    /// Independent child stream; deterministic in (seed, stream-id, sub).
    RngStream split(std::uint64_t sub) const {
        return RngStream(seed_, detail::splitmix64(stream_ ^ detail::splitmix64(sub + 0x632BE59BD9B4E019ull)));
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer on [0, n).
    std::size_t index(std::size_t n) {
        if (n == 0) {
            throw InvalidInput("RngStream::index: empty range");
        }
        // Rejection sampling keeps the result unbiased.
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return static_cast<std::size_t>(x % n);
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal (Marsaglia polar method).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

private:
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
        return detail::splitmix64(detail::splitmix64(seed) ^ (stream * 0xD1342543DE82EF95ull + 1));
    }

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Default relative singular-value cutoff for pseudo_inverse.
inline constexpr double kPinvTolerance = 1e-12;

/// Moore-Penrose pseudo-inverse via SVD. Singular values below
/// tol * sigma_max are treated as zero.
inline Matrix pseudo_inverse(const Matrix& a, double tol = kPinvTolerance) {
    if (a.rows() == 0 || a.cols() == 0) {
        throw InvalidInput("pseudo_inverse: empty matrix");
    }
    if (!(tol > 0.0)) {
        throw InvalidInput("pseudo_inverse: tolerance must be positive");
    }
    require_finite(a, "pseudo_inverse");

    Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& sv = svd.singularValues();
    const double cutoff = tol * (sv.size() > 0 ? sv(0) : 0.0);
    Vector inv = Vector::Zero(sv.size());
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > cutoff) {
            inv(i) = 1.0 / sv(i);
        }
    }
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

/// Independent zero-mean normal draws with per-component variances.
/// A zero variance yields exactly 0.
inline Vector sample_gaussian_diag(const Vector& variances, RngStream& rng) {
    Vector out(variances.size());
    for (Eigen::Index i = 0; i < variances.size(); ++i) {
        const double var = variances(i);
        if (!std::isfinite(var) || var < 0.0) {
            throw InvalidInput("sample_gaussian_diag: variance " + std::to_string(i) +
                               " must be finite and nonnegative");
        }
        const double z = rng.normal();
        out(i) = var == 0.0 ? 0.0 : std::sqrt(var) * z;
    }
    return out;
}

/// log(exp(a) + exp(b)) without overflow.
inline double log_add_exp(double a, double b) {
    if (a < b) {
        std::swap(a, b);
    }
    if (a == -std::numeric_limits<double>::infinity()) {
        return a;
    }
    return a + std::log1p(std::exp(b - a));
}

}  // namespace fas

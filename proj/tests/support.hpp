#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "fas/numerics.hpp"

namespace fas::testing {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, RngStream& rng, double scale = 1.0) {
    Matrix a(rows, cols);
    for (auto& x : a.reshaped()) x = scale * rng.normal();
    return a;
}

/// Central differences of f with respect to every entry of x.
inline Matrix central_difference(const std::function<double(const Matrix&)>& f, Matrix x, double h) {
    Matrix g(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        double& xi = x.reshaped<Eigen::RowMajor>()(i);
        const double saved = xi;
        xi = saved + h;
        const double up = f(x);
        xi = saved - h;
        const double down = f(x);
        xi = saved;
        g.reshaped<Eigen::RowMajor>()(i) = (up - down) / (2.0 * h);
    }
    return g;
}

inline double central_difference(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double relative_error(const Matrix& a, const Matrix& b) {
    const double scale = std::max(a.norm(), b.norm());
    return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

}  // namespace fas::testing

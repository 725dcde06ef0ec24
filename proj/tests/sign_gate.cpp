// Build-time gate: the analytic lambda gradient of the mixture-expert log
// density must agree in sign and magnitude with central differences.

#include <cstdio>

#include "fas/fas_cd.hpp"

using namespace fas;

int main() {
    RngStream rng(2024, 0);
    const double h = 1e-6;
    double worst = 0.0;
    int wrong_sign = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto n = static_cast<Eigen::Index>(1 + rng.index(6));
        cd::MixtureExpertSet s = cd::init_mixture_experts(static_cast<std::size_t>(n), 1, rng.split(trial));
        s.mixing_logit(0) = rng.uniform(-2.0, 2.0);
        s.log_var1(0) = rng.uniform(-1.0, 1.5);
        s.log_var0(0) = rng.uniform(-5.0, -1.0);
        Vector d(n);
        for (auto& x : d) x = rng.normal();

        const Vector analytic = cd::positive_gradients(s, d).lambda.col(0);
        const cd::ExpertParams e = s.expert(0);
        Vector numeric(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            Vector up = s.lambda.col(0), down = up;
            up(i) += h;
            down(i) -= h;
            numeric(i) = (cd::expert_log_density(e, up.dot(d)) - cd::expert_log_density(e, down.dot(d))) / (2.0 * h);
        }
        const double scale = std::max(analytic.norm(), numeric.norm());
        if (scale > 0.0) worst = std::max(worst, (analytic - numeric).norm() / scale);
        if (analytic.dot(numeric) < 0.0) ++wrong_sign;
    }
    std::printf("sign_gate: max relative error %.3g, sign mismatches %d/100\n", worst, wrong_sign);
    if (wrong_sign > 0 || !(worst < 1e-5)) {
        std::printf("sign_gate: FAIL\n");
        return 1;
    }
    std::printf("sign_gate: PASS\n");
    return 0;
}

// Recovers two planted linear constraints in 4-D data with CD-trained
// mixture experts and reports how well the learned span matches.

#include <cmath>
#include <iostream>
#include <numbers>

#include "fas/fas_cd.hpp"

using namespace fas;

int main() {
    RngStream rng(6, 0);
    Matrix g(4, 4);
    for (auto& x : g.reshaped()) x = rng.normal();
    const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
    const Matrix normals = q.leftCols(2);

    // Violations are usually tiny (sd 0.05) and occasionally large (sd 1).
    Matrix data(2000, 4);
    for (Eigen::Index c = 0; c < data.rows(); ++c) {
        Vector d = Vector::Zero(4);
        for (Eigen::Index k = 0; k < 2; ++k) {
            d += (rng.uniform() < 0.9 ? 0.05 : 1.0) * rng.normal() * normals.col(k);
            d += rng.uniform(-1.0, 1.0) * q.col(2 + k);
        }
        data.row(c) = d.transpose();
    }

    cd::CdTrainConfig cfg;
    cfg.experts = 2;
    cfg.updates = 3000;
    cfg.seed = 6;
    const auto result = cd::train_cd(cd::init_mixture_experts(4, 2, RngStream(cfg.seed, 6)),
                                     resampling_source(DataBatch(data), cfg.seed), cfg);

    const Matrix learned = Eigen::HouseholderQR<Matrix>(result.model.lambda).householderQ() * Matrix::Identity(4, 2);
    Eigen::JacobiSVD<Matrix> svd(normals.transpose() * learned);
    const double angle = std::acos(std::min(1.0, svd.singularValues().minCoeff())) * 180.0 / std::numbers::pi;
    std::cout << "largest principal angle to the planted span: " << angle << " deg\n";
    for (std::size_t j = 0; j < 2; ++j) {
        const auto e = result.model.expert(j);
        std::cout << "expert " << j << ": variances " << std::exp(e.log_var1) << " / " << std::exp(e.log_var0)
                  << ", prior " << cd::prior_probability(e) << "\n";
    }
}

#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cmath>

#include "fas/fas_pl.hpp"
#include "support.hpp"

using namespace fas;
using namespace fas::pl;
using fas::testing::central_difference;
using fas::testing::random_matrix;
using fas::testing::relative_error;

namespace {

PlModel fixture_model() {
    PlModel m;
    m.space = QuantizedSpace::uniform(4);
    m.experts.stiffness = 100.0;
    m.experts.weights.resize(2, 3);
    m.experts.weights << 0.8, -1.3, 0.4, -0.2, 0.9, 1.1;
    return m;
}

DataBatch fixture_batch() {
    Matrix d(2, 3);
    d << 1.0 / 3, 0.0, 1.0, 2.0 / 3, 2.0 / 3, 1.0 / 3;
    return DataBatch(d);
}

PlModel empty_model(std::size_t n, std::size_t a) {
    PlModel m;
    m.space = QuantizedSpace::uniform(a);
    m.experts.weights.resize(0, static_cast<Eigen::Index>(n));
    return m;
}

DataBatch random_lattice_batch(const QuantizedSpace& space, std::size_t count, std::size_t n, RngStream& rng) {
    Matrix d(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(n));
    for (auto& x : d.reshaped()) x = space.level(rng.index(space.size()));
    return DataBatch(d);
}

PlModel random_model(std::size_t n, std::size_t m, std::size_t a, RngStream& rng, double scale = 0.5) {
    PlModel model;
    model.space = QuantizedSpace::uniform(a);
    model.experts.stiffness = 100.0;
    model.experts.weights = random_matrix(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n), rng, scale);
    return model;
}

/// Exact draws from the enumerated joint.
DataBatch sample_from_table(const PlModel& model, const JointTable& table, std::size_t count, RngStream& rng) {
    Vector cdf(table.probability.size());
    double acc = 0.0;
    for (Eigen::Index s = 0; s < cdf.size(); ++s) cdf(s) = (acc += table.probability(s));
    Matrix d(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(model.n()));
    for (std::size_t c = 0; c < count; ++c) {
        const double u = rng.uniform() * acc;
        const auto s = static_cast<std::size_t>(std::upper_bound(cdf.data(), cdf.data() + cdf.size(), u) - cdf.data());
        d.row(static_cast<Eigen::Index>(c)) = state_vector(model.space, model.n(), std::min(s, table.states() - 1)).transpose();
    }
    return DataBatch(d);
}

}  // namespace

TEST(QuantizedSpace, ValidatesLevels) {
    EXPECT_THROW(QuantizedSpace({0.5}), InvalidInput);
    EXPECT_THROW(QuantizedSpace({0.2, 0.2}), InvalidInput);
    EXPECT_THROW(QuantizedSpace({0.0, 1.5}), InvalidInput);
    const QuantizedSpace s = QuantizedSpace::uniform(16);
    EXPECT_EQ(s.size(), 16u);
    EXPECT_EQ(s.level(0), 0.0);
    EXPECT_EQ(s.level(15), 1.0);
    EXPECT_EQ(*s.index_of(5.0 / 15.0), 5u);
    EXPECT_FALSE(s.index_of(0.01).has_value());
    EXPECT_EQ(s.nearest(0.04), 1u);
}

TEST(QuantizedSpace, SnapReportsDistance) {
    Matrix d(1, 2);
    d << 0.1, 0.95;
    const SnapReport r = snap_to_lattice(DataBatch(d), QuantizedSpace::uniform(2));
    EXPECT_EQ(r.batch.values(0, 0), 0.0);
    EXPECT_EQ(r.batch.values(0, 1), 1.0);
    EXPECT_NEAR(r.max_distance, 0.1, 1e-15);
}

TEST(CaseEnergy, Examples) {
    const PlModel none = empty_model(3, 4);
    EXPECT_EQ(case_energy(none, Vector::Zero(3)), 0.0);

    const PlModel m = fixture_model();
    const DataBatch b = fixture_batch();
    for (std::size_t c = 0; c < b.count(); ++c) {
        const Matrix one = b.values.row(static_cast<Eigen::Index>(c));
        EXPECT_DOUBLE_EQ(case_energy(m, b.row(c)), simple::total_energy(m.experts, DataBatch(one)).total);
    }
}

TEST(CaseEnergy, MatchesPerExpertSummation) {
    RngStream rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const PlModel m = random_model(5, 3, 6, rng);
        const DataBatch b = random_lattice_batch(m.space, 1, 5, rng);
        double expected = 0.0;
        for (Eigen::Index j = 0; j < 3; ++j) {
            double v = 0.0;
            for (Eigen::Index i = 0; i < 5; ++i) v += m.experts.weights(j, i) * b.values(0, i);
            expected += std::log1p(100.0 * v * v);
        }
        EXPECT_NEAR(case_energy(m, b.row(0)), expected, 1e-12);
    }
}

TEST(CaseEnergy, OffLatticeNamesComponent) {
    Vector d(3);
    d << 0.0, 0.5, 1.0;
    try {
        case_energy(fixture_model(), d);
        FAIL() << "expected InvalidInput";
    } catch (const InvalidInput& e) {
        EXPECT_NE(std::string(e.what()).find("component 1"), std::string::npos) << e.what();
    }
}

TEST(Conditional, NoExpertsGivesUniform) {
    const Vector p = conditional_distribution(empty_model(3, 5), Vector::Zero(3), 1);
    for (Eigen::Index t = 0; t < 5; ++t) EXPECT_DOUBLE_EQ(p(t), 0.2);
}

TEST(Conditional, MatchesIndependentOracle) {
    // tests/oracles/generate.py, PL section
    const Vector p = conditional_distribution(fixture_model(), fixture_batch().row(0), 1);
    EXPECT_NEAR(p(0), 0.10837443548731023, 1e-14);
    EXPECT_NEAR(p(1), 0.46072083528943427, 1e-14);
    EXPECT_NEAR(p(2), 0.39645357114689346, 1e-14);
    EXPECT_NEAR(p(3), 0.034451158076362042, 1e-14);
}

TEST(Conditional, IsAProbabilityVectorAndMatchesEnumeration) {
    RngStream rng(32);
    for (int trial = 0; trial < 10; ++trial) {
        const PlModel m = random_model(3, 2, 4, rng, 1.0);
        const JointTable table = brute_force_joint(m);
        for (std::size_t s = 0; s < table.states(); ++s) {
            const Vector d = state_vector(m.space, 3, s);
            for (std::size_t i = 0; i < 3; ++i) {
                const Vector p = conditional_distribution(m, d, i);
                ASSERT_GE(p.minCoeff(), 0.0);
                ASSERT_NEAR(p.sum(), 1.0, 1e-12);
                ASSERT_LT((p - joint_conditional(m, table, d, i)).cwiseAbs().maxCoeff(), 1e-10);
            }
        }
    }
}

TEST(Conditional, SiteOutOfRange) {
    EXPECT_THROW(conditional_distribution(fixture_model(), Vector::Zero(3), 3), InvalidInput);
}

TEST(PseudoLikelihood, NoExpertsGivesUniformValue) {
    RngStream rng(33);
    const PlModel m = empty_model(4, 5);
    const DataBatch b = random_lattice_batch(m.space, 7, 4, rng);
    EXPECT_NEAR(log_pseudo_likelihood(m, b), 7 * 4 * std::log(1.0 / 5.0), 1e-12);
}

TEST(PseudoLikelihood, MatchesIndependentOracle) {
    EXPECT_NEAR(log_pseudo_likelihood(fixture_model(), fixture_batch()), -14.49824870872303, 1e-12);
}

TEST(PseudoLikelihood, ArgmaxCaseBeatsAnyLeastProbableFlip) {
    const PlModel m = tiny_reference_model();
    // Coordinate ascent to a case that is the argmax of all its conditionals.
    Vector d = Vector::Zero(3);
    for (int sweep = 0; sweep < 20; ++sweep) {
        for (std::size_t i = 0; i < 3; ++i) {
            Eigen::Index best;
            conditional_distribution(m, d, i).maxCoeff(&best);
            d(static_cast<Eigen::Index>(i)) = m.space.level(static_cast<std::size_t>(best));
        }
    }
    const double base = log_pseudo_likelihood(m, DataBatch(Matrix(d.transpose())));
    for (std::size_t i = 0; i < 3; ++i) {
        Eigen::Index worst;
        conditional_distribution(m, d, i).minCoeff(&worst);
        Vector flipped = d;
        flipped(static_cast<Eigen::Index>(i)) = m.space.level(static_cast<std::size_t>(worst));
        EXPECT_GT(base, log_pseudo_likelihood(m, DataBatch(Matrix(flipped.transpose()))));
    }
}

TEST(PseudoLikelihood, MatchesBruteForceConditionals) {
    const OracleReport r = oracle_report(tiny_reference_model());
    EXPECT_EQ(r.states, 64u);
    EXPECT_LT(r.conditional, 1e-10);
    EXPECT_LT(r.pseudo_likelihood, 1e-10);
    EXPECT_LT(r.normalization, 1e-12);
}

TEST(PlGradient, NoExpertsGivesEmptyGradient) {
    RngStream rng(34);
    const PlModel m = empty_model(3, 4);
    const Matrix g = pl_gradient(m, random_lattice_batch(m.space, 5, 3, rng));
    EXPECT_EQ(g.rows(), 0);
    EXPECT_EQ(g.cols(), 3);
}

TEST(PlGradient, MatchesFiniteDifferencesOn100Instances) {
    RngStream rng(35);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.index(5), m = 1 + rng.index(4), a = 2 + rng.index(6);
        const PlModel model = random_model(n, m, a, rng);
        const DataBatch b = random_lattice_batch(model.space, 1 + rng.index(6), n, rng);
        const Matrix analytic = pl_gradient(model, b);
        const Matrix fd = central_difference(
            [&](const Matrix& w) {
                PlModel probe = model;
                probe.experts.weights = w;
                return log_pseudo_likelihood(probe, b);
            },
            model.experts.weights, 1e-5);
        worst = std::max(worst, relative_error(analytic, fd));
    }
    EXPECT_LT(worst, 1e-5);
}

TEST(PlGradient, AdditiveOverDuplicatedBatch) {
    RngStream rng(36);
    const PlModel m = random_model(4, 3, 5, rng);
    const DataBatch b = random_lattice_batch(m.space, 6, 4, rng);
    Matrix twice(12, 4);
    twice << b.values, b.values;
    const Matrix g1 = pl_gradient(m, b);
    const Matrix g2 = pl_gradient(m, DataBatch(twice));
    EXPECT_LT((g2 - 2.0 * g1).cwiseAbs().maxCoeff(), 1e-12 * g1.cwiseAbs().maxCoeff());
}

TEST(PlGradient, ScalesLinearlyInEachDimension) {
    const auto seconds = [](std::size_t n, std::size_t m, std::size_t a) {
        RngStream rng(37);
        const PlModel model = random_model(n, m, a, rng);
        const DataBatch b = random_lattice_batch(model.space, 120, n, rng);
        double best = 1e30;
        for (int rep = 0; rep < 9; ++rep) {
            const auto t0 = std::chrono::steady_clock::now();
            const Matrix g = pl_gradient(model, b);
            const auto t1 = std::chrono::steady_clock::now();
            EXPECT_TRUE(g.allFinite());
            best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
        }
        return best;
    };
    const std::size_t n = 32, m = 16, a = 16;
    const double base = seconds(n, m, a);
    const double ratios[] = {seconds(4 * n, m, a) / base, seconds(n, 4 * m, a) / base, seconds(n, m, 4 * a) / base};
    const char* names[] = {"n", "m", "a"};
    for (int k = 0; k < 3; ++k) {
        EXPECT_GE(ratios[k], 4.0 / 1.5) << "x4 in " << names[k];
        EXPECT_LE(ratios[k], 4.0 * 1.5) << "x4 in " << names[k];
    }
}

TEST(Gibbs, NoExpertsResamplesUniformly) {
    const PlModel m = empty_model(2, 4);
    RngStream rng(38);
    std::vector<int> counts(4, 0);
    Vector d = Vector::Zero(2);
    const int sweeps = 40000;
    for (int s = 0; s < sweeps; ++s) {
        d = gibbs_sweep(m, d, rng);
        ++counts[*m.space.index_of(d(0))];
    }
    for (int c : counts) EXPECT_NEAR(static_cast<double>(c) / sweeps, 0.25, 0.01);
}

TEST(Gibbs, DeterministicUnderFixedSeed) {
    const PlModel m = tiny_reference_model();
    RngStream a(39), b(39);
    Vector x = Vector::Zero(3), y = Vector::Zero(3);
    for (int s = 0; s < 100; ++s) {
        x = gibbs_sweep(m, x, a);
        y = gibbs_sweep(m, y, b);
        ASSERT_EQ(x, y);
    }
}

TEST(Gibbs, ChainApproachesEnumeratedJoint) {
    const PlModel m = tiny_reference_model();
    const JointTable table = brute_force_joint(m);
    for (ScanOrder order : {ScanOrder::sequential, ScanOrder::random}) {
        RngStream rng(40);
        Vector d = Vector::Zero(3);
        for (int s = 0; s < 1000; ++s) d = gibbs_sweep(m, d, rng, order);
        Vector freq = Vector::Zero(static_cast<Eigen::Index>(table.states()));
        const int sweeps = 50000;
        for (int s = 0; s < sweeps; ++s) {
            d = gibbs_sweep(m, d, rng, order);
            freq(static_cast<Eigen::Index>(state_index(m.space, d))) += 1.0 / sweeps;
        }
        EXPECT_LT(0.5 * (freq - table.probability).cwiseAbs().sum(), 0.05);
    }
}

TEST(BruteForce, NoExpertsIsUniformAndNormalized) {
    const JointTable t = brute_force_joint(empty_model(3, 4));
    EXPECT_EQ(t.states(), 64u);
    for (Eigen::Index s = 0; s < 64; ++s) EXPECT_DOUBLE_EQ(t.probability(s), 1.0 / 64);
    EXPECT_NEAR(t.log_partition, std::log(64.0), 1e-14);
}

TEST(BruteForce, TableSumsToOne) {
    RngStream rng(41);
    for (int trial = 0; trial < 10; ++trial) {
        EXPECT_NEAR(brute_force_joint(random_model(4, 3, 5, rng, 2.0)).probability.sum(), 1.0, 1e-12);
    }
}

TEST(BruteForce, CapacityGuard) {
    EXPECT_THROW(brute_force_joint(empty_model(6, 16)), CapacityError);
    EXPECT_NO_THROW(enumerated_state_count(4, 16));
    EXPECT_THROW(enumerated_state_count(5, 16), CapacityError);
}

TEST(BruteForce, StateIndexRoundTrip) {
    const QuantizedSpace s = QuantizedSpace::uniform(4);
    for (std::size_t k = 0; k < 64; ++k) EXPECT_EQ(state_index(s, state_vector(s, 3, k)), k);
    const Vector d = state_vector(s, 3, 1);  // site 0 is the least significant digit
    EXPECT_DOUBLE_EQ(d(0), 1.0 / 3);
    EXPECT_EQ(d(1), 0.0);
}

TEST(ExactLikelihood, MatchesIndependentOracle) {
    const ExactLikelihood r = exact_log_likelihood(fixture_model(), fixture_batch());
    EXPECT_NEAR(r.log_likelihood, -15.145785242506671, 1e-12);
    EXPECT_NEAR(brute_force_joint(fixture_model()).log_partition, 0.39248044005188609, 1e-13);
}

TEST(ExactLikelihood, GradientMatchesFiniteDifferences) {
    RngStream rng(42);
    double worst = 0.0;
    for (int trial = 0; trial < 30; ++trial) {
        const PlModel m = random_model(3, 2, 4, rng);
        const DataBatch b = random_lattice_batch(m.space, 5, 3, rng);
        const Matrix analytic = exact_log_likelihood(m, b).gradient;
        const Matrix fd = central_difference(
            [&](const Matrix& w) {
                PlModel probe = m;
                probe.experts.weights = w;
                return exact_log_likelihood(probe, b).log_likelihood;
            },
            m.experts.weights, 1e-5);
        worst = std::max(worst, relative_error(analytic, fd));
    }
    EXPECT_LT(worst, 1e-6);
}

TEST(TrainPl, ZeroLearningRateLeavesModelUnchanged) {
    RngStream rng(43);
    const PlModel m = random_model(4, 2, 5, rng);
    const DataBatch b = random_lattice_batch(m.space, 10, 4, rng);
    PlTrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.iterations = 5;
    const PlTrainResult r = train_pl(m, b, cfg);
    EXPECT_EQ(r.model.experts.weights, m.experts.weights);
}

TEST(TrainPl, ObjectiveIncreasesAndNeverDecreases) {
    RngStream rng(44);
    const PlModel truth = tiny_reference_model(7);
    const DataBatch b = sample_from_table(truth, brute_force_joint(truth), 200, rng);
    for (PlOptimizer opt : {PlOptimizer::momentum, PlOptimizer::conjugate_gradient}) {
        PlTrainConfig cfg;
        cfg.iterations = 50;
        cfg.optimizer = opt;
        const PlModel init = init_pl_model(3, 2, 100.0, truth.space, RngStream(1));
        const PlTrainResult r = train_pl(init, b, cfg);
        ASSERT_EQ(r.objective.size(), 51u);
        for (std::size_t i = 1; i < r.objective.size(); ++i) ASSERT_GE(r.objective[i], r.objective[i - 1]);
        EXPECT_GT(r.objective.back(), r.objective.front());
    }
}

TEST(TrainPl, RecoversPlantedConstraint) {
    PlModel truth;
    truth.space = QuantizedSpace::uniform(8);
    truth.experts.stiffness = 100.0;
    truth.experts.weights.resize(1, 4);
    truth.experts.weights << 1.0, -1.0, 1.0, -1.0;
    RngStream rng(45);
    const DataBatch b = sample_from_table(truth, brute_force_joint(truth), 2000, rng);

    PlTrainConfig cfg;
    cfg.iterations = 200;
    const PlModel init = init_pl_model(4, 1, 100.0, truth.space, RngStream(2));
    const PlTrainResult r = train_pl(init, b, cfg);
    const Vector w = r.model.experts.weights.row(0).transpose();
    const Vector t = truth.experts.weights.row(0).transpose();
    EXPECT_GE(std::abs(w.dot(t)) / (w.norm() * t.norm()), 0.95) << "learned " << w.transpose();
}

TEST(TrainPl, InvalidConfigAndOffLatticeData) {
    PlTrainConfig cfg;
    cfg.levels = 1;
    EXPECT_THROW(validate(cfg), InvalidInput);
    cfg = PlTrainConfig{};
    cfg.momentum = -0.1;
    EXPECT_THROW(validate(cfg), InvalidInput);
    Matrix d(1, 3);
    d << 0.1, 0.2, 0.3;
    EXPECT_THROW(train_pl(fixture_model(), DataBatch(d), PlTrainConfig{}), InvalidInput);
}

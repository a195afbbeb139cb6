#include "wszsl/synth.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace wszsl;

TEST(Rng, KnownStreamIsPortable) {
    // mt19937_64 default-seeded 10000th output is fixed by the standard.
    std::mt19937_64 ref(5489u);
    ref.discard(9999);
    EXPECT_EQ(ref(), 9981545732273789042ull);
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) {
        EXPECT_EQ(a.uniform(), b.uniform());
        EXPECT_EQ(a.normal(), b.normal());
    }
    Rng u(9);
    for (int i = 0; i < 1000; ++i) {
        const double x = u.uniform();
        EXPECT_GE(x, 0.0);
        EXPECT_LT(x, 1.0);
        EXPECT_LT(u.below(7), 7u);
    }
}

TEST(Generate, IdenticalSeedsAreBitwiseIdentical) {
    SynthSpec spec;
    spec.seed = 11;
    const SynthProblem a = generate(spec), b = generate(spec);
    EXPECT_EQ(a.problem.x_test, b.problem.x_test);
    EXPECT_EQ(a.problem.x_web, b.problem.x_web);
    EXPECT_EQ(a.problem.a_web, b.problem.a_web);
    EXPECT_EQ(a.problem.d_aux, b.problem.d_aux);
    EXPECT_EQ(*a.problem.x_priv, *b.problem.x_priv);
    EXPECT_EQ(a.x_aux, b.x_aux);
    EXPECT_EQ(a.truth_test, b.truth_test);
    EXPECT_EQ(a.outlier_mask, b.outlier_mask);
    EXPECT_EQ(a.validation_web.x, b.validation_web.x);
    spec.seed = 12;
    EXPECT_NE(generate(spec).problem.x_web, a.problem.x_web);
}

TEST(Generate, ShapesAndCounts) {
    SynthSpec spec;
    const SynthProblem sp = generate(spec);
    EXPECT_EQ(sp.problem.x_test.rows(), spec.d);
    EXPECT_EQ(sp.problem.x_test.cols(), spec.c_test * spec.n_test_per_test);
    EXPECT_EQ(sp.problem.x_web.cols(), spec.c_test * spec.n_web_per_test);
    EXPECT_EQ(sp.problem.a_web.rows(), spec.m);
    EXPECT_EQ(sp.problem.x_priv->rows(), spec.d_tilde);
    EXPECT_EQ(sp.x_aux.cols(), spec.c_aux * spec.n_per_aux);
    EXPECT_EQ(sp.all_prototypes().size(), spec.c_aux + spec.c_test);
    EXPECT_EQ(sp.validation_categories, validation_category_count(spec.c_aux, spec.c_test));
    EXPECT_NO_THROW(sp.problem.validate());
}

TEST(Generate, OutlierCountMatchesNoiseRate) {
    for (double rate : {0.0, 0.1, 0.2, 0.37}) {
        SynthSpec spec;
        spec.noise_rate = rate;
        const SynthProblem sp = generate(spec);
        const auto n = static_cast<long>(sp.outlier_mask.size());
        const long count = std::count(sp.outlier_mask.begin(), sp.outlier_mask.end(), true);
        EXPECT_EQ(count, std::lround(rate * static_cast<double>(n)));
        // Outliers carry another category's prototype; clean instances carry their own.
        for (Index i = 0; i < sp.problem.a_web.cols(); ++i) {
            const int label = spec.c_aux + static_cast<int>(i) / spec.n_web_per_test;
            const bool own = sp.problem.a_web.col(i) == sp.all_prototypes().prototypes.col(label);
            EXPECT_EQ(own, !sp.outlier_mask[static_cast<std::size_t>(i)]);
        }
    }
}

TEST(Generate, PrototypesAreSeparated) {
    SynthSpec spec;
    spec.feature_noise_sigma = 3.0;
    const Matrix p = generate(spec).all_prototypes().prototypes;
    for (Index i = 0; i < p.cols(); ++i)
        for (Index j = i + 1; j < p.cols(); ++j) EXPECT_GE((p.col(i) - p.col(j)).norm(), 4.0 * 3.0 - 1e-12);
}

TEST(Generate, TrueCodesAreSeparable) {
    SynthSpec spec;
    spec.feature_noise_sigma = 0.0;
    spec.dictionary_drift = 0.0;
    spec.d = 32;
    const SynthProblem sp = generate(spec);
    const Matrix codes = brute_force_code_oracle(sp.problem.x_test, sp.d_test_true, 0.0);
    const auto pred = classify_nn(codes, sp.test_prototypes);
    EXPECT_EQ(evaluate(pred.labels, sp.truth_test, sp.test_prototypes.category_ids).accuracy, 1.0);
}

TEST(Generate, ShiftKnobSetsMeanOffset) {
    for (double shift : {0.5, 2.0}) {
        SynthSpec spec;
        spec.shift_magnitude = shift;
        spec.n_web_per_test = 100;
        spec.n_test_per_test = 100;
        spec.seed = 3;
        const SynthProblem sp = generate(spec);
        ASSERT_GE(sp.problem.n_web(), 500);
        const Vector gap = sp.problem.x_web.rowwise().mean() - sp.problem.x_test.rowwise().mean();
        const double target = shift * std::sqrt(static_cast<double>(spec.d));
        EXPECT_NEAR(gap.norm(), target, 0.1 * target);
    }
}

TEST(Generate, InfeasibleSeparationIsAnError) {
    SynthSpec spec;
    spec.m = 1;
    spec.c_aux = 40;
    spec.c_test = 20;
    EXPECT_THROW(generate(spec), InvalidParameter);
}

TEST(Generate, InvalidSpecRejected) {
    SynthSpec spec;
    spec.noise_rate = 1.0;
    EXPECT_THROW(generate(spec), InvalidParameter);
    spec = SynthSpec{};
    spec.c_test = 0;
    EXPECT_THROW(generate(spec), InvalidParameter);
    spec = SynthSpec{};
    spec.pi_informativeness = 1.5;
    EXPECT_THROW(generate(spec), InvalidParameter);
}

TEST(Generate, ValidationCategoryRule) {
    EXPECT_EQ(validation_category_count(10, 5), 3);  // 10 * 5 / 15 = 3.33
    EXPECT_EQ(validation_category_count(150, 50), 38);  // 37.5 rounds away from zero
    EXPECT_EQ(validation_category_count(2, 100), 1);
    EXPECT_THROW(validation_category_count(1, 1), InvalidParameter);
}

TEST(GeneralizedSplit, MovesAuxiliaryInstancesToTest) {
    const SynthProblem base = generate(SynthSpec{});
    const SynthProblem g = make_generalized_split(base, 0.2);
    const int moved = 10 * 8;
    EXPECT_EQ(g.problem.x_test.cols(), base.problem.x_test.cols() + moved);
    EXPECT_EQ(g.x_aux.cols(), base.x_aux.cols() - moved);
    EXPECT_EQ(g.truth_test.size(), static_cast<std::size_t>(g.problem.x_test.cols()));
    EXPECT_EQ(g.problem.x_test.leftCols(base.problem.x_test.cols()), base.problem.x_test);
    EXPECT_EQ(g.problem.d_aux, train_auxiliary_dictionary(g.x_aux, g.a_aux));
    EXPECT_THROW(make_generalized_split(base, 0.0), InvalidParameter);
    EXPECT_THROW(make_generalized_split(base, 1.0), InvalidParameter);
}

TEST(CodeOracle, OrthonormalDictionaryGivesProjection) {
    std::mt19937_64 gen(1);
    const Eigen::HouseholderQR<Matrix> qr(oracle::random_matrix(gen, 7, 3));
    const Matrix d = qr.householderQ() * Matrix::Identity(7, 3);
    const Matrix x = oracle::random_matrix(gen, 7, 5);
    EXPECT_LE((brute_force_code_oracle(x, d, 0.0) - d.transpose() * x).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CodeOracle, HugeRidgeGivesZero) {
    std::mt19937_64 gen(2);
    const Matrix d = oracle::random_matrix(gen, 7, 3), x = oracle::random_matrix(gen, 7, 5);
    const Matrix a = brute_force_code_oracle(x, d, 1e8);
    for (Index j = 0; j < x.cols(); ++j) EXPECT_LE(a.col(j).norm(), 1e-6 * x.col(j).norm());
}

TEST(CodeOracle, AgreesWithSolverCodeStep) {
    // update_a with Z = T = 0 minimizes 0.5||X - DA||^2 + 0.5 mu ||A||^2.
    std::mt19937_64 gen(3);
    for (int trial = 0; trial < 5; ++trial) {
        Problem p;
        p.x_test = oracle::random_matrix(gen, 9, 6);
        SolverState s;
        s.d_test = oracle::random_matrix(gen, 9, 4);
        s.mu = 0.37;
        s.z_aux = Matrix::Zero(4, 6);
        s.t_mult = Matrix::Zero(4, 6);
        const Matrix closed = update_a(s, p);
        EXPECT_LE((brute_force_code_oracle(p.x_test, s.d_test, s.mu) - closed).cwiseAbs().maxCoeff(), 1e-7);
    }
}

TEST(CodeOracle, Errors) {
    EXPECT_THROW(brute_force_code_oracle(Matrix::Zero(3, 2), Matrix::Zero(4, 2), 0.0), DimensionError);
    EXPECT_THROW(brute_force_code_oracle(Matrix::Zero(4, 2), Matrix::Zero(4, 2), -1.0), InvalidParameter);
}

#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "sthawkes/hawkes_model.hpp"
#include "sthawkes/simulator.hpp"

using namespace sthawkes;

TEST(BinCounts, LayoutAndWindows) {
    BinCounts z(1, 1, 3, 2, 1.0);
    for (Index l = 0; l < 5; ++l) z.set_layer(0, 0, l, static_cast<double>(l + 1));
    EXPECT_EQ(z.bin(0, 0, 0), 3.0);
    EXPECT_EQ(z.lagged(0, 0, 0, 0), 2.0);  // one step back
    EXPECT_EQ(z.lagged(0, 0, 0, 1), 1.0);
    const Tensor3 w = z.window(2);
    EXPECT_EQ(w(0, 0, 0), 3.0);  // oldest first
    EXPECT_EQ(w(0, 0, 1), 4.0);
    EXPECT_THROW(z.window(3), DimensionError);
    EXPECT_THROW(z.set_bin(0, 0, 0, 1.5), InputError);
    EXPECT_THROW(z.set_bin(0, 0, 0, -1.0), InputError);
}

TEST(BinCounts, WindowsTileTheSeries) {
    std::mt19937_64 rng(1);
    const BinCounts z = oracle::random_counts(2, 3, 9, 3, 1.0, 2.0, rng);
    for (Index t = 0; t < z.K(); ++t) {
        const Tensor3 w = z.window(t);
        for (Index c = 0; c < z.p(); ++c) EXPECT_EQ(Eigen::MatrixXd(w.slice(c)), Eigen::MatrixXd(z.layers().slice(t + c)));
    }
    // last window plus the final bin ends the series
    EXPECT_EQ(Eigen::MatrixXd(z.window(z.K() - 1).slice(z.p() - 1)), Eigen::MatrixXd(z.layers().slice(z.num_layers() - 2)));
}

TEST(Intensity, NoExcitationAndScalarCase) {
    std::mt19937_64 rng(2);
    const BinCounts z = oracle::random_counts(2, 2, 5, 2, 1.0, 3.0, rng);
    HawkesParams th = HawkesParams::zeros(2, 2, 2);
    th.mu << 0.1, 0.2, 0.3, 0.4;
    const Tensor3 lam = intensity_all(th, z);
    for (Index t = 0; t < 5; ++t) EXPECT_EQ(Eigen::MatrixXd(lam.slice(t)), th.mu);

    BinCounts one(1, 1, 1, 1, 1.0);
    one.set_layer(0, 0, 0, 3.0);
    HawkesParams s = HawkesParams::zeros(1, 1, 1);
    s.mu(0, 0) = 0.5;
    s.G(0, 0, 0) = 0.2;
    EXPECT_NEAR(intensity(s, one, 0, 0, 0), 1.1, 1e-15);
    EXPECT_THROW(intensity(s, one, 0, 0, 1), DimensionError);
}

TEST(Intensity, BatchMatchesLoopAndEmbeddingForms) {
    std::mt19937_64 rng(3);
    const BinCounts z = oracle::random_counts(3, 3, 10, 2, 0.5, 1.5, rng);
    const HawkesParams th = oracle::random_params(3, 3, 2, rng);
    const Tensor3 lam = intensity_all(th, z);
    for (Index t = 0; t < z.K(); ++t)
        for (Index j = 0; j < 3; ++j)
            for (Index i = 0; i < 3; ++i) {
                const double ref = oracle::loop_intensity(th, z, i, j, t);
                EXPECT_NEAR(lam(i, j, t), ref, 1e-12);
                EXPECT_NEAR(intensity(th, z, i, j, t), ref, 1e-12);
                EXPECT_NEAR(th.mu(i, j) + inner(window_embed(z.window(t), i, j), th.G), ref, 1e-12);
                EXPECT_NEAR(design_vector(z, i, j, t).dot(stack_params(th)), ref, 1e-12);
            }
}

TEST(Intensity, ZeroHistoryAndLinearity) {
    std::mt19937_64 rng(4);
    const HawkesParams th = oracle::random_params(2, 3, 2, rng);
    const BinCounts empty(2, 3, 4, 2, 1.0);
    const Tensor3 lam0 = intensity_all(th, empty);
    for (Index t = 0; t < 4; ++t) EXPECT_EQ(Eigen::MatrixXd(lam0.slice(t)), th.mu);

    const BinCounts z = oracle::random_counts(2, 3, 6, 2, 1.0, 2.0, rng);
    const BinCounts z2(z.layers() * 2.0, z.p(), z.delta());
    const Tensor3 a = intensity_all(th, z), b = intensity_all(th, z2);
    for (Index t = 0; t < 6; ++t) {
        const Eigen::MatrixXd ea = Eigen::MatrixXd(a.slice(t)) - th.mu, eb = Eigen::MatrixXd(b.slice(t)) - th.mu;
        EXPECT_LT((eb - 2.0 * ea).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(WindowEmbed, ZeroAndDegenerateSpatial) {
    EXPECT_EQ(window_embed(Tensor3(2, 2, 3), 1, 0).frobenius_norm(), 0.0);
    const Tensor3 w({1, 1, 3}, {1.0, 2.0, 3.0});
    const Tensor3 e = window_embed(w, 0, 0);
    EXPECT_EQ(e(0, 0, 0), 3.0);  // G's lag 0 meets the newest bin
    EXPECT_EQ(e(0, 0, 2), 1.0);
    EXPECT_THROW(window_embed(w, 1, 0), DimensionError);
}

TEST(Nll, OneBinValues) {
    BinCounts z(1, 1, 1, 1, 1.0);
    HawkesParams th = HawkesParams::zeros(1, 1, 1);
    th.mu(0, 0) = 1.0;
    EXPECT_DOUBLE_EQ(neg_log_likelihood(th, z), 1.0);
    z.set_bin(0, 0, 0, 2.0);
    EXPECT_DOUBLE_EQ(neg_log_likelihood(th, z), 1.0);
}

TEST(Nll, MatchesLoopOracleAndIsConvex) {
    std::mt19937_64 rng(5);
    const BinCounts z = oracle::random_counts(2, 2, 8, 2, 0.7, 1.0, rng);
    for (int rep = 0; rep < 5; ++rep) {
        const HawkesParams a = oracle::random_params(2, 2, 2, rng), b = oracle::random_params(2, 2, 2, rng);
        EXPECT_NEAR(neg_log_likelihood(a, z), oracle::loop_nll(a, z), 1e-10);
        const HawkesParams mid(0.5 * (a.mu + b.mu), (a.G + b.G) * 0.5);
        EXPECT_LE(neg_log_likelihood(mid, z), 0.5 * neg_log_likelihood(a, z) + 0.5 * neg_log_likelihood(b, z) + 1e-9);
    }
}

TEST(Nll, TrueParamsBeatNoExcitation) {
    int wins = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        SimConfig sc;
        sc.n1 = sc.n2 = 2;
        sc.p = 2;
        sc.K = 300;
        sc.seed = seed;
        const auto truth = generate_truth(sc).params;
        const BinCounts z = simulate(truth, sc);
        const HawkesParams no_g(truth.mu, Tensor3(truth.G.dims()));
        wins += neg_log_likelihood(truth, z) < neg_log_likelihood(no_g, z);
    }
    EXPECT_GT(wins, 10);
}

TEST(Gradient, EmptyDataGivesKDelta) {
    const BinCounts z(2, 2, 7, 2, 0.25);
    const HawkesParams th = HawkesParams(Eigen::MatrixXd::Constant(2, 2, 1.0), Tensor3(3, 3, 2, 0.1));
    const auto g = nll_gradient(th, z);
    EXPECT_TRUE(g.d_mu.isApprox(Eigen::MatrixXd::Constant(2, 2, 7 * 0.25)));
    EXPECT_EQ(g.d_G.frobenius_norm(), 0.0);  // no window overlaps any event
}

TEST(Gradient, MatchesFiniteDifferences) {
    std::mt19937_64 rng(6);
    for (int rep = 0; rep < 10; ++rep) {
        const BinCounts z = oracle::random_counts(2, 2, 8, 2, 1.0, 1.5, rng);
        const HawkesParams th = oracle::random_params(2, 2, 2, rng);
        const auto g = nll_gradient(th, z);
        Eigen::VectorXd got(parameter_count(2, 2, 2));
        got << Eigen::Map<const Eigen::VectorXd>(g.d_mu.data(), 4), g.d_G.flat();
        const Eigen::VectorXd ref = oracle::fd_gradient(th, z);
        EXPECT_LE((got - ref).norm(), 1e-5 * std::max(1.0, ref.norm()));
    }
}

TEST(DesignGram, EmptyDataIsIdentityBlock) {
    const BinCounts z(2, 2, 5, 2, 1.0);
    const Eigen::MatrixXd A = design_gram(z);
    Eigen::MatrixXd ref = Eigen::MatrixXd::Zero(A.rows(), A.cols());
    ref.topLeftCorner(4, 4).setIdentity();
    EXPECT_EQ(A, ref);
}

TEST(DesignGram, MatchesExplicitOuterProductsAndScales) {
    std::mt19937_64 rng(7);
    const BinCounts z = oracle::random_counts(2, 2, 6, 2, 1.0, 1.0, rng);
    const Eigen::MatrixXd A = design_gram(z);
    Eigen::MatrixXd ref = Eigen::MatrixXd::Zero(A.rows(), A.cols());
    for (Index t = 0; t < 6; ++t)
        for (Index j = 0; j < 2; ++j)
            for (Index i = 0; i < 2; ++i) {
                const Eigen::VectorXd c = design_vector(z, i, j, t);
                ref += c * c.transpose();
            }
    ref /= 6.0;
    EXPECT_LT((A - ref).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((A - A.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(A).eigenvalues()(0), -1e-10);

    const Eigen::MatrixXd A2 = design_gram(BinCounts(z.layers() * 2.0, 2, 1.0));
    const Index m = 4, d = A.rows() - 4;
    EXPECT_TRUE(A2.bottomRightCorner(d, d).isApprox(4.0 * A.bottomRightCorner(d, d)));
    EXPECT_TRUE(A2.topRightCorner(m, d).isApprox(2.0 * A.topRightCorner(m, d)));
    EXPECT_EQ(A2.topLeftCorner(m, m), A.topLeftCorner(m, m));
}

TEST(FeasibleSet, ValidationAndProjection) {
    FeasibleSet fs{0.0, 2.0, 0.0, 1.0, 1};
    EXPECT_THROW(fs.validate(), InputError);  // a1 + a2 = 0
    fs.a1 = 0.1;
    EXPECT_NO_THROW(fs.validate());
    HawkesParams th = HawkesParams::zeros(1, 1, 1);
    th.mu(0, 0) = -1.0;
    th.G(0, 0, 0) = 7.0;
    const auto pr = project_box(th, fs);
    EXPECT_EQ(pr.mu(0, 0), 0.1);
    EXPECT_EQ(pr.G(0, 0, 0), 1.0);
    EXPECT_EQ(project_box(pr, fs), pr);
}

TEST(FeasibleSet, TnnRadius) {
    EXPECT_EQ(tnn_radius({0.0, 1.0, 0.0, 1.0, 1}, 1, 1, 1), 1.0);
    EXPECT_EQ(tnn_radius({0.1, 1.0, 0.0, 0.0, 3}, 4, 4, 5), 0.0);
    EXPECT_NEAR(tnn_radius({0.0, 1.0, 0.0, 2.0, 3}, 2, 3, 4), 2.0 * std::sqrt(3.0 * 3 * 5 * 4), 1e-12);
}

// With the unnormalized transform, tnn(G) <= sqrt(gamma) ||bcirc(G)||_F = sqrt(gamma p) ||G||_F
// <= b2 sqrt(gamma p) sqrt((2n1-1)(2n2-1)p), i.e. sqrt(p) times tnn_radius.
TEST(FeasibleSet, RankOneKernelsRespectTheNuclearBound) {
    std::mt19937_64 rng(8);
    for (int rep = 0; rep < 20; ++rep) {
        SimConfig sc;
        sc.seed = 100 + static_cast<std::uint64_t>(rep);
        const Tensor3 G = gen_rank1_kernel(sc);
        FeasibleSet fs{0.1, 1.0, 0.0, G.flat().maxCoeff(), multi_rank(G).gamma};
        EXPECT_LE(tnn(G), std::sqrt(static_cast<double>(sc.p)) * tnn_radius(fs, sc.n1, sc.n2, sc.p) + 1e-9);
    }
}

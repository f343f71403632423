#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "sthawkes/estimator.hpp"
#include "sthawkes/simulator.hpp"

using namespace sthawkes;

namespace {

struct Problem {
    HawkesParams truth;
    BinCounts z;
    AdmmConfig cfg;
};

Problem small_problem(std::uint64_t seed, Index n = 2, Index p = 2, Index K = 400) {
    SimConfig sc;
    sc.n1 = sc.n2 = n;
    sc.p = p;
    sc.K = K;
    sc.seed = seed;
    Problem pr{generate_truth(sc).params, {}, {}};
    pr.z = simulate(pr.truth, sc);
    pr.cfg.fs = feasible_set_for(pr.truth);
    return pr;
}

// Random anchors and a random interior point for the MM subproblem.
MmAnchors random_anchors(const HawkesParams& like, std::mt19937_64& rng, bool tnn_block) {
    MmAnchors an;
    const auto d = like.G.dims();
    if (tnn_block) {
        an.R = oracle::random_tensor(d[0], d[1], d[2], rng, 0.0, 0.2);
        an.Y1 = oracle::random_tensor(d[0], d[1], d[2], rng, -0.1, 0.1);
    }
    an.Gaux = oracle::random_tensor(d[0], d[1], d[2], rng, 0.0, 0.2);
    an.Y2 = oracle::random_tensor(d[0], d[1], d[2], rng, -0.1, 0.1);
    an.m = Eigen::MatrixXd::Constant(like.n1(), like.n2(), 1.0) + 0.1 * Eigen::MatrixXd::Random(like.n1(), like.n2());
    an.Y3 = 0.1 * Eigen::MatrixXd::Random(like.n1(), like.n2());
    return an;
}

}  // namespace

TEST(Mm, SurrogateTouchesAndMajorizes) {
    std::mt19937_64 rng(1);
    for (int rep = 0; rep < 5; ++rep) {
        const BinCounts z = oracle::random_counts(2, 2, 12, 2, 0.5, 1.5, rng);
        const HawkesParams th = oracle::random_params(2, 2, 2, rng);
        for (bool tnn_block : {true, false}) {
            const MmAnchors an = random_anchors(th, rng, tnn_block);
            const double rho = 0.7;
            const double g = mm_subobjective(th, z, an, rho);
            EXPECT_NEAR(mm_surrogate(th, th, z, an, rho), g, 1e-9 * std::max(1.0, std::abs(g)));
            for (int k = 0; k < 5; ++k) {
                const HawkesParams other = oracle::random_params(2, 2, 2, rng);
                EXPECT_GE(mm_surrogate(other, th, z, an, rho), mm_subobjective(other, z, an, rho) - 1e-9);
            }
        }
    }
}

TEST(Mm, UpdateMinimizesSurrogateAndDescends) {
    std::mt19937_64 rng(2);
    for (int rep = 0; rep < 5; ++rep) {
        const BinCounts z = oracle::random_counts(2, 2, 12, 2, 0.5, 1.5, rng);
        const HawkesParams th = oracle::random_params(2, 2, 2, rng);
        const MmAnchors an = random_anchors(th, rng, true);
        const double rho = 0.4;
        const Tensor3 mass = excitation_mass(z);
        const HawkesParams next = mm_update(th, z, an, rho, mass);
        EXPECT_LE(mm_subobjective(next, z, an, rho), mm_subobjective(th, z, an, rho) + 1e-8);
        const double qmin = mm_surrogate(next, th, z, an, rho);
        std::uniform_real_distribution<double> u(-1e-3, 1e-3);
        for (int k = 0; k < 20; ++k) {
            HawkesParams pert = next;
            for (Index n = 0; n < pert.mu.size(); ++n) pert.mu.data()[n] = std::max(1e-9, pert.mu.data()[n] + u(rng));
            for (double& v : pert.G.values()) v = std::max(1e-9, v + u(rng));
            EXPECT_GE(mm_surrogate(pert, th, z, an, rho), qmin - 1e-10);
        }
    }
}

TEST(Mm, NoEventsGivesClosedFormBaseRate) {
    const BinCounts z(1, 1, 10, 1, 0.5);  // no events anywhere
    HawkesParams th = HawkesParams::zeros(1, 1, 1);
    th.mu(0, 0) = 1.0;
    th.G(0, 0, 0) = 0.3;
    MmAnchors an;
    an.Gaux = Tensor3(1, 1, 1);
    an.Y2 = Tensor3(1, 1, 1);
    const double rho = 2.0;
    for (double shift : {-20.0, 3.0}) {
        an.m = Eigen::MatrixXd::Constant(1, 1, 0.0);
        an.Y3 = Eigen::MatrixXd::Constant(1, 1, shift);
        const double B = 10 * 0.5 + rho * shift;
        const auto next = mm_update(th, z, an, rho, excitation_mass(z));
        EXPECT_NEAR(next.mu(0, 0), (-B + std::abs(B)) / (2.0 * rho), 1e-12);
        EXPECT_EQ(next.G(0, 0, 0), 0.0);
    }
}

TEST(Mm, SingleBinFixedPointMatchesGridSearch) {
    BinCounts z(1, 1, 1, 1, 1.0);
    z.set_bin(0, 0, 0, 1.0);
    MmAnchors an;
    an.Gaux = Tensor3(1, 1, 1);
    an.Y2 = Tensor3(1, 1, 1);
    an.m = Eigen::MatrixXd::Constant(1, 1, 2.0);
    an.Y3 = Eigen::MatrixXd::Constant(1, 1, -0.5);
    const double rho = 0.8;
    HawkesParams th = HawkesParams::zeros(1, 1, 1);
    th.mu(0, 0) = 0.3;
    const Tensor3 mass = excitation_mass(z);
    for (int q = 0; q < 500; ++q) th = mm_update(th, z, an, rho, mass);
    // mu -> mu - log(mu) + rho/2 (mu - 2.5)^2 on a fine grid
    double best = 0.0, best_val = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 400000; ++k) {
        const double mu = k * 1e-5;
        const double v = mu - std::log(mu) + 0.5 * rho * (mu - 2.5) * (mu - 2.5);
        if (v < best_val) best_val = v, best = mu;
    }
    EXPECT_NEAR(th.mu(0, 0), best, 1e-4);
}

TEST(Mm, PositiveRootGuardsDiscriminant) {
    EXPECT_NEAR(detail::positive_root(1.0, 0.0, 4.0), 2.0, 1e-15);
    EXPECT_NEAR(detail::positive_root(2.0, 3.0, 0.0), 0.0, 0.0);
    EXPECT_NEAR(detail::positive_root(2.0, -3.0, 0.0), 1.5, 1e-15);
    EXPECT_THROW(detail::positive_root(1.0, 1.0, -10.0), NumericalError);
}

TEST(Admm, UpdateRAndAux) {
    std::mt19937_64 rng(3);
    const Tensor3 G = oracle::random_tensor(3, 3, 2, rng), Y1 = oracle::random_tensor(3, 3, 2, rng);
    EXPECT_EQ(update_R(G, Y1, 0.5, 0.0), G + Y1);
    EXPECT_LT(update_R(G, G * -1.0, 0.5, 1.0).frobenius_norm(), 1e-15);
    EXPECT_LT(frobenius_distance(update_R(G, Y1, 0.5, 0.1), oracle::prox_dual_oracle(G + Y1, 0.2)), 1e-4);

    FeasibleSet fs{0.1, 1.0, 0.0, 0.5, 1};
    Eigen::MatrixXd mu(1, 2), Y3 = Eigen::MatrixXd::Zero(1, 2);
    mu << -1.0, 0.5;
    const Tensor3 Gs({1, 3, 1}, {0.2, 7.0, -2.0});
    const auto [Gaux, m] = update_aux(Gs, Tensor3(1, 3, 1), mu, Y3, fs);
    EXPECT_EQ(m(0, 0), 0.1);
    EXPECT_EQ(m(0, 1), 0.5);
    EXPECT_EQ(Gaux(0, 0, 0), 0.2);
    EXPECT_EQ(Gaux(0, 1, 0), 0.5);
    EXPECT_EQ(Gaux(0, 2, 0), 0.0);
}

TEST(Admm, DualUpdates) {
    std::mt19937_64 rng(4);
    Problem pr = small_problem(1);
    AdmmState s = initial_state(pr.z, pr.cfg);
    const AdmmState consensus = update_duals(s, 0.3);
    EXPECT_EQ(consensus.Y1, s.Y1);
    EXPECT_EQ(consensus.Y3, s.Y3);
    s.G = oracle::random_tensor(3, 3, 2, rng);
    s.mu = Eigen::MatrixXd::Random(2, 2);
    const AdmmState frozen = update_duals(s, 0.0);
    EXPECT_EQ(frozen.Y1, s.Y1);
    EXPECT_EQ(frozen.Y2, s.Y2);
    const double rho = 0.0065;
    const AdmmState once = update_duals(s, rho);
    EXPECT_LT(frobenius_distance(once.Y1, (s.G - s.R) * rho), 1e-15);
    EXPECT_LT(frobenius_distance(once.Y2, (s.G - s.Gaux) * rho), 1e-15);
    EXPECT_LT((once.Y3 - rho * (s.mu - s.m)).norm(), 1e-15);
    EXPECT_EQ(update_duals(s, 1.0, FitMode::MLE).Y1, s.Y1);
}

TEST(Admm, PenalizedObjective) {
    Problem pr = small_problem(2);
    AdmmConfig cfg = pr.cfg;
    AdmmState s = initial_state(pr.z, cfg, pr.truth);  // inside the box
    const double base = neg_log_likelihood(HawkesParams(s.mu, s.G), pr.z) + cfg.tau * tnn(s.R);
    EXPECT_NEAR(penalized_objective(s, pr.z, cfg), base, 1e-9 * std::abs(base));

    std::mt19937_64 rng(5);
    const Tensor3 d = oracle::random_tensor(3, 3, 2, rng, -0.01, 0.01);
    AdmmState gap = s;
    gap.R = s.R - d;
    const double expect = neg_log_likelihood(HawkesParams(s.mu, s.G), pr.z) + cfg.tau * tnn(gap.R) +
                          0.5 * cfg.rho * d.frobenius_norm() * d.frobenius_norm();
    EXPECT_NEAR(penalized_objective(gap, pr.z, cfg), expect, 1e-9 * std::abs(expect));

    AdmmState bad = s;
    bad.Gaux(0, 0, 0) = cfg.fs.b2 * 2.0;
    EXPECT_EQ(penalized_objective(bad, pr.z, cfg), std::numeric_limits<double>::infinity());
}

TEST(Fit, RecoversScalarBaseRate) {
    HawkesParams th = HawkesParams::zeros(1, 1, 1);
    th.mu(0, 0) = 0.8;
    th.G(0, 0, 0) = 0.4;
    const BinCounts z = simulate(th, 20000, 1.0, 77);
    AdmmConfig cfg;
    cfg.fs = {1e-3, 10.0, 0.0, 5.0, 1};
    const auto res = fit(z, cfg);
    EXPECT_NEAR(res.estimate.mu(0, 0), 0.8, 0.08);
    EXPECT_TRUE(cfg.fs.contains_box(res.estimate));
    EXPECT_EQ(res.report.objective_trace.size(), static_cast<std::size_t>(res.report.iterations));
    EXPECT_EQ(res.report.primal_residual_trace.size(), static_cast<std::size_t>(res.report.iterations));
}

TEST(Fit, LargeTauShrinksKernel) {
    Problem pr = small_problem(3, 2, 2, 300);
    AdmmConfig c0 = pr.cfg, c1 = pr.cfg;
    c0.tau = 0.0;
    c0.max_outer = c1.max_outer = 200;
    c1.tau = 1e6;
    EXPECT_LT(tnn(fit(pr.z, c1).estimate.G), tnn(fit(pr.z, c0).estimate.G));
}

TEST(Fit, InnerMmTracesNeverIncrease) {
    Problem pr = small_problem(4, 2, 2, 300);
    AdmmConfig cfg = pr.cfg;
    cfg.max_outer = 60;
    cfg.record_inner = true;
    for (FitMode mode : {FitMode::TNN, FitMode::MLE}) {
        cfg.mode = mode;
        const auto res = fit(pr.z, cfg);
        ASSERT_EQ(res.report.inner_traces.size(), static_cast<std::size_t>(res.report.iterations));
        for (const auto& tr : res.report.inner_traces)
            for (std::size_t q = 1; q < tr.size(); ++q) EXPECT_LE(tr[q], tr[q - 1] + 1e-8);
    }
}

TEST(Fit, ResumeReproducesTrace) {
    Problem pr = small_problem(5, 2, 2, 200);
    AdmmConfig cfg = pr.cfg;
    cfg.tol_primal = cfg.tol_dual = 1e-14;
    cfg.max_outer = 40;
    const auto full = fit(pr.z, cfg);
    cfg.max_outer = 15;
    const auto head = fit(pr.z, cfg);
    cfg.max_outer = 25;
    const auto tail = fit_from_state(pr.z, cfg, head.state);
    ASSERT_EQ(tail.report.iterations, 25);
    for (int k = 0; k < 25; ++k) EXPECT_EQ(tail.report.objective_trace[k], full.report.objective_trace[15 + k]);
    EXPECT_EQ(tail.estimate, full.estimate);
    EXPECT_EQ(tail.state.iter, 40);
}

TEST(Fit, ConvergedFitSatisfiesConsensus) {
    Problem pr = small_problem(6, 2, 2, 300);
    AdmmConfig cfg = pr.cfg;
    cfg.mode = FitMode::MLE;
    cfg.rho = 0.001;
    cfg.max_outer = 5000;
    const auto res = fit(pr.z, cfg);
    ASSERT_TRUE(res.report.converged);
    const auto& s = res.state;
    const double scale = 1.0 + s.G.frobenius_norm();
    EXPECT_LE(frobenius_distance(s.G, s.Gaux), cfg.tol_primal * scale);
    EXPECT_LE((s.mu - s.m).norm(), cfg.tol_primal * scale);
}

TEST(Fit, TnnWithZeroTauApproachesMle) {
    Problem pr = small_problem(7, 2, 2, 300);
    AdmmConfig cfg = pr.cfg;
    cfg.tau = 0.0;
    cfg.rho = 0.01;
    cfg.max_outer = 20000;
    cfg.tol_primal = cfg.tol_dual = 1e-7;
    const auto tnn_fit = fit(pr.z, cfg);
    const auto mle_fit = fit_mle(pr.z, cfg);
    EXPECT_LT(frobenius_distance(tnn_fit.estimate.G, mle_fit.estimate.G), 1e-2 * (1.0 + mle_fit.estimate.G.frobenius_norm()));
    EXPECT_LT((tnn_fit.estimate.mu - mle_fit.estimate.mu).norm(), 1e-2 * mle_fit.estimate.mu.norm());
}

TEST(Fit, StartAtStationaryPointStaysFlat) {
    Problem pr = small_problem(8, 2, 2, 300);
    AdmmConfig cfg = pr.cfg;
    cfg.tau = 0.0;
    cfg.mode = FitMode::MLE;
    cfg.rho = 0.01;
    cfg.max_outer = 20000;
    cfg.tol_primal = cfg.tol_dual = 1e-9;
    const auto first = fit(pr.z, cfg);
    cfg.max_outer = 50;
    const auto again = fit(pr.z, cfg, first.estimate);
    const auto& tr = again.report.objective_trace;
    for (std::size_t k = 2; k < tr.size(); ++k) EXPECT_LE(tr[k], tr[k - 1] + 1e-9 * std::abs(tr[k - 1]));
}

TEST(Fit, DeterministicAndValidated) {
    Problem pr = small_problem(9, 2, 2, 150);
    AdmmConfig cfg = pr.cfg;
    cfg.max_outer = 30;
    const auto a = fit(pr.z, cfg), b = fit(pr.z, cfg);
    EXPECT_EQ(a.estimate, b.estimate);
    EXPECT_EQ(a.report.objective_trace, b.report.objective_trace);
    cfg.rho = 0.0;
    EXPECT_THROW(fit(pr.z, cfg), InputError);
    EXPECT_THROW(parse_fit_mode("lasso"), InputError);
}

TEST(Tune, SingleGridAndDeterminism) {
    Problem pr = small_problem(10, 2, 2, 200);
    AdmmConfig cfg = pr.cfg;
    cfg.max_outer = 40;
    EXPECT_EQ(tune_tau(pr.z, cfg, {0.7}, 0.2).best_tau, 0.7);
    const auto a = tune_tau(pr.z, cfg, {0.1, 0.5, 2.0}, 0.25), b = tune_tau(pr.z, cfg, {0.1, 0.5, 2.0}, 0.25);
    EXPECT_EQ(a.scores, b.scores);
    EXPECT_EQ(a.best_tau, b.best_tau);
    EXPECT_THROW(tune_tau(pr.z, cfg, {}, 0.2), InputError);
    EXPECT_THROW(tune_tau(pr.z, cfg, {0.5}, 0.0), InputError);
}

TEST(Tune, HugeTauScoresWorse) {
    int wins = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Problem pr = small_problem(20 + seed, 3, 3, 800);
        AdmmConfig cfg = pr.cfg;
        const auto res = tune_tau(pr.z, cfg, {0.5, 1e6}, 0.2);
        wins += res.scores[1] > res.scores[0];
    }
    EXPECT_GE(wins, 3);
}

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "sthawkes/bin_counts.hpp"
#include "sthawkes/data_pipeline.hpp"
#include "sthawkes/errors.hpp"
#include "sthawkes/hawkes_model.hpp"
#include "sthawkes/tensor3.hpp"
#include "sthawkes/tensor_algebra.hpp"

// ADMM for
//
//   min F(mu, G) + tau ||R||_TNN   s.t.  m in [a1, b1], Gaux in [a2, b2],
//                                        mu = m, G = Gaux, G = R
//
// with scaled duals Y1 (G = R), Y2 (G = Gaux), Y3 (mu = m). The (mu, G) block
// is minimized by majorization-minimization with closed-form coordinate
// updates; R is a TNN proximal step; (Gaux, m) are box projections.

namespace sthawkes {

enum class FitMode { TNN, MLE };

inline std::string to_string(FitMode m) { return m == FitMode::TNN ? "tnn" : "mle"; }

inline FitMode parse_fit_mode(const std::string& s) {
    if (s == "tnn" || s == "TNN") return FitMode::TNN;
    if (s == "mle" || s == "MLE") return FitMode::MLE;
    throw InputError("unknown fit mode '" + s + "' (expected tnn or mle)");
}

struct AdmmConfig {
    double rho = 0.0065;
    double tau = 0.5;
    FeasibleSet fs;
    int max_outer = 500;
    int max_inner_mm = 30;
    double inner_rel_tol = 1e-6;  // early exit of the MM loop on relative sub-objective change
    double tol_primal = 1e-4;
    double tol_dual = 1e-4;
    FitMode mode = FitMode::TNN;
    // Multiplier on the dual ascent step Y += dual_step * residual. With the
    // scaled duals used here, 1 is the standard ADMM step; passing rho instead
    // reproduces the literal Y += rho * residual recursion.
    double dual_step = 1.0;
    bool record_inner = false;

    void validate() const {
        if (!(rho > 0.0)) throw InputError("admm.rho must be > 0");
        if (!(tau >= 0.0)) throw InputError("admm.tau must be >= 0");
        if (max_outer < 1) throw InputError("admm.max_outer must be >= 1");
        if (max_inner_mm < 1) throw InputError("admm.max_inner_mm must be >= 1");
        if (!(tol_primal > 0.0) || !(tol_dual > 0.0)) throw InputError("admm tolerances must be > 0");
        if (!(inner_rel_tol >= 0.0)) throw InputError("admm.inner_rel_tol must be >= 0");
        if (!(dual_step >= 0.0)) throw InputError("admm.dual_step must be >= 0");
        fs.validate();
    }
};

struct AdmmState {
    Eigen::MatrixXd mu, m, Y3;
    Tensor3 G, R, Gaux, Y1, Y2;
    int iter = 0;

    void validate(Index n1, Index n2, Index p) const {
        const Dims3 gd{2 * n1 - 1, 2 * n2 - 1, p};
        for (const Tensor3* t : {&G, &R, &Gaux, &Y1, &Y2})
            if (t->dims() != gd) throw DimensionError("AdmmState: tensor block has wrong shape");
        for (const Eigen::MatrixXd* x : {&mu, &m, &Y3})
            if (x->rows() != n1 || x->cols() != n2) throw DimensionError("AdmmState: matrix block has wrong shape");
    }
};

struct FitReport {
    std::vector<double> objective_trace;
    std::vector<double> primal_residual_trace;
    std::vector<double> dual_residual_trace;
    int iterations = 0;
    bool converged = false;
    double wall_time = 0.0;
    // Sub-objective after each MM step, one list per outer iteration (first
    // entry is the value before the first step). Filled when record_inner is set.
    std::vector<std::vector<double>> inner_traces;
    // Largest tnn(G) seen vs the radius implied by the feasible set; reported only.
    double final_tnn = 0.0;
};

/// Fixed terms of the MM subproblem for one outer iteration. In MLE mode R and
/// Y1 are absent.
struct MmAnchors {
    std::optional<Tensor3> R, Y1;
    Tensor3 Gaux, Y2;
    Eigen::MatrixXd m, Y3;

    bool has_tnn_block() const { return R.has_value(); }

    static MmAnchors from_state(const AdmmState& s, FitMode mode) {
        MmAnchors a;
        if (mode == FitMode::TNN) {
            a.R = s.R;
            a.Y1 = s.Y1;
        }
        a.Gaux = s.Gaux;
        a.Y2 = s.Y2;
        a.m = s.m;
        a.Y3 = s.Y3;
        return a;
    }
};

/// sum over all (target, source) pairs of the source count, per G entry:
/// the data-dependent part of d(sum delta lambda)/dG divided by delta.
inline Tensor3 excitation_mass(const BinCounts& z) {
    return excitation_adjoint(Tensor3(z.n1(), z.n2(), z.K(), 1.0), z);
}

namespace detail {

inline double sq(double x) { return x * x; }

inline double penalty_terms(const HawkesParams& th, const MmAnchors& an, double rho) {
    double q = 0.0;
    if (an.has_tnn_block()) q += (th.G.flat() - an.R->flat() + an.Y1->flat()).squaredNorm();
    q += (th.G.flat() - an.Gaux.flat() + an.Y2.flat()).squaredNorm();
    q += (th.mu - an.m + an.Y3).squaredNorm();
    return 0.5 * rho * q;
}

// Positive root of a x^2 + b x - s = 0 with a > 0, s >= 0, avoiding cancellation.
inline double positive_root(double a, double b, double s) {
    const double disc = b * b + 4.0 * a * s;
    if (!(disc >= 0.0)) throw NumericalError("MM update: negative discriminant");
    const double r = std::sqrt(disc);
    if (b > 0.0) return (s > 0.0) ? 2.0 * s / (b + r) : 0.0;
    return (-b + r) / (2.0 * a);
}

}  // namespace detail

/// The (mu, G) subproblem objective:
/// F + rho/2 ||G - R + Y1||^2 + rho/2 ||G - Gaux + Y2||^2 + rho/2 ||mu - m + Y3||^2.
inline double mm_subobjective(const HawkesParams& th, const BinCounts& z, const MmAnchors& an, double rho) {
    return neg_log_likelihood(th, z) + detail::penalty_terms(th, an, rho);
}

/// Majorizer Q(theta; theta_q) of mm_subobjective, evaluated term by term:
/// every positive count is split across the base rate and each (source, lag)
/// pair in proportion to their share of lambda at theta_q.
inline double mm_surrogate(const HawkesParams& th, const HawkesParams& th_q, const BinCounts& z, const MmAnchors& an,
                           double rho) {
    const Index n1 = z.n1(), n2 = z.n2(), p = z.p();
    const double delta = z.delta();
    const Tensor3 lam_q = intensity_all(th_q, z);
    const Tensor3 lam = intensity_all(th, z);
    double q = 0.0;
    for (Index t = 0; t < z.K(); ++t)
        for (Index j = 0; j < n2; ++j)
            for (Index i = 0; i < n1; ++i) {
                q += delta * lam(i, j, t);
                const double zt = z.bin(i, j, t);
                if (zt == 0.0) continue;
                const double lq = std::max(lam_q(i, j, t), kIntensityFloor);
                double inner = std::log(delta);
                const double p0 = th_q.mu(i, j) / lq;
                if (p0 > 0.0) inner += p0 * std::log(th.mu(i, j) / p0);
                for (Index c = 0; c < p; ++c)
                    for (Index jp = 0; jp < n2; ++jp)
                        for (Index ip = 0; ip < n1; ++ip) {
                            const double zs = z.lagged(ip, jp, t, c);
                            if (zs == 0.0) continue;
                            const Index a = i - ip + n1 - 1, b = j - jp + n2 - 1;
                            const double ps = th_q.G(a, b, c) * zs / lq;
                            if (ps > 0.0) inner += ps * std::log(th.G(a, b, c) * zs / ps);
                        }
                q -= zt * inner;
            }
    return q + detail::penalty_terms(th, an, rho);
}

namespace detail {

// mm_update with the intensity at `cur` already evaluated.
inline HawkesParams mm_step(const HawkesParams& cur, const Tensor3& lam, const BinCounts& z, const MmAnchors& an,
                            double rho, const Tensor3& mass) {
    const Index n1 = z.n1(), n2 = z.n2();
    const double delta = z.delta();
    Tensor3 ratio(n1, n2, z.K());
    Eigen::MatrixXd ratio_sum = Eigen::MatrixXd::Zero(n1, n2);
    for (Index t = 0; t < z.K(); ++t)
        for (Index j = 0; j < n2; ++j)
            for (Index i = 0; i < n1; ++i) {
                const double zt = z.bin(i, j, t);
                if (zt == 0.0) continue;
                const double r = zt / std::max(lam(i, j, t), kIntensityFloor);
                ratio(i, j, t) = r;
                ratio_sum(i, j) += r;
            }
    const Tensor3 ratio_adj = excitation_adjoint(ratio, z);

    HawkesParams next = cur;
    const double kdelta = static_cast<double>(z.K()) * delta;
    for (Index j = 0; j < n2; ++j)
        for (Index i = 0; i < n1; ++i) {
            const double s = cur.mu(i, j) * ratio_sum(i, j);
            const double b = kdelta + rho * (an.Y3(i, j) - an.m(i, j));
            next.mu(i, j) = positive_root(rho, b, s);
        }
    const bool tnn_block = an.has_tnn_block();
    const double quad = tnn_block ? 2.0 * rho : rho;
    for (Index n = 0; n < cur.G.size(); ++n) {
        const auto ns = static_cast<std::size_t>(n);
        const double s = cur.G.values()[ns] * ratio_adj.values()[ns];
        double u = delta * mass.values()[ns] + rho * (an.Y2.values()[ns] - an.Gaux.values()[ns]);
        if (tnn_block) u += rho * (an.Y1->values()[ns] - an.R->values()[ns]);
        next.G.values()[ns] = positive_root(quad, u, s);
    }
    return next;
}

}  // namespace detail

/// One MM step: minimizes the surrogate built at `cur` in closed form.
///
/// mu'(i, j) solves rho x^2 + B x + C = 0 with B = K delta + rho (Y3 - m),
/// C = -sum_t Z p0. G'(a, b, c) solves 2 rho x^2 + U x + V = 0 with
/// U = delta * mass + rho (Y1 - R + Y2 - Gaux), V = -sum Z p_s (rho x^2 and
/// U without the R terms in MLE mode). C, V <= 0, so both roots are real.
///
/// `mass` must be excitation_mass(z).
inline HawkesParams mm_update(const HawkesParams& cur, const BinCounts& z, const MmAnchors& an, double rho,
                              const Tensor3& mass) {
    return detail::mm_step(cur, intensity_all(cur, z), z, an, rho, mass);
}

/// R-step: prox of (tau / rho) ||.||_TNN at G + Y1.
inline Tensor3 update_R(const Tensor3& G, const Tensor3& Y1, double rho, double tau) {
    if (!(rho > 0.0)) throw std::invalid_argument("update_R: rho must be > 0");
    return prox_tnn(G + Y1, tau / rho);
}

/// Box projections of G + Y2 and mu + Y3.
inline std::pair<Tensor3, Eigen::MatrixXd> update_aux(const Tensor3& G, const Tensor3& Y2, const Eigen::MatrixXd& mu,
                                                       const Eigen::MatrixXd& Y3, const FeasibleSet& fs) {
    HawkesParams shifted;
    shifted.mu = mu + Y3;
    shifted.G = G + Y2;
    shifted = project_box(std::move(shifted), fs);
    return {std::move(shifted.G), std::move(shifted.mu)};
}

/// Y1 += step (G - R), Y2 += step (G - Gaux), Y3 += step (mu - m).
inline AdmmState update_duals(AdmmState s, double step, FitMode mode = FitMode::TNN) {
    if (mode == FitMode::TNN) s.Y1 += (s.G - s.R) * step;
    s.Y2 += (s.G - s.Gaux) * step;
    s.Y3 += step * (s.mu - s.m);
    return s;
}

/// Augmented Lagrangian at the given state; +infinity if m or Gaux leave the box.
inline double penalized_objective(const AdmmState& s, const BinCounts& z, const AdmmConfig& cfg) {
    const auto& fs = cfg.fs;
    HawkesParams aux;
    aux.mu = s.m;
    aux.G = s.Gaux;
    if (!fs.contains_box(aux)) return std::numeric_limits<double>::infinity();
    const double rho = cfg.rho;
    double v = neg_log_likelihood(HawkesParams(s.mu, s.G), z);
    if (cfg.mode == FitMode::TNN) {
        const Tensor3 dR = s.G - s.R;
        v += cfg.tau * tnn(s.R) + rho * inner(s.Y1, dR) + 0.5 * rho * detail::sq(dR.frobenius_norm());
    }
    const Tensor3 dA = s.G - s.Gaux;
    const Eigen::MatrixXd dm = s.mu - s.m;
    v += rho * inner(s.Y2, dA) + 0.5 * rho * detail::sq(dA.frobenius_norm());
    v += rho * (s.Y3.array() * dm.array()).sum() + 0.5 * rho * dm.squaredNorm();
    return v;
}

/// Box used when no bounds are configured: mu in [1e-6, 10 max_ij mean_t Z / delta],
/// G in [0, 1 / delta] (a stable process has delta * sum(G) < 1), full multi-rank.
inline FeasibleSet default_feasible_set(const BinCounts& z) {
    FeasibleSet fs;
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(z.n1(), z.n2());
    for (Index t = 0; t < z.K(); ++t) mean += z.layers().slice(z.p() + t);
    if (z.K() > 0) mean /= static_cast<double>(z.K());
    fs.a1 = 1e-6;
    fs.b1 = std::max(10.0 * mean.maxCoeff() / z.delta(), 1.0);
    fs.a2 = 0.0;
    fs.b2 = 1.0 / z.delta();
    fs.gamma = (2 * z.n1() - 1) * z.p();
    return fs;
}

/// mu0 = mean count / delta everywhere; G0 = 0.1 (a2 + b2) / 2 everywhere;
/// consensus copies equal, duals zero. An explicit start replaces mu0 and G0.
inline AdmmState initial_state(const BinCounts& z, const AdmmConfig& cfg, const std::optional<HawkesParams>& init = std::nullopt) {
    const Index n1 = z.n1(), n2 = z.n2(), p = z.p();
    AdmmState s;
    if (init) {
        init->require_compatible(z);
        s.mu = init->mu;
        s.G = init->G;
    } else {
        const double denom = static_cast<double>(std::max<Index>(z.K(), 1) * n1 * n2) * z.delta();
        const double mu0 = std::max(z.total_main() / denom, 1e-3);
        s.mu = Eigen::MatrixXd::Constant(n1, n2, mu0);
        s.G = Tensor3(2 * n1 - 1, 2 * n2 - 1, p, 0.1 * 0.5 * (cfg.fs.a2 + cfg.fs.b2));
    }
    s.R = s.G;
    s.Gaux = s.G;
    s.m = s.mu;
    s.Y1 = Tensor3(s.G.dims());
    s.Y2 = Tensor3(s.G.dims());
    s.Y3 = Eigen::MatrixXd::Zero(n1, n2);
    return s;
}

struct FitResult {
    HawkesParams estimate;  // the box-feasible copies (m, Gaux)
    FitReport report;
    AdmmState state;        // final iterate, resumable
};

namespace detail {

struct InnerResult {
    HawkesParams theta;
    double nll = 0.0;
};

inline InnerResult run_mm(HawkesParams theta, const BinCounts& z, const MmAnchors& an, const AdmmConfig& cfg,
                          const Tensor3& mass, std::vector<double>* trace) {
    Tensor3 lam = intensity_all(theta, z);
    double nll = neg_log_likelihood_from_intensity(lam, z);
    double g = nll + penalty_terms(theta, an, cfg.rho);
    if (trace) trace->push_back(g);
    for (int q = 0; q < cfg.max_inner_mm; ++q) {
        theta = mm_step(theta, lam, z, an, cfg.rho, mass);
        lam = intensity_all(theta, z);
        nll = neg_log_likelihood_from_intensity(lam, z);
        const double g_new = nll + penalty_terms(theta, an, cfg.rho);
        if (!std::isfinite(g_new)) throw NumericalError("MM sub-objective is not finite");
        if (trace) trace->push_back(g_new);
        const bool small = std::abs(g - g_new) <= cfg.inner_rel_tol * std::max(1.0, std::abs(g_new));
        g = g_new;
        if (small) break;
    }
    return {std::move(theta), nll};
}

}  // namespace detail

/// Runs ADMM from `start` until both residuals fall below tolerance or
/// max_outer further iterations have run.
///
/// primal = max(||G - R||, ||G - Gaux||, ||mu - m||) / (1 + ||G||)
/// dual   = rho * max(||dR||, ||dGaux||, ||dm||) / (1 + ||G||)
inline FitResult fit_from_state(const BinCounts& z, const AdmmConfig& cfg, AdmmState state) {
    cfg.validate();
    if (z.K() < 1) throw InputError("fit: no time bins");
    state.validate(z.n1(), z.n2(), z.p());
    const auto t0 = std::chrono::steady_clock::now();
    const bool tnn_mode = cfg.mode == FitMode::TNN;
    const Tensor3 mass = excitation_mass(z);
    FitReport rep;

    for (int it = 0; it < cfg.max_outer; ++it) {
        const MmAnchors an = MmAnchors::from_state(state, cfg.mode);
        std::vector<double>* trace = nullptr;
        if (cfg.record_inner) trace = &rep.inner_traces.emplace_back();
        auto inner_res = detail::run_mm(HawkesParams(state.mu, state.G), z, an, cfg, mass, trace);
        state.mu = std::move(inner_res.theta.mu);
        state.G = std::move(inner_res.theta.G);

        const Tensor3 R_prev = state.R, Gaux_prev = state.Gaux;
        const Eigen::MatrixXd m_prev = state.m;
        if (tnn_mode) state.R = update_R(state.G, state.Y1, cfg.rho, cfg.tau);
        std::tie(state.Gaux, state.m) = update_aux(state.G, state.Y2, state.mu, state.Y3, cfg.fs);
        state = update_duals(std::move(state), cfg.dual_step, cfg.mode);
        ++state.iter;

        const double scale = 1.0 + state.G.frobenius_norm();
        double primal = std::max(frobenius_distance(state.G, state.Gaux), (state.mu - state.m).norm());
        double dual = std::max(frobenius_distance(state.Gaux, Gaux_prev), (state.m - m_prev).norm());
        double objective = inner_res.nll;
        if (tnn_mode) {
            primal = std::max(primal, frobenius_distance(state.G, state.R));
            dual = std::max(dual, frobenius_distance(state.R, R_prev));
            objective += cfg.tau * tnn(state.R);
        }
        primal /= scale;
        dual *= cfg.rho / scale;
        if (!std::isfinite(objective)) {
            throw NumericalError("objective is not finite at iteration " + std::to_string(state.iter));
        }
        rep.objective_trace.push_back(objective);
        rep.primal_residual_trace.push_back(primal);
        rep.dual_residual_trace.push_back(dual);
        ++rep.iterations;
        if (primal <= cfg.tol_primal && dual <= cfg.tol_dual) {
            rep.converged = true;
            break;
        }
    }

    FitResult out;
    out.estimate = HawkesParams(state.m, state.Gaux);
    rep.final_tnn = tnn(state.Gaux);
    rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.report = std::move(rep);
    out.state = std::move(state);
    return out;
}

inline FitResult fit(const BinCounts& z, const AdmmConfig& cfg, const std::optional<HawkesParams>& init = std::nullopt) {
    cfg.validate();
    return fit_from_state(z, cfg, initial_state(z, cfg, init));
}

/// Same loop without the R block, Y1 or the TNN term.
inline FitResult fit_mle(const BinCounts& z, AdmmConfig cfg, const std::optional<HawkesParams>& init = std::nullopt) {
    cfg.mode = FitMode::MLE;
    return fit(z, cfg, init);
}

struct TuneResult {
    double best_tau = 0.0;
    std::vector<double> scores;  // held-out NLR per grid entry
};

/// Fits on the first (1 - holdout_fraction) of the bins for each tau in the
/// grid and scores the negative log-likelihood of the held-out tail. Exact
/// ties go to the larger tau.
inline TuneResult tune_tau(const BinCounts& z, const AdmmConfig& cfg, const std::vector<double>& grid,
                           double holdout_fraction) {
    if (grid.empty()) throw InputError("tune: empty tau grid");
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) throw InputError("tune: holdout fraction must lie in (0, 1)");
    const auto [train, test] = split_train_test(z, 1.0 - holdout_fraction);
    TuneResult out;
    double best = std::numeric_limits<double>::infinity();
    for (double tau : grid) {
        AdmmConfig c = cfg;
        c.mode = FitMode::TNN;
        c.tau = tau;
        const double score = nlr(fit(train, c).estimate, test);
        out.scores.push_back(score);
        if (out.scores.size() == 1 || score < best || (score == best && tau > out.best_tau)) {
            best = score;
            out.best_tau = tau;
        }
    }
    return out;
}

}  // namespace sthawkes

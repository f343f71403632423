#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

#include "sthawkes/bin_counts.hpp"
#include "sthawkes/errors.hpp"
#include "sthawkes/hawkes_model.hpp"
#include "sthawkes/tensor3.hpp"
#include "sthawkes/tensor_algebra.hpp"

// Poisson divergences, the design condition number and the data-driven error
// bounds for the penalized estimator.

namespace sthawkes {

/// D(p || q) = p log(p / q) - (p - q), with 0 log 0 = 0.
inline double kl_poisson(double p, double q) {
    if (!(q > 0.0)) throw InputError("kl_poisson: q must be > 0");
    if (!(p >= 0.0)) throw InputError("kl_poisson: p must be >= 0");
    if (p == 0.0) return q;
    return p * std::log(p / q) - (p - q);
}

/// H^2(p || q) = 2 - 2 exp(-(sqrt p - sqrt q)^2 / 2).
inline double hellinger_poisson(double p, double q) {
    if (!(p >= 0.0) || !(q >= 0.0)) throw InputError("hellinger_poisson: means must be >= 0");
    const double d = std::sqrt(p) - std::sqrt(q);
    return -2.0 * std::expm1(-0.5 * d * d);
}

/// Smallest eigenvalue of a symmetric PSD matrix, clamped at zero.
inline double condition_number_2(const Eigen::MatrixXd& A) {
    if (A.rows() != A.cols()) throw DimensionError("condition_number_2: matrix must be square");
    if (A.size() == 0) throw DimensionError("condition_number_2: empty matrix");
    const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
    if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
        throw InputError("condition_number_2: matrix is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericalError("condition_number_2: eigensolver failed");
    return std::max(0.0, es.eigenvalues()(0));
}

/// ||mu - mu'||_F^2 + ||G - G'||_F^2.
inline double sq_error(const HawkesParams& a, const HawkesParams& b) {
    if (a.mu.rows() != b.mu.rows() || a.mu.cols() != b.mu.cols() || a.G.dims() != b.G.dims()) {
        throw DimensionError("sq_error: parameter shapes differ");
    }
    const double dg = frobenius_distance(a.G, b.G);
    return (a.mu - b.mu).squaredNorm() + dg * dg;
}

enum class WindowNorm {
    Raw,       // tensor spectral norm of the n1 x n2 x p window itself
    Embedded,  // max over (i, j) of the spectral norm of W^{ij}(window)
};

/// max over main bins of the spectral norm of the preceding window.
inline double max_window_spectral_norm(const BinCounts& z, WindowNorm kind = WindowNorm::Raw) {
    double best = 0.0;
    for (Index t = 0; t < z.K(); ++t) {
        const Tensor3 w = z.window(t);
        if (w.flat().isZero(0.0)) continue;
        if (kind == WindowNorm::Raw) {
            best = std::max(best, spectral_norm(w));
        } else {
            for (Index j = 0; j < z.n2(); ++j)
                for (Index i = 0; i < z.n1(); ++i) best = std::max(best, spectral_norm(window_embed(w, i, j)));
        }
    }
    return best;
}

/// min over main bins of the entrywise l1 norm of the preceding window.
inline double min_window_l1(const BinCounts& z) {
    double best = std::numeric_limits<double>::infinity();
    for (Index t = 0; t < z.K(); ++t) {
        double s = 0.0;
        for (Index l = t; l < t + z.p(); ++l) s += z.layers().slice(l).sum();
        best = std::min(best, s);
    }
    return best;
}

struct BoundInputs {
    FeasibleSet fs;
    BinCounts Z;
    double alpha1 = 0.05;
    double alpha2 = 0.05;
    WindowNorm window_norm = WindowNorm::Raw;

    void validate() const {
        fs.validate();
        if (!(alpha1 > 0.0 && alpha1 < 1.0) || !(alpha2 > 0.0 && alpha2 < 1.0)) {
            throw InputError("bound: alpha1 and alpha2 must lie in (0, 1)");
        }
        if (!(alpha1 + alpha2 < 1.0)) throw InputError("bound: need alpha1 + alpha2 < 1");
        if (Z.K() < 1) throw InputError("bound: no time bins");
    }
};

struct BoundReport {
    double J_lower = 0.0, J_upper = 0.0, T = 0.0, delta2 = 0.0;
    double bound_value = 0.0;
    double confidence = 0.0;  // 1 - alpha1 - alpha2
    double max_window_spec = 0.0;
    double min_window_l1 = 0.0;
    double kl_bound = 0.0;  // per-bin averaged KL bound (same J's)
};

namespace detail {

// ln(2 n1 n2 K / alpha1) and ln(2 n1 n2 / alpha2), both positive.
struct BoundLogs {
    double l1, l2;
};

inline BoundLogs bound_logs(Index n1, Index n2, Index K, double alpha1, double alpha2) {
    const double nn = 2.0 * static_cast<double>(n1 * n2);
    return {std::log(nn * static_cast<double>(K) / alpha1), std::log(nn / alpha2)};
}

// K ln^2(x) L2 + D J K L1 L2 + K L1 L2 sqrt(ln x (ln x - 2 D J)), x = alpha1 / (2 n1 n2 K),
// L1 = -ln x. Both factors of the inner radicand are negative.
inline double bound_bracket(double K, const BoundLogs& lg, double delta_j) {
    const double lnx = -lg.l1;
    const double radicand = lnx * (lnx - 2.0 * delta_j);
    if (!(radicand >= 0.0)) throw NumericalError("bound: negative inner radicand");
    const double v = K * lnx * lnx * lg.l2 + delta_j * K * lg.l1 * lg.l2 + K * lg.l1 * lg.l2 * std::sqrt(radicand);
    if (!(v >= 0.0) || !std::isfinite(v)) throw NumericalError("bound: invalid bracket");
    return v;
}

// T / (1 - e^{-T}) with its limit 1 at T = 0.
inline double t_ratio(double T) { return T > 0.0 ? T / -std::expm1(-T) : 1.0; }

inline double feasible_scale(const FeasibleSet& fs, Index n1, Index n2, Index p) {
    return std::sqrt(static_cast<double>(fs.gamma * (2 * n1 - 1) * (2 * n2 - 1) * p));
}

// delta2 is treated as zero below this fraction of the largest eigenvalue.
inline constexpr double kSingularRelTol = 1e-12;

}  // namespace detail

/// Data-driven bound on sq_error between the truth and the penalized estimate,
/// holding with probability at least 1 - alpha1 - alpha2. Also fills the
/// companion per-bin KL bound.
inline BoundReport bound_theorem3(const BoundInputs& inp) {
    inp.validate();
    const BinCounts& z = inp.Z;
    const auto& fs = inp.fs;
    const Index n1 = z.n1(), n2 = z.n2(), p = z.p(), K = z.K();
    const double delta = z.delta();

    BoundReport r;
    r.confidence = 1.0 - inp.alpha1 - inp.alpha2;
    r.min_window_l1 = min_window_l1(z);
    r.max_window_spec = max_window_spectral_norm(z, inp.window_norm);
    r.J_lower = fs.a1 + fs.a2 * r.min_window_l1;
    r.J_upper = fs.b1 + fs.b2 * detail::feasible_scale(fs, n1, n2, p) * r.max_window_spec;
    if (!(r.J_lower > 0.0)) throw NumericalError("bound: degenerate lower intensity (J_lower = 0)");
    r.T = (r.J_upper - r.J_lower) * (r.J_upper - r.J_lower) / (8.0 * r.J_lower);

    const Eigen::MatrixXd A = design_gram(z);
    r.delta2 = condition_number_2(A);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Eigen::EigenvaluesOnly);
    const double top = es.eigenvalues().maxCoeff();
    if (!(r.delta2 > detail::kSingularRelTol * std::max(top, 1.0))) {
        throw NumericalError("bound: singular design (delta2 = 0)");
    }

    const double Kd = static_cast<double>(K);
    const double dj = delta * r.J_upper;
    const auto lg = detail::bound_logs(n1, n2, K, inp.alpha1, inp.alpha2);
    const double root = std::sqrt(detail::bound_bracket(Kd, lg, dj));
    const double nn = static_cast<double>(n1 * n2);
    // 8 Jbar T / (1 - e^-T) = (8 Jbar) * T / (1 - e^-T)
    r.bound_value = 8.0 * r.J_upper * detail::t_ratio(r.T) * nn * std::abs(std::log(dj)) / (Kd * delta * r.delta2) * root;
    r.kl_bound = 2.0 * std::abs(std::log(dj)) / (Kd * delta) * root;
    return r;
}

/// Bound on (1 / (n1 n2 K)) sum D(lambda_true || lambda_est).
inline double bound_corollary1(const BoundInputs& inp) {
    inp.validate();
    const BinCounts& z = inp.Z;
    const auto& fs = inp.fs;
    const double J_lower = fs.a1 + fs.a2 * min_window_l1(z);
    if (!(J_lower > 0.0)) throw NumericalError("bound: degenerate lower intensity (J_lower = 0)");
    const double J_upper =
        fs.b1 + fs.b2 * detail::feasible_scale(fs, z.n1(), z.n2(), z.p()) * max_window_spectral_norm(z, inp.window_norm);
    const double Kd = static_cast<double>(z.K());
    const double dj = z.delta() * J_upper;
    const auto lg = detail::bound_logs(z.n1(), z.n2(), z.K(), inp.alpha1, inp.alpha2);
    return 2.0 * std::abs(std::log(dj)) / (Kd * z.delta()) * std::sqrt(detail::bound_bracket(Kd, lg, dj));
}

/// Nonrandom version with J_upper <= c1 and delta2 >= c2 certified on the data.
/// Requires a1 > 0.
inline double bound_remark2(double c1, double c2, const BoundInputs& inp) {
    inp.validate();
    const BinCounts& z = inp.Z;
    const auto& fs = inp.fs;
    const Index n1 = z.n1(), n2 = z.n2(), K = z.K();
    const double delta = z.delta();
    if (!(fs.a1 > 0.0)) throw InputError("bound_remark2: requires a1 > 0");
    if (!(c2 > 0.0)) throw InputError("bound_remark2: c2 must be > 0");

    const double spec = max_window_spectral_norm(z, inp.window_norm);
    const double cap = (c1 - fs.b1) / (fs.b2 * detail::feasible_scale(fs, n1, n2, z.p()));
    // Relative slack so that c1 = the realized J_upper certifies itself.
    if (!(spec <= cap * (1.0 + 1e-12) + 1e-300) || c1 < fs.b1) {
        throw NumericalError("bound_remark2: constants not certified by data (c1 too small)");
    }
    if (!(c2 <= condition_number_2(design_gram(z)) * (1.0 + 1e-12))) {
        throw NumericalError("bound_remark2: constants not certified by data (c2 exceeds delta2)");
    }

    const double Kd = static_cast<double>(K);
    const auto lg = detail::bound_logs(n1, n2, K, inp.alpha1, inp.alpha2);
    const double nn = static_cast<double>(n1 * n2);
    const double gap2 = (c1 - fs.a1) * (c1 - fs.a1);
    const double first = c1 * nn / (Kd * delta * c2) * std::sqrt(0.5 * Kd * lg.l2);
    const double logmax = std::max(std::abs(std::log(delta * fs.b1)), std::abs(std::log(delta * c1)));
    const double second = gap2 * logmax / (fs.a1 * -std::expm1(-gap2 / (8.0 * fs.a1)));
    const double third = lg.l1 + std::sqrt(lg.l1 * (lg.l1 + 2.0 * delta * c1));
    return first * second * third;
}

}  // namespace sthawkes

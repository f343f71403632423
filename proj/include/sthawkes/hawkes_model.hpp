#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "sthawkes/bin_counts.hpp"
#include "sthawkes/errors.hpp"
#include "sthawkes/tensor3.hpp"
#include "sthawkes/tensor_algebra.hpp"

// Discrete spatio-temporal Hawkes model.
//
// For main bin t and cell (i, j) (all 0-based)
//
//   lambda(i, j, t) = mu(i, j) + sum_{c < p} sum_{i', j'} G(i - i' + n1 - 1, j - j' + n2 - 1, c) Z(i', j', t - c - 1)
//
// and Z(i, j, t) | history ~ Poisson(delta * lambda(i, j, t)).

namespace sthawkes {

/// Intensities are floored here before taking logs.
inline constexpr double kIntensityFloor = 1e-12;

struct HawkesParams {
    Eigen::MatrixXd mu;  // n1 x n2
    Tensor3 G;           // (2 n1 - 1) x (2 n2 - 1) x p

    HawkesParams() = default;
    HawkesParams(Eigen::MatrixXd mu_, Tensor3 G_) : mu(std::move(mu_)), G(std::move(G_)) { validate(); }

    static HawkesParams zeros(Index n1, Index n2, Index p) {
        return HawkesParams(Eigen::MatrixXd::Zero(n1, n2), Tensor3(2 * n1 - 1, 2 * n2 - 1, p));
    }

    Index n1() const { return mu.rows(); }
    Index n2() const { return mu.cols(); }
    Index p() const { return G.dim(2); }

    void validate() const {
        if (mu.rows() < 1 || mu.cols() < 1) throw DimensionError("HawkesParams: empty base intensity");
        if (G.dim(0) != 2 * mu.rows() - 1 || G.dim(1) != 2 * mu.cols() - 1 || G.dim(2) < 1) {
            throw DimensionError("HawkesParams: G must be (2n1-1) x (2n2-1) x p, got " + G.dims_string());
        }
    }

    void require_compatible(const BinCounts& z) const {
        validate();
        if (z.n1() != n1() || z.n2() != n2() || z.p() != p()) {
            throw DimensionError("HawkesParams and BinCounts disagree on n1, n2 or p");
        }
    }

    bool operator==(const HawkesParams& o) const { return mu == o.mu && G == o.G; }
};

struct FeasibleSet {
    double a1 = 0.0, b1 = 1.0;  // bounds on mu entries
    double a2 = 0.0, b2 = 1.0;  // bounds on G entries
    Index gamma = 1;            // multi-rank budget

    void validate() const {
        if (!(a1 >= 0.0 && a1 <= b1)) throw InputError("feasible set: need 0 <= a1 <= b1");
        if (!(a2 >= 0.0 && a2 <= b2)) throw InputError("feasible set: need 0 <= a2 <= b2");
        if (!(a1 + a2 > 0.0)) throw InputError("feasible set: need a1 + a2 > 0");
        if (gamma < 1) throw InputError("feasible set: gamma must be >= 1");
    }

    bool contains_box(const HawkesParams& th, double slack = 0.0) const {
        const bool mu_ok = (th.mu.array() >= a1 - slack).all() && (th.mu.array() <= b1 + slack).all();
        const auto g = th.G.flat().array();
        return mu_ok && (g >= a2 - slack).all() && (g <= b2 + slack).all();
    }
};

/// b2 * sqrt(gamma (2 n1 - 1)(2 n2 - 1) p): bound on tnn(G) for G with entries
/// in [a2, b2] and multi-rank sum gamma.
inline double tnn_radius(const FeasibleSet& fs, Index n1, Index n2, Index p) {
    return fs.b2 * std::sqrt(static_cast<double>(fs.gamma * (2 * n1 - 1) * (2 * n2 - 1) * p));
}

inline HawkesParams project_box(HawkesParams th, const FeasibleSet& fs) {
    th.mu = th.mu.cwiseMax(fs.a1).cwiseMin(fs.b1);
    for (double& v : th.G.values()) v = std::clamp(v, fs.a2, fs.b2);
    return th;
}

/// Single intensity by direct summation (main bin t, 0-based indices).
inline double intensity(const HawkesParams& th, const BinCounts& z, Index i, Index j, Index t) {
    th.require_compatible(z);
    const Index n1 = z.n1(), n2 = z.n2();
    if (i < 0 || i >= n1 || j < 0 || j >= n2 || t < 0 || t >= z.K()) throw DimensionError("intensity: index out of range");
    double lam = th.mu(i, j);
    for (Index c = 0; c < z.p(); ++c)
        for (Index jp = 0; jp < n2; ++jp)
            for (Index ip = 0; ip < n1; ++ip) lam += th.G(i - ip + n1 - 1, j - jp + n2 - 1, c) * z.lagged(ip, jp, t, c);
    return lam;
}

namespace detail {

// out(:, :, t) += sum over lagged sources of z * G-block; skips empty sources.
inline void add_excitation(const Tensor3& G, const BinCounts& z, Tensor3& out) {
    const Index n1 = z.n1(), n2 = z.n2(), p = z.p();
    for (Index t = 0; t < z.K(); ++t) {
        auto dst = out.slice(t);
        for (Index c = 0; c < p; ++c) {
            const auto src = z.layers().slice(z.lag_layer(t, c));
            const auto g = G.slice(c);
            for (Index jp = 0; jp < n2; ++jp)
                for (Index ip = 0; ip < n1; ++ip) {
                    const double v = src(ip, jp);
                    if (v != 0.0) dst.noalias() += v * g.block(n1 - 1 - ip, n2 - 1 - jp, n1, n2);
                }
        }
    }
}

}  // namespace detail

/// Adjoint of the excitation map: returns the G-shaped tensor
/// sum_{t,i,j} w(i, j, t) W^{ij}(window_t), i.e. every G entry collects the
/// weights of the (target, source) pairs it connects.
inline Tensor3 excitation_adjoint(const Tensor3& w, const BinCounts& z) {
    const Index n1 = z.n1(), n2 = z.n2(), p = z.p();
    if (w.dim(0) != n1 || w.dim(1) != n2 || w.dim(2) != z.K()) throw DimensionError("excitation_adjoint: weight shape");
    Tensor3 out(2 * n1 - 1, 2 * n2 - 1, p);
    for (Index t = 0; t < z.K(); ++t) {
        const auto wt = w.slice(t);
        for (Index c = 0; c < p; ++c) {
            const auto src = z.layers().slice(z.lag_layer(t, c));
            auto acc = out.slice(c);
            for (Index jp = 0; jp < n2; ++jp)
                for (Index ip = 0; ip < n1; ++ip) {
                    const double v = src(ip, jp);
                    if (v != 0.0) acc.block(n1 - 1 - ip, n2 - 1 - jp, n1, n2).noalias() += v * wt;
                }
        }
    }
    return out;
}

/// All intensities, n1 x n2 x K; the excitation part is a 3-D cross-correlation
/// of the counts with G.
inline Tensor3 intensity_all(const HawkesParams& th, const BinCounts& z) {
    th.require_compatible(z);
    Tensor3 lam(z.n1(), z.n2(), z.K());
    for (Index t = 0; t < z.K(); ++t) lam.slice(t) = th.mu;
    detail::add_excitation(th.G, z, lam);
    return lam;
}

/// W^{ij}: embeds an oldest-first n1 x n2 x p window so that
/// lambda(i, j, t) = mu(i, j) + <W^{ij}(window_t), G>.
inline Tensor3 window_embed(const Tensor3& win, Index i, Index j) {
    const Index n1 = win.dim(0), n2 = win.dim(1), p = win.dim(2);
    if (i < 0 || i >= n1 || j < 0 || j >= n2) throw DimensionError("window_embed: index out of range");
    Tensor3 out(2 * n1 - 1, 2 * n2 - 1, p);
    for (Index c = 0; c < p; ++c)
        for (Index b = j; b < j + n2; ++b)
            for (Index a = i; a < i + n1; ++a) out(a, b, c) = win(i - a + n1 - 1, j - b + n2 - 1, p - 1 - c);
    return out;
}

/// sum_t sum_{ij} [delta lambda - Z log(delta lambda)].
inline double neg_log_likelihood_from_intensity(const Tensor3& lam, const BinCounts& z) {
    const double delta = z.delta();
    double f = 0.0;
    for (Index t = 0; t < z.K(); ++t) {
        const auto l = lam.slice(t);
        for (Index j = 0; j < z.n2(); ++j)
            for (Index i = 0; i < z.n1(); ++i) {
                const double zv = z.bin(i, j, t);
                f += delta * l(i, j);
                if (zv != 0.0) f -= zv * std::log(delta * std::max(l(i, j), kIntensityFloor));
            }
    }
    if (!std::isfinite(f)) throw NumericalError("negative log-likelihood is not finite");
    return f;
}

inline double neg_log_likelihood(const HawkesParams& th, const BinCounts& z) {
    return neg_log_likelihood_from_intensity(intensity_all(th, z), z);
}

struct NllGradient {
    Eigen::MatrixXd d_mu;
    Tensor3 d_G;
};

inline NllGradient nll_gradient(const HawkesParams& th, const BinCounts& z) {
    const Tensor3 lam = intensity_all(th, z);
    const double delta = z.delta();
    Tensor3 w(z.n1(), z.n2(), z.K());
    for (Index t = 0; t < z.K(); ++t)
        for (Index j = 0; j < z.n2(); ++j)
            for (Index i = 0; i < z.n1(); ++i) w(i, j, t) = delta - z.bin(i, j, t) / std::max(lam(i, j, t), kIntensityFloor);
    NllGradient g;
    g.d_mu = Eigen::MatrixXd::Zero(z.n1(), z.n2());
    for (Index t = 0; t < z.K(); ++t) g.d_mu += w.slice(t);
    g.d_G = excitation_adjoint(w, z);
    for (double v : g.d_G.values())
        if (!std::isfinite(v)) throw NumericalError("gradient is not finite");
    return g;
}

/// Number of parameters d = n1 n2 + (2 n1 - 1)(2 n2 - 1) p.
inline Index parameter_count(Index n1, Index n2, Index p) { return n1 * n2 + (2 * n1 - 1) * (2 * n2 - 1) * p; }

/// [vec(mu); vec(G)]: mu column-major, then G in tensor storage order.
inline Eigen::VectorXd stack_params(const HawkesParams& th) {
    Eigen::VectorXd beta(parameter_count(th.n1(), th.n2(), th.p()));
    beta.head(th.mu.size()) = Eigen::Map<const Eigen::VectorXd>(th.mu.data(), th.mu.size());
    beta.tail(th.G.size()) = th.G.flat();
    return beta;
}

/// c_ij for the window preceding main bin t: [vec(E_ij); vec(W^{ij}(window_t))].
inline Eigen::VectorXd design_vector(const BinCounts& z, Index i, Index j, Index t) {
    const Index nmu = z.n1() * z.n2();
    Eigen::VectorXd c = Eigen::VectorXd::Zero(parameter_count(z.n1(), z.n2(), z.p()));
    c(i + z.n1() * j) = 1.0;
    c.tail(c.size() - nmu) = window_embed(z.window(t), i, j).flat();
    return c;
}

/// A[Z] = (1/K) sum_{t,i,j} c_ij c_ij^T. Accumulated sequentially over t, then
/// (j, i), touching only the nonzero entries of each c_ij.
inline Eigen::MatrixXd design_gram(const BinCounts& z) {
    const Index n1 = z.n1(), n2 = z.n2(), p = z.p();
    const Index g1 = 2 * n1 - 1, g2 = 2 * n2 - 1;
    const Index nmu = n1 * n2;
    const Index d = parameter_count(n1, n2, p);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d, d);
    if (z.K() == 0) return A;
    std::vector<std::pair<Index, double>> nz;
    for (Index t = 0; t < z.K(); ++t) {
        for (Index j = 0; j < n2; ++j)
            for (Index i = 0; i < n1; ++i) {
                nz.clear();
                nz.emplace_back(i + n1 * j, 1.0);
                for (Index c = 0; c < p; ++c)
                    for (Index jp = 0; jp < n2; ++jp)
                        for (Index ip = 0; ip < n1; ++ip) {
                            const double v = z.lagged(ip, jp, t, c);
                            if (v == 0.0) continue;
                            const Index a = i - ip + n1 - 1, b = j - jp + n2 - 1;
                            nz.emplace_back(nmu + a + g1 * (b + g2 * c), v);
                        }
                for (const auto& [r, vr] : nz)
                    for (const auto& [s, vs] : nz) A(r, s) += vr * vs;
            }
    }
    A /= static_cast<double>(z.K());
    return A;
}

}  // namespace sthawkes

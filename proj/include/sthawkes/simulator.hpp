#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>

#include "sthawkes/bin_counts.hpp"
#include "sthawkes/errors.hpp"
#include "sthawkes/hawkes_model.hpp"
#include "sthawkes/tensor3.hpp"
#include "sthawkes/tensor_algebra.hpp"

namespace sthawkes {

struct SimConfig {
    Index n1 = 4, n2 = 4, p = 5, K = 1000;
    // Bin volume. Only the products delta * mu and delta * G are pinned by the
    // rescaling, so delta sets how strongly tau and rho act relative to the
    // likelihood; 0.02 gives kernel errors of the magnitude seen in practice.
    double delta = 0.02;
    double alpha = 1.0;              // decay rate of the temporal envelope alpha * exp(-alpha k)
    double stability_target = 0.9;   // delta * sum(G) after rescaling
    double mean_bin_rate = 0.5;      // delta * mean(mu) after rescaling
    std::uint64_t seed = 1;

    void validate() const {
        if (n1 < 1) throw InputError("sim.n1 must be >= 1");
        if (n2 < 1) throw InputError("sim.n2 must be >= 1");
        if (p < 1) throw InputError("sim.p must be >= 1");
        if (K < 1) throw InputError("sim.K must be >= 1");
        if (!(delta > 0.0)) throw InputError("sim.delta must be > 0");
        if (!(alpha > 0.0)) throw InputError("sim.alpha must be > 0");
        if (!(stability_target > 0.0 && stability_target < 1.0)) throw InputError("sim.stability_target must be in (0, 1)");
        if (!(mean_bin_rate > 0.0)) throw InputError("sim.mean_bin_rate must be > 0");
    }
};

/// Independent generator per (seed, stream) pair.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
}

namespace rng_stream {
inline constexpr std::uint64_t kernel = 1;
inline constexpr std::uint64_t base = 2;
inline constexpr std::uint64_t history = 3;
inline constexpr std::uint64_t counts = 4;
}  // namespace rng_stream

/// G(a, b, c) = u1(a) u2(b) u3(c) * alpha exp(-alpha (c + 1)), u's iid U(0, 1).
inline Tensor3 gen_rank1_kernel(const SimConfig& cfg) {
    cfg.validate();
    auto rng = make_rng(cfg.seed, rng_stream::kernel);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const Index g1 = 2 * cfg.n1 - 1, g2 = 2 * cfg.n2 - 1;
    Eigen::VectorXd u1(g1), u2(g2), u3(cfg.p);
    for (Index a = 0; a < g1; ++a) u1(a) = unif(rng);
    for (Index b = 0; b < g2; ++b) u2(b) = unif(rng);
    for (Index c = 0; c < cfg.p; ++c) u3(c) = unif(rng);
    Tensor3 G(g1, g2, cfg.p);
    for (Index c = 0; c < cfg.p; ++c) {
        const double env = cfg.alpha * std::exp(-cfg.alpha * static_cast<double>(c + 1));
        G.slice(c) = (u3(c) * env) * (u1 * u2.transpose());
    }
    return G;
}

inline Eigen::MatrixXd gen_base_intensity(const SimConfig& cfg) {
    cfg.validate();
    auto rng = make_rng(cfg.seed, rng_stream::base);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Eigen::MatrixXd mu(cfg.n1, cfg.n2);
    for (Index j = 0; j < cfg.n2; ++j)
        for (Index i = 0; i < cfg.n1; ++i) mu(i, j) = unif(rng);
    return mu;
}

struct RescaledParams {
    HawkesParams params;
    double mu_scale = 1.0;
    double g_scale = 1.0;
};

/// Scales G so that delta * sum(G) = stability_target (expected offspring per
/// event below one) and mu so that delta * mean(mu) = mean_bin_rate.
inline RescaledParams rescale_params(const Eigen::MatrixXd& mu, const Tensor3& G, const SimConfig& cfg) {
    const double gsum = G.flat().sum();
    const double mumean = mu.mean();
    if (!(gsum > 0.0) || !std::isfinite(gsum)) throw NumericalError("rescale: kernel has no positive mass");
    if (!(mumean > 0.0) || !std::isfinite(mumean)) throw NumericalError("rescale: base intensity has no positive mass");
    RescaledParams out;
    out.g_scale = cfg.stability_target / (cfg.delta * gsum);
    out.mu_scale = cfg.mean_bin_rate / (cfg.delta * mumean);
    out.params = HawkesParams(mu * out.mu_scale, G * out.g_scale);
    return out;
}

namespace detail {

// Poisson draw; a zero mean gives zero without touching the generator.
inline double draw_poisson(std::mt19937_64& rng, double mean) {
    if (!std::isfinite(mean) || mean < 0.0) throw NumericalError("non-finite or negative Poisson mean");
    if (mean == 0.0) return 0.0;
    std::poisson_distribution<long long> pois(mean);
    return static_cast<double>(pois(rng));
}

// Intensity of main bin t given the layers already filled in z.
inline Eigen::MatrixXd intensity_slice(const HawkesParams& th, const BinCounts& z, Index t) {
    const Index n1 = z.n1(), n2 = z.n2();
    Eigen::MatrixXd lam = th.mu;
    for (Index c = 0; c < z.p(); ++c) {
        const auto src = z.layers().slice(z.lag_layer(t, c));
        const auto g = th.G.slice(c);
        for (Index jp = 0; jp < n2; ++jp)
            for (Index ip = 0; ip < n1; ++ip) {
                const double v = src(ip, jp);
                if (v != 0.0) lam.noalias() += v * g.block(n1 - 1 - ip, n2 - 1 - jp, n1, n2);
            }
    }
    return lam;
}

}  // namespace detail

/// Draws K bins sequentially, Z(i, j, t) ~ Poisson(delta * lambda(i, j, t)) given
/// the realized history. Without `initial`, history bins are iid
/// Poisson(delta * mu). Fully determined by (params, K, delta, seed, initial).
inline BinCounts simulate(const HawkesParams& th, Index K, double delta, std::uint64_t seed,
                          const std::optional<Tensor3>& initial = std::nullopt) {
    th.validate();
    if ((th.mu.array() < 0.0).any() || (th.G.flat().array() < 0.0).any()) {
        throw NumericalError("simulate: parameters must be nonnegative");
    }
    const Index n1 = th.n1(), n2 = th.n2(), p = th.p();
    BinCounts z(n1, n2, K, p, delta);
    if (initial) {
        if (initial->dim(0) != n1 || initial->dim(1) != n2 || initial->dim(2) != p) {
            throw DimensionError("simulate: initial history must be n1 x n2 x p");
        }
        for (Index l = 0; l < p; ++l)
            for (Index j = 0; j < n2; ++j)
                for (Index i = 0; i < n1; ++i) z.set_layer(i, j, l, (*initial)(i, j, l));
    } else {
        auto hrng = make_rng(seed, rng_stream::history);
        for (Index l = 0; l < p; ++l)
            for (Index j = 0; j < n2; ++j)
                for (Index i = 0; i < n1; ++i) z.set_layer(i, j, l, detail::draw_poisson(hrng, delta * th.mu(i, j)));
    }
    auto rng = make_rng(seed, rng_stream::counts);
    for (Index t = 0; t < K; ++t) {
        const Eigen::MatrixXd lam = detail::intensity_slice(th, z, t);
        for (Index j = 0; j < n2; ++j)
            for (Index i = 0; i < n1; ++i) z.set_bin(i, j, t, detail::draw_poisson(rng, delta * lam(i, j)));
    }
    return z;
}

inline BinCounts simulate(const HawkesParams& th, const SimConfig& cfg, const std::optional<Tensor3>& initial = std::nullopt) {
    cfg.validate();
    return simulate(th, cfg.K, cfg.delta, cfg.seed, initial);
}

/// Box bounds matched to a generated truth: mu in [a1, max mu], G in
/// [0, max G], gamma = measured multi-rank sum. a1 must stay positive.
inline FeasibleSet feasible_set_for(const HawkesParams& th, double a1 = 1e-6) {
    FeasibleSet fs;
    fs.a1 = std::min(a1, th.mu.minCoeff());
    fs.b1 = th.mu.maxCoeff();
    fs.a2 = 0.0;
    fs.b2 = th.G.flat().maxCoeff();
    fs.gamma = std::max<Index>(1, multi_rank(th.G).gamma);
    fs.validate();
    return fs;
}

/// Ground truth as used by the synthetic experiments: rank-1 kernel and uniform
/// base rate, rescaled.
inline RescaledParams generate_truth(const SimConfig& cfg) {
    return rescale_params(gen_base_intensity(cfg), gen_rank1_kernel(cfg), cfg);
}

}  // namespace sthawkes

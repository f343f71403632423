#pragma once

#include <Eigen/Dense>

#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sthawkes/bin_counts.hpp"
#include "sthawkes/errors.hpp"
#include "sthawkes/hawkes_model.hpp"
#include "sthawkes/parallel.hpp"
#include "sthawkes/simulator.hpp"
#include "sthawkes/tensor3.hpp"

namespace sthawkes {

struct EventRecord {
    double x = 0.0, y = 0.0, t = 0.0;
    bool operator==(const EventRecord&) const = default;
};

struct EventLoadResult {
    std::vector<EventRecord> events;
    std::size_t malformed_rows = 0;
    std::vector<std::size_t> malformed_lines;  // 1-based line numbers
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_finite(const std::string& field) {
    const std::string f = trim(field);
    if (f.empty()) return std::nullopt;
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(f.c_str(), &end);
    if (end != f.c_str() + f.size() || errno == ERANGE || !std::isfinite(v)) return std::nullopt;
    return v;
}

}  // namespace detail

/// Reads a CSV with header `x,y,t`. Rows that do not hold exactly three finite
/// numbers are skipped and counted; blank lines are ignored. A headered file
/// with no data rows yields an empty list; data rows that are all malformed
/// are an error.
inline EventLoadResult load_events(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open events file '" + path + "'");
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string h = detail::trim(line);
        if (h.empty()) continue;
        std::string compact;
        for (char c : h)
            if (c != ' ' && c != '\t') compact += c;
        if (compact != "x,y,t") throw InputError("events file '" + path + "': expected header 'x,y,t'");
        have_header = true;
        break;
    }
    if (!have_header) throw InputError("events file '" + path + "': missing header 'x,y,t'");

    EventLoadResult out;
    std::size_t data_rows = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        ++data_rows;
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (;;) {
            const auto comma = line.find(',', start);
            fields.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        std::optional<double> x, y, t;
        if (fields.size() == 3) {
            x = detail::parse_finite(fields[0]);
            y = detail::parse_finite(fields[1]);
            t = detail::parse_finite(fields[2]);
        }
        if (x && y && t) {
            out.events.push_back({*x, *y, *t});
        } else {
            ++out.malformed_rows;
            out.malformed_lines.push_back(lineno);
        }
    }
    if (data_rows > 0 && out.events.empty()) {
        throw InputError("events file '" + path + "': no valid rows (" + std::to_string(data_rows) + " malformed)");
    }
    return out;
}

struct DiscretizationSpec {
    double x0 = 0.0, y0 = 0.0, t0 = 0.0;
    double dx = 1.0, dy = 1.0, dt = 1.0;
    Index n1 = 4, n2 = 4, K = 1, p = 1;

    void validate() const {
        for (double v : {x0, y0, t0})
            if (!std::isfinite(v)) throw InputError("discretization: origins must be finite");
        if (!(dx > 0.0) || !(dy > 0.0) || !(dt > 0.0) || !std::isfinite(dx) || !std::isfinite(dy) || !std::isfinite(dt)) {
            throw InputError("discretization: dx, dy, dt must be positive");
        }
        if (n1 < 1 || n2 < 1 || K < 1 || p < 1) throw InputError("discretization: n1, n2, K, p must be >= 1");
    }

    /// Bin volume dx * dy * dt.
    double volume() const { return dx * dy * dt; }
};

struct DiscretizeResult {
    BinCounts counts;
    std::size_t kept = 0;
    std::size_t dropped = 0;
};

namespace detail {

// Cell index of v on [lo, lo + n w]; the right edge belongs to the last cell.
inline std::optional<Index> spatial_cell(double v, double lo, double w, Index n) {
    const double hi = lo + static_cast<double>(n) * w;
    if (!(v >= lo) || !(v <= hi)) return std::nullopt;
    const auto c = static_cast<Index>(std::floor((v - lo) / w));
    return std::clamp<Index>(c, 0, n - 1);
}

}  // namespace detail

/// Bins events into an n1 x n2 x (p + K) count tensor. Time bin b covers
/// [t0 + b dt, t0 + (b + 1) dt) for b = -p..K-1 (b < 0 is history); space is
/// closed on the right so x = x0 + n1 dx lands in the last column. Everything
/// else is dropped and counted.
inline DiscretizeResult discretize(const std::vector<EventRecord>& events, const DiscretizationSpec& spec) {
    spec.validate();
    DiscretizeResult out{BinCounts(spec.n1, spec.n2, spec.K, spec.p, spec.volume()), 0, 0};
    const double t_lo = spec.t0 - static_cast<double>(spec.p) * spec.dt;
    const double t_hi = spec.t0 + static_cast<double>(spec.K) * spec.dt;
    for (const auto& e : events) {
        const auto ci = detail::spatial_cell(e.x, spec.x0, spec.dx, spec.n1);
        const auto cj = detail::spatial_cell(e.y, spec.y0, spec.dy, spec.n2);
        if (!ci || !cj || !(e.t >= t_lo) || !(e.t < t_hi)) {
            ++out.dropped;
            continue;
        }
        auto b = static_cast<Index>(std::floor((e.t - spec.t0) / spec.dt));
        b = std::clamp<Index>(b, -spec.p, spec.K - 1);
        out.counts.add_to_layer(*ci, *cj, b + spec.p, 1.0);
        ++out.kept;
    }
    return out;
}

/// train: first floor(fraction K) main bins with the original history;
/// test: the remaining bins, with the last p bins of train as history.
inline std::pair<BinCounts, BinCounts> split_train_test(const BinCounts& z, double fraction) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw InputError("split: fraction must lie in (0, 1)");
    const Index K = z.K(), p = z.p();
    const auto k_train = static_cast<Index>(std::floor(fraction * static_cast<double>(K)));
    if (k_train < p) throw InputError("split: training part shorter than the history depth");
    if (k_train >= K) throw InputError("split: empty test part");
    BinCounts train(z.slab(0, p + k_train), p, z.delta());
    BinCounts test(z.slab(k_train, p + K - k_train), p, z.delta());
    return {std::move(train), std::move(test)};
}

/// Inverse of split_train_test.
inline BinCounts merge_train_test(const BinCounts& train, const BinCounts& test) {
    if (train.n1() != test.n1() || train.n2() != test.n2() || train.p() != test.p() || train.delta() != test.delta()) {
        throw DimensionError("merge: train and test disagree on shape or delta");
    }
    const Index p = train.p();
    if (!(test.history() == train.slab(train.num_layers() - p, p))) {
        throw InputError("merge: test history is not the tail of train");
    }
    Tensor3 all(train.n1(), train.n2(), train.num_layers() + test.K());
    for (Index l = 0; l < train.num_layers(); ++l) all.slice(l) = train.layers().slice(l);
    for (Index t = 0; t < test.K(); ++t) all.slice(train.num_layers() + t) = test.layers().slice(p + t);
    return BinCounts(std::move(all), p, train.delta());
}

/// ||est - truth||_F / ||truth||_F.
inline double merr(const Eigen::MatrixXd& mu_true, const Eigen::MatrixXd& mu_est) {
    if (mu_true.rows() != mu_est.rows() || mu_true.cols() != mu_est.cols()) throw DimensionError("merr: shape mismatch");
    const double n = mu_true.norm();
    if (!(n > 0.0)) throw NumericalError("merr: true base intensity has zero norm");
    return (mu_est - mu_true).norm() / n;
}

inline double gerr(const Tensor3& G_true, const Tensor3& G_est) {
    const double n = G_true.frobenius_norm();
    if (!(n > 0.0)) throw NumericalError("gerr: true kernel has zero norm");
    return frobenius_distance(G_true, G_est) / n;
}

/// Seed of simulation `index` within a prediction run.
inline std::uint64_t sim_seed(std::uint64_t seed, std::uint64_t index) {
    auto rng = make_rng(seed, 0x9e3779b97f4a7c15ULL ^ index);
    return rng();
}

/// nsim forward simulations of `horizon` bins from the given n1 x n2 x p
/// history; element s is the main slab of simulation s.
inline std::vector<Tensor3> simulate_predictions(const HawkesParams& th, const Tensor3& history, Index horizon,
                                                 double delta, int nsim, std::uint64_t seed, int threads = 1) {
    if (nsim < 1) throw InputError("predict: nsim must be >= 1");
    if (horizon < 0) throw InputError("predict: horizon must be >= 0");
    std::vector<Tensor3> sims(static_cast<std::size_t>(nsim));
    if (horizon == 0) {
        for (auto& s : sims) s = Tensor3(th.n1(), th.n2(), 0);
        return sims;
    }
    parallel_for(nsim, threads, [&](std::ptrdiff_t s) {
        const auto z = simulate(th, horizon, delta, sim_seed(seed, static_cast<std::uint64_t>(s)), history);
        sims[static_cast<std::size_t>(s)] = z.main_slab();
    });
    return sims;
}

/// Mean predicted counts over nsim forward simulations, n1 x n2 x horizon.
inline Tensor3 predict_counts(const HawkesParams& th, const Tensor3& history, Index horizon, double delta, int nsim,
                              std::uint64_t seed, int threads = 1) {
    const auto sims = simulate_predictions(th, history, horizon, delta, nsim, seed, threads);
    Tensor3 mean(th.n1(), th.n2(), horizon);
    for (const auto& s : sims) mean += s;  // fixed order: thread-count independent
    return mean * (1.0 / static_cast<double>(nsim));
}

enum class FrqMode { Proportion, Count };

/// sum over cells r of |fhat_r - f_r|, where f_r is the share of all events
/// (summed over time) falling in cell r. Count mode compares raw per-cell
/// totals instead.
inline double frq(const Tensor3& predicted, const Tensor3& actual, FrqMode mode = FrqMode::Proportion) {
    if (predicted.dim(0) != actual.dim(0) || predicted.dim(1) != actual.dim(1)) {
        throw DimensionError("frq: spatial dimensions differ");
    }
    Eigen::MatrixXd fp = Eigen::MatrixXd::Zero(predicted.dim(0), predicted.dim(1));
    Eigen::MatrixXd fa = fp;
    for (Index k = 0; k < predicted.dim(2); ++k) fp += predicted.slice(k);
    for (Index k = 0; k < actual.dim(2); ++k) fa += actual.slice(k);
    if (mode == FrqMode::Count) return (fp - fa).cwiseAbs().sum();
    const double sp = fp.sum(), sa = fa.sum();
    if (!(sp > 0.0) || !(sa > 0.0)) throw NumericalError("frq: zero total events");
    return (fp / sp - fa / sa).cwiseAbs().sum();
}

inline double frq(const Tensor3& predicted, const BinCounts& actual, FrqMode mode = FrqMode::Proportion) {
    return frq(predicted, actual.main_slab(), mode);
}

/// Negative log-likelihood of the test bins, history taken from the split.
inline double nlr(const HawkesParams& th, const BinCounts& test) {
    th.require_compatible(test);
    return neg_log_likelihood(th, test);
}

}  // namespace sthawkes

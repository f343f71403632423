#pragma once

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "sthawkes/errors.hpp"
#include "sthawkes/tensor3.hpp"

namespace sthawkes {

/// Event counts on an n1 x n2 spatial grid over K time bins, preceded by a
/// p-bin history prefix.
///
/// Storage is one n1 x n2 x (K + p) tensor in time order. Layers 0..p-1 hold
/// the history bins (oldest first); layer p + t holds main bin t, t = 0..K-1.
/// Main-bin indices in this API are 0-based; lag c (0-based) refers to the bin
/// c + 1 steps before the current one.
class BinCounts {
 public:
    BinCounts() = default;

    BinCounts(Index n1, Index n2, Index K, Index p, double delta)
        : counts_(n1, n2, K + p), p_(p), delta_(delta) {
        validate_shape();
    }

    /// Takes a full (K + p)-layer count tensor; K is inferred.
    BinCounts(Tensor3 counts, Index p, double delta) : counts_(std::move(counts)), p_(p), delta_(delta) {
        validate_shape();
        for (double v : counts_.values()) {
            if (!(v >= 0.0) || v != std::floor(v)) throw InputError("bin counts must be nonnegative integers");
        }
    }

    Index n1() const { return counts_.dim(0); }
    Index n2() const { return counts_.dim(1); }
    Index p() const { return p_; }
    Index K() const { return counts_.dim(2) - p_; }
    Index num_layers() const { return counts_.dim(2); }
    double delta() const { return delta_; }

    const Tensor3& layers() const { return counts_; }

    double layer(Index i, Index j, Index l) const { return counts_(i, j, l); }

    double bin(Index i, Index j, Index t) const { return counts_(i, j, t + p_); }

    void set_bin(Index i, Index j, Index t, double v) { counts_.at(i, j, t + p_) = checked(v); }

    void set_layer(Index i, Index j, Index l, double v) { counts_.at(i, j, l) = checked(v); }

    void add_to_layer(Index i, Index j, Index l, double v) { counts_.at(i, j, l) += checked(v); }

    /// Layer holding the bin `lag + 1` steps before main bin t.
    Index lag_layer(Index t, Index lag) const { return t + p_ - 1 - lag; }

    double lagged(Index i, Index j, Index t, Index lag) const { return counts_(i, j, lag_layer(t, lag)); }

    /// The n1 x n2 x p slab of the p bins strictly before main bin t, oldest first.
    Tensor3 window(Index t) const {
        if (t < 0 || t >= K()) throw DimensionError("window: bin index out of range");
        Tensor3 out(n1(), n2(), p_);
        for (Index l = 0; l < p_; ++l) out.slice(l) = counts_.slice(t + l);
        return out;
    }

    /// Main bins only, n1 x n2 x K.
    Tensor3 main_slab() const { return slab(p_, K()); }

    /// History prefix only, n1 x n2 x p.
    Tensor3 history() const { return slab(0, p_); }

    /// Layers [first, first + count) as a standalone tensor.
    Tensor3 slab(Index first, Index count) const {
        Tensor3 out(n1(), n2(), count);
        for (Index l = 0; l < count; ++l) out.slice(l) = counts_.slice(first + l);
        return out;
    }

    double total_main() const {
        double s = 0.0;
        for (Index t = 0; t < K(); ++t) s += counts_.slice(t + p_).sum();
        return s;
    }

    bool operator==(const BinCounts& o) const = default;

 private:
    void validate_shape() const {
        if (counts_.dim(0) < 1 || counts_.dim(1) < 1) throw InputError("bin counts: n1 and n2 must be >= 1");
        if (p_ < 1) throw InputError("bin counts: p must be >= 1");
        if (counts_.dim(2) < p_) throw InputError("bin counts: fewer layers than the history depth");
        if (!(delta_ > 0.0) || !std::isfinite(delta_)) throw InputError("bin counts: delta must be positive");
    }

    static double checked(double v) {
        if (!(v >= 0.0) || v != std::floor(v)) throw InputError("bin counts must be nonnegative integers");
        return v;
    }

    Tensor3 counts_;
    Index p_ = 1;
    double delta_ = 1.0;
};

/// `bincounts n1 n2 K p delta`, then the K + p layers in time order with
/// values in tensor storage order.
inline void write_bincounts(std::ostream& os, const BinCounts& z) {
    os.precision(17);
    os << "bincounts " << z.n1() << ' ' << z.n2() << ' ' << z.K() << ' ' << z.p() << ' ' << z.delta() << '\n';
    for (Index l = 0; l < z.num_layers(); ++l) {
        const auto s = z.layers().slice(l);
        for (Index j = 0; j < z.n2(); ++j) {
            for (Index i = 0; i < z.n1(); ++i) os << (i ? " " : "") << static_cast<long long>(s(i, j));
            os << '\n';
        }
    }
}

inline BinCounts read_bincounts(std::istream& is) {
    std::string tag;
    Index n1 = 0, n2 = 0, K = 0, p = 0;
    double delta = 0.0;
    if (!(is >> tag) || tag != "bincounts") throw InputError("expected 'bincounts' header");
    if (!(is >> n1 >> n2 >> K >> p >> delta) || n1 < 1 || n2 < 1 || K < 0 || p < 1) {
        throw InputError("bad bincounts header");
    }
    std::vector<double> vals(static_cast<std::size_t>(n1 * n2 * (K + p)));
    for (auto& v : vals) {
        if (!(is >> v)) throw InputError("bincounts body ended early");
    }
    return BinCounts(Tensor3({n1, n2, K + p}, std::move(vals)), p, delta);
}

}  // namespace sthawkes

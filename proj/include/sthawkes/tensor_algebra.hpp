#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <complex>
#include <vector>

#include "sthawkes/errors.hpp"
#include "sthawkes/tensor3.hpp"

// Block-circulant tensor algebra: t-product, t-SVD, tensor nuclear norm.
//
// Fourier-domain quantities use the UNNORMALIZED DFT along mode 3, so the
// singular values of the Fourier slices coincide with the singular values of
// bcirc(T), and tnn(T) equals the matrix nuclear norm of bcirc(T).

namespace sthawkes {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// N3*N1 x N3*N2 block-circulant matrix; block (r, c) is frontal slice (r - c) mod N3.
inline MatrixXd bcirc(const Tensor3& t) {
    const Index n1 = t.dim(0), n2 = t.dim(1), n3 = t.dim(2);
    MatrixXd out(n3 * n1, n3 * n2);
    for (Index r = 0; r < n3; ++r) {
        for (Index c = 0; c < n3; ++c) {
            out.block(r * n1, c * n2, n1, n2) = t.slice(((r - c) % n3 + n3) % n3);
        }
    }
    return out;
}

/// Vertical stack of frontal slices, N3*N1 x N2.
inline MatrixXd unfold(const Tensor3& t) {
    const Index n1 = t.dim(0), n2 = t.dim(1), n3 = t.dim(2);
    MatrixXd out(n3 * n1, n2);
    for (Index k = 0; k < n3; ++k) out.middleRows(k * n1, n1) = t.slice(k);
    return out;
}

inline Tensor3 fold(const MatrixXd& m, Index n1) {
    if (n1 <= 0 || m.rows() % n1 != 0) throw DimensionError("fold: row count is not a multiple of N1");
    const Index n3 = m.rows() / n1;
    Tensor3 out(n1, m.cols(), n3);
    for (Index k = 0; k < n3; ++k) out.slice(k) = m.middleRows(k * n1, n1);
    return out;
}

namespace detail {

template <typename In, typename Fn>
void for_each_tube(const In& t, Fn&& fn) {
    for (Index j = 0; j < t.dim(1); ++j)
        for (Index i = 0; i < t.dim(0); ++i) fn(i, j);
}

// Fills slices above N3/2 from their conjugate partners.
inline void mirror_conjugate_slices(std::vector<MatrixXcd>& slices) {
    const Index n3 = static_cast<Index>(slices.size());
    for (Index k = n3 / 2 + 1; k < n3; ++k) slices[static_cast<std::size_t>(k)] = slices[static_cast<std::size_t>(n3 - k)].conjugate();
}

// Slices 0 and N3/2 (even N3) of a real tensor's transform are real.
inline bool self_conjugate(Index k, Index n3) { return k == 0 || 2 * k == n3; }

}  // namespace detail

/// Unnormalized DFT of every mode-3 fiber.
inline ComplexTensor3 fft_mode3(const Tensor3& t) {
    const Index n3 = t.dim(2);
    ComplexTensor3 out(t.dims());
    if (n3 == 0) return out;
    if (n3 == 1) {  // kissfft does not handle length 1
        for (Index n = 0; n < t.size(); ++n) out.values()[n] = t.values()[n];
        return out;
    }
    Eigen::FFT<double> fft;
    std::vector<double> fiber(static_cast<std::size_t>(n3));
    std::vector<std::complex<double>> spec;
    detail::for_each_tube(t, [&](Index i, Index j) {
        for (Index k = 0; k < n3; ++k) fiber[static_cast<std::size_t>(k)] = t(i, j, k);
        fft.fwd(spec, fiber);
        for (Index k = 0; k < n3; ++k) out(i, j, k) = spec[static_cast<std::size_t>(k)];
    });
    return out;
}

/// Inverse of fft_mode3 (includes the 1/N3 factor).
inline ComplexTensor3 ifft_mode3(const ComplexTensor3& t) {
    const Index n3 = t.dim(2);
    if (n3 == 1) return t;
    ComplexTensor3 out(t.dims());
    if (n3 == 0) return out;
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> fiber(static_cast<std::size_t>(n3));
    std::vector<std::complex<double>> back;
    detail::for_each_tube(t, [&](Index i, Index j) {
        for (Index k = 0; k < n3; ++k) fiber[static_cast<std::size_t>(k)] = t(i, j, k);
        fft.inv(back, fiber);
        for (Index k = 0; k < n3; ++k) out(i, j, k) = back[static_cast<std::size_t>(k)];
    });
    return out;
}

inline Tensor3 real_part(const ComplexTensor3& t) {
    Tensor3 out(t.dims());
    for (Index n = 0; n < t.size(); ++n) out.values()[static_cast<std::size_t>(n)] = t.values()[static_cast<std::size_t>(n)].real();
    return out;
}

inline double max_imag(const ComplexTensor3& t) {
    double m = 0.0;
    for (const auto& v : t.values()) m = std::max(m, std::abs(v.imag()));
    return m;
}

/// Frontal slices of fft_mode3(t) as standalone matrices.
inline std::vector<MatrixXcd> fourier_slices(const Tensor3& t) {
    const ComplexTensor3 f = fft_mode3(t);
    std::vector<MatrixXcd> out;
    out.reserve(static_cast<std::size_t>(t.dim(2)));
    for (Index k = 0; k < t.dim(2); ++k) out.emplace_back(f.slice(k));
    return out;
}

/// Rebuilds a real tensor from Fourier slices that satisfy conjugate symmetry.
inline Tensor3 from_fourier_slices(const std::vector<MatrixXcd>& slices, Index n1, Index n2) {
    ComplexTensor3 f(n1, n2, static_cast<Index>(slices.size()));
    for (std::size_t k = 0; k < slices.size(); ++k) f.slice(static_cast<Index>(k)) = slices[k];
    return real_part(ifft_mode3(f));
}

/// Tensor transpose: every frontal slice transposed, slices 2..N3 in reverse order.
inline Tensor3 t_transpose(const Tensor3& t) {
    const Index n3 = t.dim(2);
    Tensor3 out(t.dim(1), t.dim(0), n3);
    for (Index k = 0; k < n3; ++k) out.slice(k) = t.slice((n3 - k) % n3).transpose();
    return out;
}

/// t-product A * B = fold(bcirc(A) unfold(B)), evaluated slice-wise in the Fourier domain.
inline Tensor3 t_product(const Tensor3& a, const Tensor3& b) {
    if (a.dim(1) != b.dim(0) || a.dim(2) != b.dim(2)) {
        throw DimensionError("t_product: incompatible dimensions " + a.dims_string() + " * " + b.dims_string());
    }
    const Index n3 = a.dim(2);
    if (n3 == 0) return Tensor3(a.dim(0), b.dim(1), 0);
    const auto fa = fourier_slices(a);
    const auto fb = fourier_slices(b);
    std::vector<MatrixXcd> fc(static_cast<std::size_t>(n3));
    for (Index k = 0; k <= n3 / 2; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        if (detail::self_conjugate(k, n3)) {
            fc[ks] = (fa[ks].real() * fb[ks].real()).cast<std::complex<double>>();
        } else {
            fc[ks] = fa[ks] * fb[ks];
        }
    }
    detail::mirror_conjugate_slices(fc);
    return from_fourier_slices(fc, a.dim(0), b.dim(1));
}

/// Identity for the t-product: first frontal slice is I, the rest zero.
inline Tensor3 t_identity(Index n, Index n3) {
    Tensor3 out(n, n, n3);
    if (n3 > 0) out.slice(0).setIdentity();
    return out;
}

struct TSvdFactors {
    Tensor3 U;  // N1 x r x N3
    Tensor3 S;  // r x r x N3, f-diagonal
    Tensor3 V;  // N2 x r x N3
};

namespace detail {

struct SliceSvd {
    MatrixXcd u;
    VectorXd s;
    MatrixXcd v;
};

inline SliceSvd slice_svd(const MatrixXcd& m, bool real_slice, bool want_vectors) {
    SliceSvd out;
    if (real_slice) {
        const MatrixXd re = m.real();
        if (want_vectors) {
            Eigen::JacobiSVD<MatrixXd> svd(re, Eigen::ComputeThinU | Eigen::ComputeThinV);
            out.u = svd.matrixU().cast<std::complex<double>>();
            out.v = svd.matrixV().cast<std::complex<double>>();
            out.s = svd.singularValues();
        } else {
            out.s = Eigen::JacobiSVD<MatrixXd>(re).singularValues();
        }
    } else if (want_vectors) {
        Eigen::JacobiSVD<MatrixXcd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
        out.u = svd.matrixU();
        out.v = svd.matrixV();
        out.s = svd.singularValues();
    } else {
        out.s = Eigen::JacobiSVD<MatrixXcd>(m).singularValues();
    }
    return out;
}

}  // namespace detail

/// Singular values of every Fourier slice, each sorted nonincreasing.
inline std::vector<VectorXd> fourier_singular_values(const Tensor3& t) {
    const Index n3 = t.dim(2);
    const auto f = fourier_slices(t);
    std::vector<VectorXd> out(static_cast<std::size_t>(n3));
    for (Index k = 0; k <= n3 / 2 && k < n3; ++k) {
        out[static_cast<std::size_t>(k)] = detail::slice_svd(f[static_cast<std::size_t>(k)], detail::self_conjugate(k, n3), false).s;
    }
    for (Index k = n3 / 2 + 1; k < n3; ++k) out[static_cast<std::size_t>(k)] = out[static_cast<std::size_t>(n3 - k)];
    return out;
}

inline TSvdFactors t_svd(const Tensor3& t) {
    const Index n1 = t.dim(0), n2 = t.dim(1), n3 = t.dim(2);
    const Index r = std::min(n1, n2);
    const auto f = fourier_slices(t);
    std::vector<MatrixXcd> fu(static_cast<std::size_t>(n3)), fs(static_cast<std::size_t>(n3)), fv(static_cast<std::size_t>(n3));
    for (Index k = 0; k <= n3 / 2 && k < n3; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        auto svd = detail::slice_svd(f[ks], detail::self_conjugate(k, n3), true);
        fu[ks] = std::move(svd.u);
        fv[ks] = std::move(svd.v);
        fs[ks] = svd.s.cast<std::complex<double>>().asDiagonal();
    }
    detail::mirror_conjugate_slices(fu);
    detail::mirror_conjugate_slices(fs);
    detail::mirror_conjugate_slices(fv);
    // Conjugating the mirrored V keeps transpose(V) consistent: fft(transpose(V))_k = fft(V)_k^H.
    return {from_fourier_slices(fu, n1, r), from_fourier_slices(fs, r, r), from_fourier_slices(fv, n2, r)};
}

/// Tensor nuclear norm: sum of all Fourier-slice singular values = ||bcirc(T)||_*.
inline double tnn(const Tensor3& t) {
    double s = 0.0;
    for (const auto& sv : fourier_singular_values(t)) s += sv.sum();
    return s;
}

/// Tensor spectral norm: largest Fourier-slice singular value = ||bcirc(T)||.
inline double spectral_norm(const Tensor3& t) {
    double s = 0.0;
    for (const auto& sv : fourier_singular_values(t))
        if (sv.size() > 0) s = std::max(s, sv(0));
    return s;
}

struct MultiRank {
    std::vector<Index> ranks;  // one per Fourier slice
    Index gamma = 0;           // sum of ranks
};

inline constexpr double kDefaultRankTol = 1e-12;

/// Counts Fourier-slice singular values above tol * (largest singular value overall).
inline MultiRank multi_rank(const Tensor3& t, double tol = kDefaultRankTol) {
    if (!(tol > 0.0)) throw std::invalid_argument("multi_rank: tol must be positive");
    const auto svs = fourier_singular_values(t);
    double smax = 0.0;
    for (const auto& sv : svs)
        if (sv.size() > 0) smax = std::max(smax, sv(0));
    MultiRank out;
    out.ranks.assign(svs.size(), 0);
    if (smax == 0.0) return out;
    for (std::size_t k = 0; k < svs.size(); ++k) {
        out.ranks[k] = static_cast<Index>((svs[k].array() > tol * smax).count());
        out.gamma += out.ranks[k];
    }
    return out;
}

/// argmin_R kappa * tnn(R) + 0.5 * ||R - X||_F^2.
///
/// Since ||R - X||_F^2 = (1/N3) sum_k ||R~_k - X~_k||_F^2 under the unnormalized
/// transform, each Fourier slice is soft-thresholded at kappa * N3.
inline Tensor3 prox_tnn(const Tensor3& x, double kappa) {
    if (kappa < 0.0) throw std::invalid_argument("prox_tnn: kappa must be nonnegative");
    if (kappa == 0.0) return x;
    const Index n1 = x.dim(0), n2 = x.dim(1), n3 = x.dim(2);
    const double thresh = kappa * static_cast<double>(n3);
    const auto f = fourier_slices(x);
    std::vector<MatrixXcd> out(static_cast<std::size_t>(n3));
    for (Index k = 0; k <= n3 / 2 && k < n3; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        auto svd = detail::slice_svd(f[ks], detail::self_conjugate(k, n3), true);
        const VectorXd shrunk = (svd.s.array() - thresh).max(0.0).matrix();
        out[ks] = svd.u * shrunk.cast<std::complex<double>>().asDiagonal() * svd.v.adjoint();
    }
    detail::mirror_conjugate_slices(out);
    return from_fourier_slices(out, n1, n2);
}

}  // namespace sthawkes

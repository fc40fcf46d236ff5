#pragma once

// In-place complex DFT for any length: iterative radix-2 for powers of two,
// Bluestein's chirp-z for everything else.

#include <bit>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

namespace capev::fft {

using cplx = std::complex<double>;

namespace detail {

inline void radix2(std::vector<cplx>& a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double angle = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
        const std::size_t half = len / 2;
        for (std::size_t k = 0; k < half; ++k) {
            const cplx w = std::polar(1.0, angle * static_cast<double>(k));
            for (std::size_t i = 0; i < n; i += len) {
                const cplx u = a[i + k];
                const cplx v = a[i + k + half] * w;
                a[i + k] = u + v;
                a[i + k + half] = u - v;
            }
        }
    }
}

inline void bluestein(std::vector<cplx>& a, bool inverse) {
    const std::size_t n = a.size();
    const std::size_t m = std::bit_ceil(2 * n - 1);
    const double sign = inverse ? 1.0 : -1.0;
    std::vector<cplx> chirp(n);
    for (std::size_t k = 0; k < n; ++k) {
        // k^2 mod 2n keeps the angle argument small for long inputs.
        const std::size_t k2 = (k * k) % (2 * n);
        chirp[k] = std::polar(1.0, sign * std::numbers::pi * static_cast<double>(k2) /
                                       static_cast<double>(n));
    }
    std::vector<cplx> x(m), y(m);
    for (std::size_t k = 0; k < n; ++k) x[k] = a[k] * chirp[k];
    y[0] = std::conj(chirp[0]);
    for (std::size_t k = 1; k < n; ++k) y[k] = y[m - k] = std::conj(chirp[k]);
    radix2(x, false);
    radix2(y, false);
    for (std::size_t i = 0; i < m; ++i) x[i] *= y[i];
    radix2(x, true);
    const double scale = 1.0 / static_cast<double>(m);
    for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * scale * chirp[k];
}

} // namespace detail

/// Forward (e^{-i...}) or unnormalized inverse transform.
inline void transform(std::vector<cplx>& a, bool inverse = false) {
    const std::size_t n = a.size();
    if (n <= 1) return;
    if (std::has_single_bit(n))
        detail::radix2(a, inverse);
    else
        detail::bluestein(a, inverse);
}

/// Normalized inverse transform.
inline void inverse(std::vector<cplx>& a) {
    transform(a, true);
    const double scale = 1.0 / static_cast<double>(a.size());
    for (auto& v : a) v *= scale;
}

} // namespace capev::fft

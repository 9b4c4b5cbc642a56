#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include <Eigen/Core>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

namespace gms::nn::detail {

// Direct 3x3 "same" convolution over a zero-bordered copy of the input.
// Each channel is flattened to N planes of (H+2) x (W+2); an output at flat
// index q reads input q + (ky-1)*(W+2) + (kx-1), so the whole batch becomes
// one contiguous sweep. Border outputs are computed and thrown away.

inline constexpr int kTile = 32;

template <typename T, int B>
void conv3x3_tile(const T* x, std::size_t cstride, const T* w, int cin, const std::ptrdiff_t* off,
                  T* y, std::size_t ystride) {
    using Vec = Eigen::Array<T, kTile, 1>;
    Vec acc[B];
    for (int b = 0; b < B; ++b) acc[b].setZero();
    for (int ci = 0; ci < cin; ++ci) {
        const T* src = x + ci * cstride;
        const T* wc = w + ci * 9;
        for (int k = 0; k < 9; ++k) {
            const Vec v = Eigen::Map<const Vec>(src + off[k]);
            for (int b = 0; b < B; ++b) acc[b] += wc[b * cin * 9 + k] * v;
        }
    }
    for (int b = 0; b < B; ++b) Eigen::Map<Vec>(y + b * ystride) = acc[b];
}

#if defined(__AVX512F__)
template <>
inline void conv3x3_tile<float, 8>(const float* x, std::size_t cstride, const float* w, int cin,
                                   const std::ptrdiff_t* off, float* y, std::size_t ystride) {
    __m512 a0[8], a1[8];
    for (int b = 0; b < 8; ++b) a0[b] = a1[b] = _mm512_setzero_ps();
    for (int ci = 0; ci < cin; ++ci) {
        const float* src = x + ci * cstride;
        const float* wc = w + ci * 9;
        for (int k = 0; k < 9; ++k) {
            const __m512 v0 = _mm512_loadu_ps(src + off[k]);
            const __m512 v1 = _mm512_loadu_ps(src + off[k] + 16);
            for (int b = 0; b < 8; ++b) {
                const __m512 wb = _mm512_set1_ps(wc[b * cin * 9 + k]);
                a0[b] = _mm512_fmadd_ps(wb, v0, a0[b]);
                a1[b] = _mm512_fmadd_ps(wb, v1, a1[b]);
            }
        }
    }
    for (int b = 0; b < 8; ++b) {
        _mm512_storeu_ps(y + b * ystride, a0[b]);
        _mm512_storeu_ps(y + b * ystride + 16, a1[b]);
    }
}
#endif

/// x: {cin, n, h, w}, weight: {cout, cin, 3, 3}. Writes {cout, n, h, w} into y.
template <typename T>
void conv3x3_direct(const T* x, int cin, int n, int h, int w, const T* weight, const T* bias,
                    int cout, T* y) {
    const int pw = w + 2, ph = h + 2;
    const std::ptrdiff_t margin = pw + 1;
    const std::size_t span = static_cast<std::size_t>(n) * ph * pw;
    const std::size_t qlen = (span + kTile - 1) / kTile * kTile;
    const std::size_t cstride = qlen + 2 * static_cast<std::size_t>(margin);

    thread_local std::vector<T, Eigen::aligned_allocator<T>> xp, yp;
    xp.assign(cstride * cin, T(0));
    yp.resize(qlen * cout);
    for (int c = 0; c < cin; ++c) {
        for (int s = 0; s < n; ++s) {
            for (int r = 0; r < h; ++r) {
                const T* src = x + ((static_cast<std::size_t>(c) * n + s) * h + r) * w;
                T* dst = xp.data() + c * cstride + margin + (static_cast<std::size_t>(s) * ph + r + 1) * pw + 1;
                std::copy(src, src + w, dst);
            }
        }
    }

    std::ptrdiff_t off[9];
    for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) off[ky * 3 + kx] = (ky - 1) * pw + (kx - 1);
    }
    const T* base = xp.data() + margin;
    const std::size_t wstride = static_cast<std::size_t>(cin) * 9;
    // q-tiles outermost so one tile of every input channel stays in L1 while
    // all output channels consume it.
    for (std::size_t q = 0; q < qlen; q += kTile) {
        int co = 0;
        for (; co + 8 <= cout; co += 8) {
            conv3x3_tile<T, 8>(base + q, cstride, weight + co * wstride, cin, off, yp.data() + co * qlen + q, qlen);
        }
        for (; co < cout; ++co) {
            conv3x3_tile<T, 1>(base + q, cstride, weight + co * wstride, cin, off, yp.data() + co * qlen + q, qlen);
        }
    }

    for (int c = 0; c < cout; ++c) {
        for (int s = 0; s < n; ++s) {
            for (int r = 0; r < h; ++r) {
                const T* src = yp.data() + c * qlen + (static_cast<std::size_t>(s) * ph + r + 1) * pw + 1;
                T* dst = y + ((static_cast<std::size_t>(c) * n + s) * h + r) * w;
                for (int k = 0; k < w; ++k) dst[k] = src[k] + bias[c];
            }
        }
    }
}

}  // namespace gms::nn::detail

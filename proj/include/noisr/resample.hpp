#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "noisr/common.hpp"
#include "noisr/image.hpp"

namespace noisr {

struct SamplingFactor {
    int k;
    explicit SamplingFactor(int factor) : k(factor) {
        if (k != 2 && k != 4) throw InputError("SamplingFactor: factor must be 2 or 4");
    }
};

// Pure decimation, keeping rows/columns with index = 0 (mod k). No low-pass
// filtering; this is how the low-resolution inputs are produced.
inline ImageGrid decimate(const ImageGrid& n, SamplingFactor factor) {
    const int k = factor.k;
    if (n.height % k != 0 || n.width % k != 0)
        throw InputError("decimate: dimensions not divisible by factor");
    ImageGrid out(n.height / k, n.width / k);
    for (int r = 0; r < out.height; ++r)
        for (int c = 0; c < out.width; ++c) out(r, c) = n(k * r, k * c);
    return out;
}

// Keys cubic convolution kernel. Interpolating (u(0)=1, u(1)=u(2)=0) and a
// partition of unity over the four taps for any a.
inline double cubic_kernel(double s, double a = -0.5) {
    const double x = std::fabs(s);
    if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    return 0.0;
}

namespace detail {

// Sample-aligned geometry: HR pixel y lies at LR coordinate y/k, so kept-grid
// positions (y = k*r) are interpolation nodes and reproduce the input exactly.
struct PhaseTaps {
    std::array<double, 4> w;
};

inline PhaseTaps cc_phase(int phase, int k, double a) {
    const double f = static_cast<double>(phase) / k;
    PhaseTaps t;
    for (int j = -1; j <= 2; ++j) t.w[static_cast<std::size_t>(j + 1)] = cubic_kernel(f - j, a);
    return t;
}

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

} // namespace detail

// Cubic-convolution (CC) up-sampling by k with edge replication; output pixels
// on the kept grid equal the input exactly. Result clipped to [0,1].
inline ImageGrid upsample_cc(const ImageGrid& l, SamplingFactor factor, double a = -0.5) {
    const int k = factor.k;
    if (l.height < 4 || l.width < 4) throw InputError("upsample_cc: image too small (needs >= 4x4)");
    std::array<detail::PhaseTaps, 4> taps;
    for (int p = 0; p < k; ++p) taps[static_cast<std::size_t>(p)] = detail::cc_phase(p, k, a);

    ImageGrid out(k * l.height, k * l.width);
    for (int y = 0; y < out.height; ++y) {
        const int by = y / k;
        const auto& wy = taps[static_cast<std::size_t>(y % k)].w;
        int ry[4];
        for (int j = 0; j < 4; ++j) ry[j] = detail::clampi(by + j - 1, 0, l.height - 1);
        for (int x = 0; x < out.width; ++x) {
            const int bx = x / k;
            const auto& wx = taps[static_cast<std::size_t>(x % k)].w;
            double acc = 0.0;
            for (int j = 0; j < 4; ++j) {
                const double* row = &l.data[static_cast<std::size_t>(ry[j]) * l.width];
                double rowacc = 0.0;
                for (int i = 0; i < 4; ++i)
                    rowacc += wx[static_cast<std::size_t>(i)] *
                              row[detail::clampi(bx + i - 1, 0, l.width - 1)];
                acc += wy[static_cast<std::size_t>(j)] * rowacc;
            }
            out(y, x) = std::clamp(acc, 0.0, 1.0);
        }
    }
    return out;
}

// Bilinear up-sampling on the same sample-aligned grid convention.
inline ImageGrid upsample_bilinear(const ImageGrid& l, SamplingFactor factor) {
    const int k = factor.k;
    if (l.height < 2 || l.width < 2)
        throw InputError("upsample_bilinear: image too small (needs >= 2x2)");
    ImageGrid out(k * l.height, k * l.width);
    for (int y = 0; y < out.height; ++y) {
        const int by = y / k;
        const double fy = static_cast<double>(y % k) / k;
        const int r0 = by, r1 = detail::clampi(by + 1, 0, l.height - 1);
        for (int x = 0; x < out.width; ++x) {
            const int bx = x / k;
            const double fx = static_cast<double>(x % k) / k;
            const int c0 = bx, c1 = detail::clampi(bx + 1, 0, l.width - 1);
            out(y, x) = (1.0 - fy) * ((1.0 - fx) * l(r0, c0) + fx * l(r0, c1)) +
                        fy * ((1.0 - fx) * l(r1, c0) + fx * l(r1, c1));
        }
    }
    return out;
}

} // namespace noisr

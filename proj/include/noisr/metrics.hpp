#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "noisr/common.hpp"
#include "noisr/image.hpp"
#include "noisr/phase_congruency.hpp"

namespace noisr {

// Seven full-reference metrics between a candidate and a reference image,
// evaluated on the 8-bit (0..255) intensity scale so the numbers line up
// with published tables. PSNR uses +inf as the identical-images sentinel.
struct MetricReport {
    double mse = 0.0;
    double nrmse = 0.0;
    double ncc = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
    double fsim = 0.0;
    double uiq = 0.0;
};

struct SsimParams {
    double c1 = (0.01 * 255.0) * (0.01 * 255.0);
    double c2 = (0.03 * 255.0) * (0.03 * 255.0);
    double c3 = (0.03 * 255.0) * (0.03 * 255.0) / 2.0;
    int window_size = 11;
    double window_sigma = 1.5;

    void validate() const {
        if (!(c1 > 0.0) || !(c2 > 0.0) || !(c3 > 0.0))
            throw InputError("SsimParams: stabilizers must be positive");
        if (window_size < 1) throw InputError("SsimParams: window size must be >= 1");
    }
};

namespace detail {

inline std::vector<double> to255(const ImageGrid& img) {
    std::vector<double> out(img.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::clamp(img.data[i], 0.0, 1.0) * 255.0;
    return out;
}

inline std::vector<double> gaussian_window(int size, double sigma) {
    std::vector<double> w(static_cast<std::size_t>(size) * size);
    const double c = (size - 1) / 2.0;
    double sum = 0.0;
    for (int r = 0; r < size; ++r)
        for (int col = 0; col < size; ++col) {
            const double d2 = (r - c) * (r - c) + (col - c) * (col - c);
            const double v = std::exp(-d2 / (2.0 * sigma * sigma));
            w[static_cast<std::size_t>(r) * size + col] = v;
            sum += v;
        }
    for (double& v : w) v /= sum;
    return w;
}

// Scharr gradient magnitude with replicate borders, on the given field.
inline std::vector<double> scharr_magnitude(const std::vector<double>& img, int h, int w) {
    auto clampi = [](int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
    std::vector<double> out(img.size());
    static const double kx[3][3] = {{3, 0, -3}, {10, 0, -10}, {3, 0, -3}};
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double gx = 0.0, gy = 0.0;
            for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    const double v =
                        img[static_cast<std::size_t>(clampi(r + dr, h - 1)) * w + clampi(c + dc, w - 1)];
                    gx += kx[dr + 1][dc + 1] * v;
                    gy += kx[dc + 1][dr + 1] * v;
                }
            out[static_cast<std::size_t>(r) * w + c] = std::hypot(gx / 16.0, gy / 16.0);
        }
    }
    return out;
}

} // namespace detail

// MSE = (1/m) sum [N(i)-P(i)]^2, on the 255 scale.
inline double mse(const ImageGrid& n, const ImageGrid& p) {
    require_same_shape(n, p, "mse");
    const auto a = detail::to255(n), b = detail::to255(p);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return acc / static_cast<double>(a.size());
}

// NRMSE = sqrt(sum (N-P)^2 / sum N^2); +inf sentinel for an all-zero reference.
inline double nrmse(const ImageGrid& n, const ImageGrid& p) {
    require_same_shape(n, p, "nrmse");
    const auto a = detail::to255(n), b = detail::to255(p);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += a[i] * a[i];
    }
    if (den == 0.0)
        return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return std::sqrt(num / den);
}

// Pearson correlation of the two pixel populations.
inline double ncc(const ImageGrid& n, const ImageGrid& p) {
    require_same_shape(n, p, "ncc");
    const auto a = detail::to255(n), b = detail::to255(p);
    const double m = static_cast<double>(a.size());
    double mean_a = 0.0, mean_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        mean_a += a[i];
        mean_b += b[i];
    }
    mean_a /= m;
    mean_b /= m;
    double cov = 0.0, var_a = 0.0, var_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - mean_a, db = b[i] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    const double den = std::sqrt(var_a) * std::sqrt(var_b);
    if (den == 0.0) return a == b ? 1.0 : 0.0;
    return std::clamp(cov / den, -1.0, 1.0);
}

// PSNR = 10 log10(max(N)^2 / MSE); peak taken over the reference image as
// printed in the source formula (not a fixed 255).
inline double psnr(const ImageGrid& n, const ImageGrid& p) {
    require_same_shape(n, p, "psnr");
    const double err = mse(n, p);
    if (err == 0.0) return std::numeric_limits<double>::infinity();
    double peak = 0.0;
    for (double v : n.data) peak = std::max(peak, std::clamp(v, 0.0, 1.0) * 255.0);
    if (peak == 0.0) return 0.0;
    return 10.0 * std::log10(peak * peak / err);
}

namespace detail {

struct WindowMoments {
    double mu_a, mu_b, var_a, var_b, cov;
};

inline double ssim_term(const WindowMoments& w, const SsimParams& prm) {
    const double sd_a = std::sqrt(std::max(w.var_a, 0.0));
    const double sd_b = std::sqrt(std::max(w.var_b, 0.0));
    const double l = (2.0 * w.mu_a * w.mu_b + prm.c1) / (w.mu_a * w.mu_a + w.mu_b * w.mu_b + prm.c1);
    const double c = (2.0 * sd_a * sd_b + prm.c2) / (w.var_a + w.var_b + prm.c2);
    const double s = (w.cov + prm.c3) / (sd_a * sd_b + prm.c3);
    return l * c * s;
}

} // namespace detail

// Whole-image moments variant (single "window" covering the image).
inline double ssim_global(const ImageGrid& n, const ImageGrid& p, const SsimParams& prm = {}) {
    require_same_shape(n, p, "ssim");
    prm.validate();
    const auto a = detail::to255(n), b = detail::to255(p);
    const double m = static_cast<double>(a.size());
    detail::WindowMoments w{0, 0, 0, 0, 0};
    for (std::size_t i = 0; i < a.size(); ++i) {
        w.mu_a += a[i];
        w.mu_b += b[i];
    }
    w.mu_a /= m;
    w.mu_b /= m;
    for (std::size_t i = 0; i < a.size(); ++i) {
        w.var_a += (a[i] - w.mu_a) * (a[i] - w.mu_a);
        w.var_b += (b[i] - w.mu_b) * (b[i] - w.mu_b);
        w.cov += (a[i] - w.mu_a) * (b[i] - w.mu_b);
    }
    w.var_a /= m;
    w.var_b /= m;
    w.cov /= m;
    return detail::ssim_term(w, prm);
}

// l*c*s over a sliding Gaussian window, averaged over all positions where the
// window fits. Images smaller than the window fall back to global moments.
inline double ssim(const ImageGrid& n, const ImageGrid& p, const SsimParams& prm = {}) {
    require_same_shape(n, p, "ssim");
    prm.validate();
    const int win = prm.window_size;
    if (n.height < win || n.width < win) return ssim_global(n, p, prm);
    const auto a = detail::to255(n), b = detail::to255(p);
    const auto wts = detail::gaussian_window(win, prm.window_sigma);
    const int w = n.width;
    double acc = 0.0;
    std::size_t count = 0;
    for (int r = 0; r + win <= n.height; ++r) {
        for (int c = 0; c + win <= n.width; ++c) {
            double mu_a = 0.0, mu_b = 0.0, raw_aa = 0.0, raw_bb = 0.0, raw_ab = 0.0;
            for (int dr = 0; dr < win; ++dr)
                for (int dc = 0; dc < win; ++dc) {
                    const double wt = wts[static_cast<std::size_t>(dr) * win + dc];
                    const double va = a[static_cast<std::size_t>(r + dr) * w + (c + dc)];
                    const double vb = b[static_cast<std::size_t>(r + dr) * w + (c + dc)];
                    mu_a += wt * va;
                    mu_b += wt * vb;
                    raw_aa += wt * va * va;
                    raw_bb += wt * vb * vb;
                    raw_ab += wt * va * vb;
                }
            detail::WindowMoments wm;
            wm.mu_a = mu_a;
            wm.mu_b = mu_b;
            wm.var_a = raw_aa - mu_a * mu_a;
            wm.var_b = raw_bb - mu_b * mu_b;
            wm.cov = raw_ab - mu_a * mu_b;
            acc += detail::ssim_term(wm, prm);
            ++count;
        }
    }
    return acc / static_cast<double>(count);
}

// FSIM = sum S_L(i) PCm(i) / sum PCm(i), S_L = S_PC * S_G, pooled by
// PCm = max(PC_n, PC_p). Gradients are Scharr magnitudes on the 255 scale.
inline double fsim(const ImageGrid& n, const ImageGrid& p, const FsimParams& prm = {}) {
    require_same_shape(n, p, "fsim");
    prm.validate();
    const ImageGrid pc_n = phase_congruency(n, prm);
    const ImageGrid pc_p = phase_congruency(p, prm);
    const auto a = detail::to255(n), b = detail::to255(p);
    const auto g_n = detail::scharr_magnitude(a, n.height, n.width);
    const auto g_p = detail::scharr_magnitude(b, p.height, p.width);

    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double s_pc = (2.0 * pc_n.data[i] * pc_p.data[i] + prm.t1) /
                            (pc_n.data[i] * pc_n.data[i] + pc_p.data[i] * pc_p.data[i] + prm.t1);
        const double s_g =
            (2.0 * g_n[i] * g_p[i] + prm.t2) / (g_n[i] * g_n[i] + g_p[i] * g_p[i] + prm.t2);
        const double pcm = std::max(pc_n.data[i], pc_p.data[i]);
        num += s_pc * s_g * pcm;
        den += pcm;
    }
    if (den < 1e-12) return 1.0; // featureless pair carries no dissimilarity evidence
    return num / den;
}

// Universal image quality, single global formula over the whole image.
inline double uiq(const ImageGrid& n, const ImageGrid& p) {
    require_same_shape(n, p, "uiq");
    const auto a = detail::to255(n), b = detail::to255(p);
    const double m = static_cast<double>(a.size());
    double mu_a = 0.0, mu_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        mu_a += a[i];
        mu_b += b[i];
    }
    mu_a /= m;
    mu_b /= m;
    double var_a = 0.0, var_b = 0.0, cov = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        var_a += (a[i] - mu_a) * (a[i] - mu_a);
        var_b += (b[i] - mu_b) * (b[i] - mu_b);
        cov += (a[i] - mu_a) * (b[i] - mu_b);
    }
    var_a /= m;
    var_b /= m;
    cov /= m;
    const double den = (var_a + var_b) * (mu_a * mu_a + mu_b * mu_b);
    if (den == 0.0) return a == b ? 1.0 : 0.0;
    return 4.0 * cov * mu_a * mu_b / den;
}

// Sliding-window UIQ (8x8, mean-pooled) for cross-checking against the
// original formulation.
inline double uiq_windowed(const ImageGrid& n, const ImageGrid& p, int win = 8) {
    require_same_shape(n, p, "uiq");
    if (n.height < win || n.width < win) return uiq(n, p);
    const auto a = detail::to255(n), b = detail::to255(p);
    const int w = n.width;
    const double m = static_cast<double>(win) * win;
    double acc = 0.0;
    std::size_t count = 0;
    for (int r = 0; r + win <= n.height; ++r) {
        for (int c = 0; c + win <= n.width; ++c) {
            double mu_a = 0.0, mu_b = 0.0, raw_aa = 0.0, raw_bb = 0.0, raw_ab = 0.0;
            for (int dr = 0; dr < win; ++dr)
                for (int dc = 0; dc < win; ++dc) {
                    const double va = a[static_cast<std::size_t>(r + dr) * w + (c + dc)];
                    const double vb = b[static_cast<std::size_t>(r + dr) * w + (c + dc)];
                    mu_a += va;
                    mu_b += vb;
                    raw_aa += va * va;
                    raw_bb += vb * vb;
                    raw_ab += va * vb;
                }
            mu_a /= m;
            mu_b /= m;
            const double var_a = raw_aa / m - mu_a * mu_a;
            const double var_b = raw_bb / m - mu_b * mu_b;
            const double cov = raw_ab / m - mu_a * mu_b;
            const double den = (var_a + var_b) * (mu_a * mu_a + mu_b * mu_b);
            acc += den == 0.0 ? 1.0 : 4.0 * cov * mu_a * mu_b / den;
            ++count;
        }
    }
    return acc / static_cast<double>(count);
}

inline MetricReport evaluate_all(const ImageGrid& n, const ImageGrid& p,
                                 const SsimParams& sp = {}, const FsimParams& fp = {}) {
    MetricReport r;
    r.mse = mse(n, p);
    r.nrmse = nrmse(n, p);
    r.ncc = ncc(n, p);
    r.psnr = psnr(n, p);
    r.ssim = ssim(n, p, sp);
    r.fsim = fsim(n, p, fp);
    r.uiq = uiq(n, p);
    return r;
}

inline const char* metric_csv_header() {
    return "image_id,method,mse,nrmse,ncc,psnr,ssim,fsim,uiq";
}

inline void write_metric_csv_row(std::ostream& out, const std::string& image_id,
                                 const std::string& method, const MetricReport& r) {
    out << image_id << "," << method << "," << fmt_double(r.mse) << "," << fmt_double(r.nrmse)
        << "," << fmt_double(r.ncc) << "," << fmt_double(r.psnr) << "," << fmt_double(r.ssim)
        << "," << fmt_double(r.fsim) << "," << fmt_double(r.uiq) << "\n";
}

} // namespace noisr

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "noisr/common.hpp"
#include "noisr/image.hpp"
#include "noisr/rng.hpp"

namespace noisr {

enum class NoiseKind { gaussian, speckle };

inline std::string to_string(NoiseKind k) {
    return k == NoiseKind::gaussian ? "gaussian" : "speckle";
}

inline NoiseKind noise_kind_from_string(const std::string& s) {
    if (s == "gaussian") return NoiseKind::gaussian;
    if (s == "speckle") return NoiseKind::speckle;
    throw InputError("unknown noise kind: " + s);
}

// The known noise distribution Theta. Speckle is multiplicative
// (N = G + G*eta) and ignores mu.
struct NoiseSpec {
    NoiseKind kind = NoiseKind::gaussian;
    double mu = 0.0;
    double sigma = 0.02;

    void validate() const {
        if (!(sigma > 0.0)) throw InputError("NoiseSpec: sigma must be positive");
    }
};

// Floor on the per-pixel speckle std so the density stays finite where G = 0.
inline constexpr double kSpeckleStdFloor = 1e-3;

// N(i) = clip(G(i) + eta_i)          eta ~ Normal(mu, sigma^2)   (gaussian)
// N(i) = clip(G(i) + G(i) * eta_i)   eta ~ Normal(0, sigma^2)    (speckle)
// Bit-deterministic for a fixed seed; draws are keyed by pixel index.
inline ImageGrid apply_noise(const ImageGrid& g, const NoiseSpec& spec, std::uint64_t seed) {
    spec.validate();
    ImageGrid out = g;
    const std::size_t n = g.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double z = keyed_normal(seed, i);
        double v;
        if (spec.kind == NoiseKind::gaussian) {
            v = g.data[i] + spec.mu + spec.sigma * z;
        } else {
            v = g.data[i] + g.data[i] * spec.sigma * z;
        }
        out.data[i] = std::clamp(v, 0.0, 1.0);
    }
    return out;
}

namespace detail {

inline double noise_pixel_std(const NoiseSpec& spec, double reference) {
    if (spec.kind == NoiseKind::gaussian) return spec.sigma;
    return spec.sigma * std::max(reference, kSpeckleStdFloor);
}

inline double noise_pixel_mu(const NoiseSpec& spec) {
    return spec.kind == NoiseKind::gaussian ? spec.mu : 0.0;
}

} // namespace detail

// Mean log-density of the residual field under Theta:
//   (1/m) sum_i log phi(residual_i; mu_i, sigma_i^2).
// For speckle, sigma_i = sigma * max(reference_i, 1e-3).
inline double log_likelihood(const ImageGrid& residual, const ImageGrid& reference,
                             const NoiseSpec& spec) {
    require_same_shape(residual, reference, "log_likelihood");
    spec.validate();
    const double mu = detail::noise_pixel_mu(spec);
    const double half_log_2pi = 0.5 * std::log(2.0 * M_PI);
    double acc = 0.0;
    const std::size_t n = residual.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double s = detail::noise_pixel_std(spec, reference.data[i]);
        const double z = (residual.data[i] - mu) / s;
        acc += -half_log_2pi - std::log(s) - 0.5 * z * z;
    }
    return acc / static_cast<double>(n);
}

// d(mean log-density)/d(residual_i); used by the training loss.
inline ImageGrid log_likelihood_grad(const ImageGrid& residual, const ImageGrid& reference,
                                     const NoiseSpec& spec) {
    require_same_shape(residual, reference, "log_likelihood_grad");
    spec.validate();
    const double mu = detail::noise_pixel_mu(spec);
    const double inv_m = 1.0 / static_cast<double>(residual.size());
    ImageGrid grad(residual.height, residual.width);
    const std::size_t n = residual.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double s = detail::noise_pixel_std(spec, reference.data[i]);
        grad.data[i] = -(residual.data[i] - mu) / (s * s) * inv_m;
    }
    return grad;
}

struct Histogram {
    std::vector<double> bin_edges; // ascending, counts.size() + 1 entries
    std::vector<std::uint64_t> counts;
    double sample_mean = 0.0;
    double sample_std = 0.0;
    std::uint64_t n = 0;
};

// Histogram over a symmetric range [-r, r].
inline Histogram make_histogram(const std::vector<double>& values, int bins, double r) {
    if (bins < 2) throw InputError("make_histogram: need at least 2 bins");
    if (!(r > 0.0)) r = 1e-12;
    Histogram h;
    h.bin_edges.resize(static_cast<std::size_t>(bins) + 1);
    for (int b = 0; b <= bins; ++b)
        h.bin_edges[static_cast<std::size_t>(b)] = -r + 2.0 * r * b / bins;
    h.counts.assign(static_cast<std::size_t>(bins), 0);
    double sum = 0.0;
    for (double v : values) {
        int idx = static_cast<int>(std::floor((v + r) / (2.0 * r) * bins));
        idx = std::clamp(idx, 0, bins - 1);
        ++h.counts[static_cast<std::size_t>(idx)];
        sum += v;
    }
    h.n = values.size();
    if (h.n > 0) {
        h.sample_mean = sum / static_cast<double>(h.n);
        // two-pass variance; the one-pass form cancels badly for
        // near-constant residual fields
        double var = 0.0;
        for (double v : values) var += (v - h.sample_mean) * (v - h.sample_mean);
        h.sample_std = std::sqrt(var / static_cast<double>(h.n));
    }
    return h;
}

// Histogram of P - G over [-r, r], r = max(4*sigma_hint, max|P-G|).
// Clipping of the noisy image perturbs the tails; the range rule keeps the
// central lobe resolved regardless.
inline Histogram residual_histogram(const ImageGrid& p, const ImageGrid& g, int bins,
                                    double sigma_hint = 0.0) {
    require_same_shape(p, g, "residual_histogram");
    std::vector<double> res(p.size());
    double maxabs = 0.0;
    for (std::size_t i = 0; i < res.size(); ++i) {
        res[i] = p.data[i] - g.data[i];
        maxabs = std::max(maxabs, std::fabs(res[i]));
    }
    const double r = std::max(4.0 * sigma_hint, maxabs);
    return make_histogram(res, bins, r);
}

// CSV rows `bin_left,bin_right,count` plus a trailing summary comment.
inline void write_histogram_csv(std::ostream& out, const Histogram& h) {
    for (std::size_t b = 0; b < h.counts.size(); ++b)
        out << fmt_double(h.bin_edges[b]) << "," << fmt_double(h.bin_edges[b + 1]) << ","
            << h.counts[b] << "\n";
    out << "# mean=" << fmt_double(h.sample_mean) << " std=" << fmt_double(h.sample_std)
        << " n=" << h.n << "\n";
}

} // namespace noisr

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <vector>

#include <fftw3.h>

#include "noisr/common.hpp"
#include "noisr/image.hpp"

namespace noisr {

// Log-Gabor filter bank settings for phase congruency, plus the FSIM
// stabilizers T1 (phase-congruency similarity) and T2 (gradient similarity,
// on the 0..255 intensity scale).
struct FsimParams {
    int scales = 4;
    int orientations = 4;
    double min_wavelength = 6.0;
    double mult = 2.0;
    double sigma_onf = 0.55;
    double dtheta_on_sigma = 1.2;
    double noise_k = 2.0;
    double epsilon = 1e-4;
    double t1 = 0.85;
    double t2 = 160.0;

    void validate() const {
        if (scales < 1 || orientations < 1)
            throw InputError("FsimParams: scales and orientations must be >= 1");
        if (!(t1 > 0.0) || !(t2 > 0.0)) throw InputError("FsimParams: T1, T2 must be positive");
    }
};

namespace detail {

// libfftw planning is not thread-safe; executing distinct plans is.
inline std::mutex& fftw_plan_mutex() {
    static std::mutex m;
    return m;
}

struct FftBuf {
    fftw_complex* p = nullptr;
    explicit FftBuf(std::size_t n) { p = fftw_alloc_complex(n); }
    ~FftBuf() { fftw_free(p); }
    FftBuf(const FftBuf&) = delete;
    FftBuf& operator=(const FftBuf&) = delete;
};

inline void fft2(int h, int w, fftw_complex* in, fftw_complex* out, int sign) {
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(fftw_plan_mutex());
        plan = fftw_plan_dft_2d(h, w, in, out, sign, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(fftw_plan_mutex());
        fftw_destroy_plan(plan);
    }
}

inline double median_of(std::vector<double> v) {
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) {
        std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid) - 1, v.end());
        m = 0.5 * (m + v[mid - 1]);
    }
    return m;
}

} // namespace detail

// Phase congruency map in [0,1] from an oriented log-Gabor bank (Kovesi-style
// energy measure with median-based noise compensation). The image is
// standardized first, which makes the map exactly invariant to positive
// affine intensity rescaling; constant images yield the zero map.
inline ImageGrid phase_congruency(const ImageGrid& x, const FsimParams& params = {}) {
    params.validate();
    const int h = x.height, w = x.width;
    const std::size_t m = x.size();

    double mean = 0.0;
    for (double v : x.data) mean += v;
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (double v : x.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(m);
    const double std = std::sqrt(var);
    if (std < 1e-12) return ImageGrid(h, w, 0.0);

    detail::FftBuf spectrum(m), filtered(m), response(m);
    for (std::size_t i = 0; i < m; ++i) {
        spectrum.p[i][0] = (x.data[i] - mean) / std;
        spectrum.p[i][1] = 0.0;
    }
    detail::fft2(h, w, spectrum.p, spectrum.p, FFTW_FORWARD);

    // Frequency grid (cycles per pixel) with a Butterworth low-pass to kill
    // wrap-around at the Nyquist corners.
    std::vector<double> radius(m), theta(m);
    for (int v = 0; v < h; ++v) {
        const double fy = (v <= h / 2 ? v : v - h) / static_cast<double>(h);
        for (int u = 0; u < w; ++u) {
            const double fx = (u <= w / 2 ? u : u - w) / static_cast<double>(w);
            const std::size_t i = static_cast<std::size_t>(v) * w + u;
            radius[i] = std::hypot(fx, fy);
            theta[i] = std::atan2(-fy, fx);
        }
    }
    radius[0] = 1.0;

    std::vector<std::vector<double>> log_gabor(static_cast<std::size_t>(params.scales));
    for (int s = 0; s < params.scales; ++s) {
        auto& gab = log_gabor[static_cast<std::size_t>(s)];
        gab.resize(m);
        const double wavelength = params.min_wavelength * std::pow(params.mult, s);
        const double f0 = 1.0 / wavelength;
        const double denom = 2.0 * std::log(params.sigma_onf) * std::log(params.sigma_onf);
        for (std::size_t i = 0; i < m; ++i) {
            const double lr = std::log(radius[i] / f0);
            const double lp = 1.0 / (1.0 + std::pow(radius[i] / 0.45, 30.0));
            gab[i] = std::exp(-lr * lr / denom) * lp;
        }
        gab[0] = 0.0;
    }

    const double theta_sigma = M_PI / params.orientations / params.dtheta_on_sigma;
    std::vector<double> energy_all(m, 0.0), an_all(m, 0.0);
    std::vector<std::vector<double>> even(static_cast<std::size_t>(params.scales)),
        odd(static_cast<std::size_t>(params.scales));

    for (int o = 0; o < params.orientations; ++o) {
        const double angle = o * M_PI / params.orientations;
        const double cos_a = std::cos(angle), sin_a = std::sin(angle);
        std::vector<double> spread(m);
        for (std::size_t i = 0; i < m; ++i) {
            const double ds = std::sin(theta[i]) * cos_a - std::cos(theta[i]) * sin_a;
            const double dc = std::cos(theta[i]) * cos_a + std::sin(theta[i]) * sin_a;
            const double dtheta = std::fabs(std::atan2(ds, dc));
            spread[i] = std::exp(-dtheta * dtheta / (2.0 * theta_sigma * theta_sigma));
        }

        std::vector<double> sum_e(m, 0.0), sum_o(m, 0.0), sum_an(m, 0.0);
        double tau = 0.0;
        for (int s = 0; s < params.scales; ++s) {
            const auto& gab = log_gabor[static_cast<std::size_t>(s)];
            for (std::size_t i = 0; i < m; ++i) {
                const double f = gab[i] * spread[i];
                filtered.p[i][0] = spectrum.p[i][0] * f;
                filtered.p[i][1] = spectrum.p[i][1] * f;
            }
            detail::fft2(h, w, filtered.p, response.p, FFTW_BACKWARD);
            auto& ev = even[static_cast<std::size_t>(s)];
            auto& od = odd[static_cast<std::size_t>(s)];
            ev.resize(m);
            od.resize(m);
            const double scale = 1.0 / static_cast<double>(m);
            for (std::size_t i = 0; i < m; ++i) {
                ev[i] = response.p[i][0] * scale;
                od[i] = response.p[i][1] * scale;
                const double an = std::hypot(ev[i], od[i]);
                sum_e[i] += ev[i];
                sum_o[i] += od[i];
                sum_an[i] += an;
            }
            if (s == 0) {
                std::vector<double> amps(m);
                for (std::size_t i = 0; i < m; ++i) amps[i] = std::hypot(ev[i], od[i]);
                tau = detail::median_of(std::move(amps)) / std::sqrt(std::log(4.0));
            }
        }

        // Energy along the mean phase direction, minus the estimated noise
        // influence (Rayleigh statistics of the filter amplitudes).
        std::vector<double> energy(m, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            const double xe = std::sqrt(sum_e[i] * sum_e[i] + sum_o[i] * sum_o[i]) + params.epsilon;
            const double me = sum_e[i] / xe, mo = sum_o[i] / xe;
            double acc = 0.0;
            for (int s = 0; s < params.scales; ++s) {
                const double e = even[static_cast<std::size_t>(s)][i];
                const double od = odd[static_cast<std::size_t>(s)][i];
                acc += e * me + od * mo - std::fabs(e * mo - od * me);
            }
            energy[i] = acc;
        }

        const double total_tau =
            tau * (1.0 - std::pow(1.0 / params.mult, params.scales)) / (1.0 - 1.0 / params.mult);
        const double noise_mean = total_tau * std::sqrt(M_PI / 2.0);
        const double noise_sigma = total_tau * std::sqrt((4.0 - M_PI) / 2.0);
        const double threshold = (noise_mean + params.noise_k * noise_sigma) / 1.7;

        for (std::size_t i = 0; i < m; ++i) {
            energy_all[i] += std::max(energy[i] - threshold, 0.0);
            an_all[i] += sum_an[i];
        }
    }

    ImageGrid pc(h, w);
    for (std::size_t i = 0; i < m; ++i) {
        pc.data[i] = std::clamp(energy_all[i] / (an_all[i] + params.epsilon), 0.0, 1.0);
    }
    return pc;
}

} // namespace noisr

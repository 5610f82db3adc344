#pragma once

#include <cmath>
#include <string>

#include "noisr/common.hpp"
#include "noisr/image.hpp"
#include "noisr/noise.hpp"

namespace noisr {

// Scaling of the data-fit term. `rms` (Frobenius norm divided by sqrt(m)) is
// the default so the lambda weighting transfers across image sizes;
// `frobenius` is the unnormalized norm as printed in the source formula,
// `mse` the squared mean.
enum class FitMode { rms, frobenius, mse };

inline std::string to_string(FitMode m) {
    switch (m) {
        case FitMode::rms: return "rms";
        case FitMode::frobenius: return "frobenius";
        default: return "mse";
    }
}

inline FitMode fit_mode_from_string(const std::string& s) {
    if (s == "rms") return FitMode::rms;
    if (s == "frobenius") return FitMode::frobenius;
    if (s == "mse") return FitMode::mse;
    throw InputError("unknown fit mode: " + s);
}

struct LossBreakdown {
    double fit_term = 0.0;   // match to the noisy high-resolution target
    double noise_term = 0.0; // mean log-likelihood of P-G under Theta
    double total = 0.0;      // fit + lambda * noise
};

// total = fit(P,N) + lambda * (1/m) sum log L(P-G, Theta). lambda is negative
// (the likelihood term is maximized).
inline LossBreakdown loss(const ImageGrid& p, const ImageGrid& n, const ImageGrid& g,
                          const NoiseSpec& spec, double lambda, FitMode mode = FitMode::rms) {
    require_same_shape(p, n, "loss");
    require_same_shape(p, g, "loss");
    const double m = static_cast<double>(p.size());
    double sse = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = p.data[i] - n.data[i];
        sse += d * d;
    }
    LossBreakdown out;
    switch (mode) {
        case FitMode::rms: out.fit_term = std::sqrt(sse / m); break;
        case FitMode::frobenius: out.fit_term = std::sqrt(sse); break;
        case FitMode::mse: out.fit_term = sse / m; break;
    }
    ImageGrid residual(p.height, p.width);
    for (std::size_t i = 0; i < p.size(); ++i) residual.data[i] = p.data[i] - g.data[i];
    out.noise_term = log_likelihood(residual, g, spec);
    out.total = out.fit_term + lambda * out.noise_term;
    return out;
}

// d(total)/dP. The norm terms are smoothed at the origin by a tiny floor so
// the gradient stays finite when P == N.
inline ImageGrid loss_grad(const ImageGrid& p, const ImageGrid& n, const ImageGrid& g,
                           const NoiseSpec& spec, double lambda, FitMode mode = FitMode::rms) {
    require_same_shape(p, n, "loss_grad");
    require_same_shape(p, g, "loss_grad");
    const double m = static_cast<double>(p.size());
    double sse = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = p.data[i] - n.data[i];
        sse += d * d;
    }
    ImageGrid grad(p.height, p.width);
    switch (mode) {
        case FitMode::rms: {
            const double rms = std::max(std::sqrt(sse / m), 1e-12);
            for (std::size_t i = 0; i < p.size(); ++i)
                grad.data[i] = (p.data[i] - n.data[i]) / (m * rms);
            break;
        }
        case FitMode::frobenius: {
            const double fro = std::max(std::sqrt(sse), 1e-12);
            for (std::size_t i = 0; i < p.size(); ++i)
                grad.data[i] = (p.data[i] - n.data[i]) / fro;
            break;
        }
        case FitMode::mse: {
            for (std::size_t i = 0; i < p.size(); ++i)
                grad.data[i] = 2.0 * (p.data[i] - n.data[i]) / m;
            break;
        }
    }
    ImageGrid residual(p.height, p.width);
    for (std::size_t i = 0; i < p.size(); ++i) residual.data[i] = p.data[i] - g.data[i];
    const ImageGrid ll_grad = log_likelihood_grad(residual, g, spec);
    for (std::size_t i = 0; i < p.size(); ++i) grad.data[i] += lambda * ll_grad.data[i];
    return grad;
}

} // namespace noisr

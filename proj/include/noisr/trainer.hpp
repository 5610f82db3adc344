#pragma once

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "noisr/checkpoint.hpp"
#include "noisr/common.hpp"
#include "noisr/image.hpp"
#include "noisr/loss.hpp"
#include "noisr/network.hpp"
#include "noisr/noise.hpp"
#include "noisr/rng.hpp"

namespace noisr {

struct TrainConfig {
    double lambda = -10.0;
    double learning_rate = 0.001;
    int max_epochs = 60;
    int patience = 10;
    int batch_size = 8;
    std::uint64_t seed = 0;
    int patch_size = 64; // high-resolution patch edge; 0 trains on full images
    FitMode fit_mode = FitMode::rms;
    int threads = 0; // 0 or 1 = single-threaded reference mode
    double min_delta = 1e-6;

    void validate() const {
        if (!(learning_rate > 0.0)) throw InputError("TrainConfig: learning rate must be positive");
        if (max_epochs < 1) throw InputError("TrainConfig: max_epochs must be >= 1");
        if (patience < 1) throw InputError("TrainConfig: patience must be >= 1");
        if (batch_size < 1) throw InputError("TrainConfig: batch_size must be >= 1");
        if (lambda > 0.0) throw InputError("TrainConfig: lambda must be <= 0");
    }
};

// Adam with bias correction; beta1=0.9, beta2=0.999, eps=1e-8.
struct AdamState {
    ParameterSet m;
    ParameterSet v;
    long long t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState make(const NetworkConfig& cfg) {
        AdamState s;
        s.m = zero_parameters(cfg);
        s.v = zero_parameters(cfg);
        return s;
    }
};

inline void adam_step(ParameterSet& params, const ParameterSet& grads, AdamState& state,
                      double lr, const NetworkConfig& cfg) {
    auto p_arr = parameter_arrays(params, cfg);
    auto g_arr = parameter_arrays(const_cast<ParameterSet&>(grads), cfg);
    auto m_arr = parameter_arrays(state.m, cfg);
    auto v_arr = parameter_arrays(state.v, cfg);
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t a = 0; a < p_arr.size(); ++a) {
        auto& p = *p_arr[a].data;
        const auto& g = *g_arr[a].data;
        auto& m = *m_arr[a].data;
        auto& v = *v_arr[a].data;
        if (p.size() != g.size())
            throw InputError("adam_step: gradient shape mismatch at " + p_arr[a].name);
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (!std::isfinite(g[i]))
                throw NumericError("adam_step: non-finite gradient in " + p_arr[a].name);
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

// Stops once the validation loss has failed to improve by at least min_delta
// for `patience` consecutive epochs.
struct EarlyStopper {
    int patience;
    double min_delta = 1e-6;
    double best = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    int stale = 0;

    explicit EarlyStopper(int patience_, double min_delta_ = 1e-6)
        : patience(patience_), min_delta(min_delta_) {}

    // Returns true when training should stop after this epoch.
    bool update(int epoch, double val_loss) {
        if (best - val_loss >= min_delta) {
            best = val_loss;
            best_epoch = epoch;
            stale = 0;
        } else {
            ++stale;
        }
        return stale >= patience;
    }
};

struct EpochRecord {
    int epoch = 0;
    double fit_train = 0.0;
    double noise_train = 0.0;
    double fit_val = 0.0;
    double noise_val = 0.0;
    double total_val = 0.0;
};

using TrainingTrace = std::vector<EpochRecord>;

struct Triplet {
    std::string id;
    ImageGrid g;
    ImageGrid n;
    ImageGrid l;
};

struct TrainResult {
    Checkpoint best;
    TrainingTrace trace;
};

inline const char* trace_csv_header() {
    return "epoch,fit_train,noise_train,fit_val,noise_val,total_val,best_so_far";
}

inline void write_trace_csv(std::ostream& out, const TrainingTrace& trace) {
    out << trace_csv_header() << "\n";
    double best = std::numeric_limits<double>::infinity();
    for (const EpochRecord& r : trace) {
        best = std::min(best, r.total_val);
        out << r.epoch << "," << fmt_double(r.fit_train) << "," << fmt_double(r.noise_train)
            << "," << fmt_double(r.fit_val) << "," << fmt_double(r.noise_val) << ","
            << fmt_double(r.total_val) << "," << fmt_double(best) << "\n";
    }
}

namespace detail {

struct PatchTriplet {
    ImageGrid g, n, l;
};

// k-aligned high-resolution crop plus the matching low-resolution window, so
// the patch triple satisfies L = decimate(N) exactly.
inline PatchTriplet sample_patch(const Triplet& t, int factor, int patch,
                                 std::uint64_t seed, std::uint64_t key) {
    const int H = t.n.height, W = t.n.width;
    int ph = patch > 0 ? std::min(patch, H) : H;
    int pw = patch > 0 ? std::min(patch, W) : W;
    ph -= ph % factor;
    pw -= pw % factor;
    const int max_ry = (H - ph) / factor;
    const int max_rx = (W - pw) / factor;
    const int ry = static_cast<int>(keyed_below(seed, 2 * key, static_cast<std::uint64_t>(max_ry) + 1)) * factor;
    const int rx = static_cast<int>(keyed_below(seed, 2 * key + 1, static_cast<std::uint64_t>(max_rx) + 1)) * factor;

    PatchTriplet out;
    out.g = ImageGrid(ph, pw);
    out.n = ImageGrid(ph, pw);
    for (int r = 0; r < ph; ++r)
        for (int c = 0; c < pw; ++c) {
            out.g(r, c) = t.g(ry + r, rx + c);
            out.n(r, c) = t.n(ry + r, rx + c);
        }
    out.l = ImageGrid(ph / factor, pw / factor);
    for (int r = 0; r < out.l.height; ++r)
        for (int c = 0; c < out.l.width; ++c)
            out.l(r, c) = t.l(ry / factor + r, rx / factor + c);
    return out;
}

struct SampleGrad {
    ParameterSet grads;
    LossBreakdown breakdown;
};

inline SampleGrad sample_gradient(const EffNet& net, const ParameterSet& params,
                                  const NormalizationStats& stats, const PatchTriplet& patch,
                                  const NoiseSpec& spec, double lambda, FitMode mode) {
    ForwardCtx ctx;
    const ImageGrid p = forward(net, stats, patch.l, /*clip=*/false, PadMode::replicate, &ctx);
    SampleGrad out;
    out.breakdown = loss(p, patch.n, patch.g, spec, lambda, mode);
    const ImageGrid dP = loss_grad(p, patch.n, patch.g, spec, lambda, mode);
    out.grads = backward(net, params, stats, ctx, dP);
    return out;
}

inline void accumulate(ParameterSet& into, const ParameterSet& from, double scale,
                       const NetworkConfig& cfg) {
    auto dst = parameter_arrays(into, cfg);
    auto src = parameter_arrays(const_cast<ParameterSet&>(from), cfg);
    for (std::size_t a = 0; a < dst.size(); ++a) {
        auto& d = *dst[a].data;
        const auto& s = *src[a].data;
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += scale * s[i];
    }
}

} // namespace detail

// Full-image validation loss, averaged component-wise over the split.
inline LossBreakdown evaluate_split(const EffNet& net, const NormalizationStats& stats,
                                    const std::vector<Triplet>& split, const NoiseSpec& spec,
                                    double lambda, FitMode mode) {
    if (split.empty()) throw InputError("evaluate_split: empty split");
    LossBreakdown mean;
    for (const Triplet& t : split) {
        const ImageGrid p = forward(net, stats, t.l, /*clip=*/false);
        const LossBreakdown b = loss(p, t.n, t.g, spec, lambda, mode);
        mean.fit_term += b.fit_term;
        mean.noise_term += b.noise_term;
    }
    mean.fit_term /= static_cast<double>(split.size());
    mean.noise_term /= static_cast<double>(split.size());
    mean.total = mean.fit_term + lambda * mean.noise_term;
    return mean;
}

// Epoch loop: seeded shuffle, per-batch mean gradients, one Adam step per
// batch, full validation each epoch, best-checkpoint retention and early
// stopping. Bit-deterministic for a fixed seed at any thread count (the
// per-sample gradients are reduced in sample order).
inline TrainResult train(const std::vector<Triplet>& train_split,
                         const std::vector<Triplet>& val_split, const NoiseSpec& spec,
                         const NetworkConfig& net_cfg, const TrainConfig& train_cfg,
                         const NormalizationStats& stats, std::ostream* log = nullptr) {
    net_cfg.validate();
    train_cfg.validate();
    spec.validate();
    if (train_split.empty()) throw InputError("train: empty training split");
    if (val_split.empty()) throw InputError("train: empty validation split");
    for (const Triplet& t : train_split) {
        if (t.l.height * net_cfg.factor != t.n.height || t.l.width * net_cfg.factor != t.n.width ||
            !t.n.same_shape(t.g))
            throw InputError("train: triplet shapes inconsistent with factor (" + t.id + ")");
    }

    ParameterSet params = init(net_cfg);
    AdamState adam = AdamState::make(net_cfg);
    EarlyStopper stopper(train_cfg.patience, train_cfg.min_delta);

    TrainResult result;
    result.best.config = net_cfg;
    result.best.stats = stats;
    double best_val = std::numeric_limits<double>::infinity();

    std::vector<std::size_t> order(train_split.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const int threads = std::max(train_cfg.threads, 1);

    for (int epoch = 1; epoch <= train_cfg.max_epochs; ++epoch) {
        keyed_shuffle(order, train_cfg.seed + static_cast<std::uint64_t>(epoch) * 0x1000193ull);
        const EffNet* net = nullptr;
        EffNet net_storage;

        double fit_sum = 0.0, noise_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(train_cfg.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(train_cfg.batch_size));
            net_storage = materialize(params, net_cfg);
            net = &net_storage;

            std::vector<detail::PatchTriplet> patches;
            for (std::size_t i = start; i < stop; ++i) {
                const Triplet& t = train_split[order[i]];
                const std::uint64_t key =
                    static_cast<std::uint64_t>(epoch) * 1000003ull + order[i];
                patches.push_back(detail::sample_patch(t, net_cfg.factor, train_cfg.patch_size,
                                                       train_cfg.seed ^ 0x5eedULL, key));
            }

            std::vector<detail::SampleGrad> grads(patches.size());
            if (threads > 1 && patches.size() > 1) {
                // waves of `threads` jobs; reduction below stays in sample order
                for (std::size_t base = 0; base < patches.size();
                     base += static_cast<std::size_t>(threads)) {
                    const std::size_t wave_stop =
                        std::min(patches.size(), base + static_cast<std::size_t>(threads));
                    std::vector<std::future<detail::SampleGrad>> jobs;
                    for (std::size_t i = base; i < wave_stop; ++i) {
                        const detail::PatchTriplet& patch = patches[i];
                        jobs.push_back(std::async(std::launch::async, [&, net]() {
                            return detail::sample_gradient(*net, params, stats, patch, spec,
                                                           train_cfg.lambda, train_cfg.fit_mode);
                        }));
                    }
                    for (std::size_t i = base; i < wave_stop; ++i)
                        grads[i] = jobs[i - base].get();
                }
            } else {
                for (std::size_t i = 0; i < patches.size(); ++i)
                    grads[i] = detail::sample_gradient(*net, params, stats, patches[i], spec,
                                                       train_cfg.lambda, train_cfg.fit_mode);
            }

            ParameterSet batch_grad = zero_parameters(net_cfg);
            const double inv = 1.0 / static_cast<double>(grads.size());
            for (const detail::SampleGrad& sg : grads) {
                detail::accumulate(batch_grad, sg.grads, inv, net_cfg);
                fit_sum += sg.breakdown.fit_term;
                noise_sum += sg.breakdown.noise_term;
                ++seen;
            }
            if (!std::isfinite(fit_sum) || !std::isfinite(noise_sum))
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                   ", batch starting at sample " + std::to_string(start));
            adam_step(params, batch_grad, adam, train_cfg.learning_rate, net_cfg);
        }

        const EffNet eval_net = materialize(params, net_cfg);
        const LossBreakdown val =
            evaluate_split(eval_net, stats, val_split, spec, train_cfg.lambda, train_cfg.fit_mode);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.fit_train = fit_sum / static_cast<double>(seen);
        rec.noise_train = noise_sum / static_cast<double>(seen);
        rec.fit_val = val.fit_term;
        rec.noise_val = val.noise_term;
        rec.total_val = val.total;
        result.trace.push_back(rec);

        if (val.total < best_val) {
            best_val = val.total;
            result.best.params = params;
            result.best.meta.epoch = static_cast<std::uint32_t>(epoch);
            result.best.meta.best_val_total = val.total;
            result.best.meta.final_train_total =
                rec.fit_train + train_cfg.lambda * rec.noise_train;
        }
        if (log) {
            *log << epoch << "," << fmt_double(rec.fit_train) << "," << fmt_double(rec.noise_train)
                 << "," << fmt_double(rec.fit_val) << "," << fmt_double(rec.noise_val) << ","
                 << fmt_double(rec.total_val) << "," << fmt_double(best_val) << "\n";
        }
        if (stopper.update(epoch, val.total)) break;
    }
    return result;
}

// Forward pass with clipping; output is factor x input size.
inline ImageGrid predict(const Checkpoint& ckpt, const ImageGrid& l) {
    const EffNet net = materialize(ckpt.params, ckpt.config);
    return forward(net, ckpt.stats, l, /*clip=*/true);
}

} // namespace noisr

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "noisr/common.hpp"
#include "noisr/image.hpp"
#include "noisr/rng.hpp"
#include "noisr/tensor.hpp"

namespace noisr {

enum class PadMode { replicate, periodic };

// Custom WDSR-style architecture: weight-normalized convolutions, eight
// wide-activation residual blocks, a shallow skip branch, and transposed
// convolutions (stride k, kernel 2k) for the up-sampling.
struct NetworkConfig {
    int factor = 2;
    int kernel_size = 3; // 3 for 2X, 5 for 4X
    int num_blocks = 8;
    int width = 39;
    int skip_width = 8;
    int expansion = 4;
    std::uint64_t seed = 0;

    // Default widths are fixed so param_count lands near the published totals
    // (894,256 for 2X; 236,808 for 4X).
    static NetworkConfig defaults_for(int factor) {
        NetworkConfig c;
        c.factor = factor;
        if (factor == 2) {
            c.kernel_size = 3;
            c.width = 39;
        } else if (factor == 4) {
            c.kernel_size = 5;
            c.width = 12;
        } else {
            throw InputError("NetworkConfig: factor must be 2 or 4");
        }
        return c;
    }

    int up_kernel() const { return 2 * factor; }
    int up_pad() const { return factor / 2; }

    void validate() const {
        if (factor != 2 && factor != 4) throw InputError("NetworkConfig: factor must be 2 or 4");
        if (kernel_size % 2 == 0 || kernel_size < 1)
            throw InputError("NetworkConfig: kernel size must be odd");
        if (width < 1 || skip_width < 1) throw InputError("NetworkConfig: width must be >= 1");
        if (num_blocks < 1) throw InputError("NetworkConfig: num_blocks must be >= 1");
        if (expansion < 1) throw InputError("NetworkConfig: expansion must be >= 1");
    }

    bool operator==(const NetworkConfig& o) const {
        return factor == o.factor && kernel_size == o.kernel_size && num_blocks == o.num_blocks &&
               width == o.width && skip_width == o.skip_width && expansion == o.expansion;
    }
};

// One weight-normalized convolution: direction v, per-output-channel scale g,
// bias b. Effective kernel is w = g * v / ||v|| per output channel.
struct ConvParam {
    Tensor4 v;
    std::vector<double> g;
    std::vector<double> b;
};

struct BlockParam {
    ConvParam expand;
    ConvParam project;
};

struct ParameterSet {
    ConvParam head;
    std::vector<BlockParam> blocks;
    ConvParam tail;
    ConvParam up_main; // transposed conv, width -> 1
    ConvParam skip_in; // conv, 1 -> skip_width
    ConvParam up_skip; // transposed conv, skip_width -> 1
};

struct LayerSpec {
    std::string name;
    int out_ch, in_ch, ksize;
};

inline std::vector<LayerSpec> layer_specs(const NetworkConfig& cfg) {
    cfg.validate();
    std::vector<LayerSpec> specs;
    const int w = cfg.width, e = cfg.expansion * cfg.width, k = cfg.kernel_size;
    specs.push_back({"head", w, 1, k});
    for (int b = 0; b < cfg.num_blocks; ++b) {
        const std::string p = "block" + std::to_string(b);
        specs.push_back({p + ".expand", e, w, k});
        specs.push_back({p + ".project", w, e, k});
    }
    specs.push_back({"tail", w, w, k});
    specs.push_back({"up_main", 1, w, cfg.up_kernel()});
    specs.push_back({"skip_in", cfg.skip_width, 1, k});
    specs.push_back({"up_skip", 1, cfg.skip_width, cfg.up_kernel()});
    return specs;
}

// Exact number of trainable scalars (v, g and biases all counted).
inline long long param_count(const NetworkConfig& cfg) {
    long long total = 0;
    for (const LayerSpec& s : layer_specs(cfg))
        total += static_cast<long long>(s.out_ch) * s.in_ch * s.ksize * s.ksize + 2LL * s.out_ch;
    return total;
}

namespace detail {

inline ConvParam* layer_by_name(ParameterSet& p, const std::string& name) {
    if (name == "head") return &p.head;
    if (name == "tail") return &p.tail;
    if (name == "up_main") return &p.up_main;
    if (name == "skip_in") return &p.skip_in;
    if (name == "up_skip") return &p.up_skip;
    if (name.rfind("block", 0) == 0) {
        const auto dot = name.find('.');
        const int idx = std::stoi(name.substr(5, dot - 5));
        if (idx < 0 || idx >= static_cast<int>(p.blocks.size())) return nullptr;
        const std::string part = name.substr(dot + 1);
        if (part == "expand") return &p.blocks[static_cast<std::size_t>(idx)].expand;
        if (part == "project") return &p.blocks[static_cast<std::size_t>(idx)].project;
    }
    return nullptr;
}

} // namespace detail

// Flat view over every parameter array, in a fixed canonical order; this is
// the single source of truth for the optimizer and the checkpoint format.
struct ArrayRef {
    std::string name;
    std::vector<double>* data;
    std::vector<int> dims;
};

inline std::vector<ArrayRef> parameter_arrays(ParameterSet& p, const NetworkConfig& cfg) {
    std::vector<ArrayRef> out;
    for (const LayerSpec& s : layer_specs(cfg)) {
        ConvParam* layer = detail::layer_by_name(p, s.name);
        if (!layer) throw Error("parameter_arrays: missing layer " + s.name);
        out.push_back({s.name + ".v", &layer->v.d, {s.out_ch, s.in_ch, s.ksize, s.ksize}});
        out.push_back({s.name + ".g", &layer->g, {s.out_ch}});
        out.push_back({s.name + ".b", &layer->b, {s.out_ch}});
    }
    return out;
}

// Allocates a ParameterSet with every array zero-filled, shaped per config.
inline ParameterSet zero_parameters(const NetworkConfig& cfg) {
    ParameterSet p;
    p.blocks.resize(static_cast<std::size_t>(cfg.num_blocks));
    for (const LayerSpec& s : layer_specs(cfg)) {
        ConvParam* layer = detail::layer_by_name(p, s.name);
        layer->v = Tensor4(s.out_ch, s.in_ch, s.ksize, s.ksize, 0.0);
        layer->g.assign(static_cast<std::size_t>(s.out_ch), 0.0);
        layer->b.assign(static_cast<std::size_t>(s.out_ch), 0.0);
    }
    return p;
}

// He-style fan-in initialization of the directions; g starts at the
// per-output-channel norm of v so the effective kernel equals v exactly.
// Each residual branch's closing conv is damped so the eight block additions
// do not compound the activation variance at the start of training.
inline ParameterSet init(const NetworkConfig& cfg) {
    ParameterSet p = zero_parameters(cfg);
    std::uint64_t ctr = 0;
    for (const LayerSpec& s : layer_specs(cfg)) {
        ConvParam* layer = detail::layer_by_name(p, s.name);
        double sd = std::sqrt(2.0 / (static_cast<double>(s.in_ch) * s.ksize * s.ksize));
        if (s.name.size() > 8 && s.name.substr(s.name.size() - 8) == ".project") sd *= 0.1;
        for (double& v : layer->v.d) v = sd * keyed_normal(cfg.seed, ctr++);
        const std::size_t per = layer->v.per_out();
        for (int o = 0; o < s.out_ch; ++o) {
            double norm2 = 0.0;
            for (std::size_t j = 0; j < per; ++j) {
                const double v = layer->v.d[static_cast<std::size_t>(o) * per + j];
                norm2 += v * v;
            }
            layer->g[static_cast<std::size_t>(o)] = std::sqrt(norm2);
        }
    }
    return p;
}

// w = g * v / ||v|| per output channel; the per-channel Euclidean norm of the
// result is exactly g, and the map is invariant to positive rescaling of v.
inline Tensor4 weight_norm_effective(const Tensor4& v, const std::vector<double>& g) {
    if (static_cast<int>(g.size()) != v.o)
        throw InputError("weight_norm_effective: scale count does not match output channels");
    Tensor4 w = v;
    const std::size_t per = v.per_out();
    for (int o = 0; o < v.o; ++o) {
        double norm2 = 0.0;
        for (std::size_t j = 0; j < per; ++j) {
            const double x = v.d[static_cast<std::size_t>(o) * per + j];
            norm2 += x * x;
        }
        const double norm = std::sqrt(norm2);
        if (norm == 0.0) throw InputError("weight_norm_effective: zero-norm direction");
        const double scale = g[static_cast<std::size_t>(o)] / norm;
        for (std::size_t j = 0; j < per; ++j)
            w.d[static_cast<std::size_t>(o) * per + j] *= scale;
    }
    return w;
}

// Materialized (effective-weight) layer. Norms are kept for the backward
// mapping from d(effective w) to (dv, dg). Zero-norm directions are treated
// as a zero kernel, which keeps the all-zero ParameterSet well-defined.
struct EffConv {
    Tensor4 w;
    std::vector<double> b;
    std::vector<double> norm;
};

struct EffNet {
    NetworkConfig cfg;
    EffConv head;
    std::vector<std::pair<EffConv, EffConv>> blocks; // (expand, project)
    EffConv tail;
    EffConv up_main;
    EffConv skip_in;
    EffConv up_skip;
};

namespace detail {

inline EffConv materialize_conv(const ConvParam& p) {
    EffConv e;
    e.w = p.v;
    e.b = p.b;
    const std::size_t per = p.v.per_out();
    e.norm.resize(static_cast<std::size_t>(p.v.o));
    for (int o = 0; o < p.v.o; ++o) {
        double norm2 = 0.0;
        for (std::size_t j = 0; j < per; ++j) {
            const double x = p.v.d[static_cast<std::size_t>(o) * per + j];
            norm2 += x * x;
        }
        const double norm = std::sqrt(norm2);
        e.norm[static_cast<std::size_t>(o)] = norm;
        const double scale = norm > 0.0 ? p.g[static_cast<std::size_t>(o)] / norm : 0.0;
        for (std::size_t j = 0; j < per; ++j)
            e.w.d[static_cast<std::size_t>(o) * per + j] *= scale;
    }
    return e;
}

// Given dL/d(effective w), accumulate dL/dv and dL/dg.
inline void weight_norm_backward(const ConvParam& p, const EffConv& eff, const Tensor4& dw,
                                 ConvParam& grad) {
    const std::size_t per = p.v.per_out();
    for (int o = 0; o < p.v.o; ++o) {
        const std::size_t base = static_cast<std::size_t>(o) * per;
        const double norm = std::max(eff.norm[static_cast<std::size_t>(o)], 1e-300);
        const double inv_norm = 1.0 / norm;
        double dg = 0.0;
        for (std::size_t j = 0; j < per; ++j)
            dg += dw.d[base + j] * p.v.d[base + j] * inv_norm;
        grad.g[static_cast<std::size_t>(o)] += dg;
        const double gscale = p.g[static_cast<std::size_t>(o)] * inv_norm;
        for (std::size_t j = 0; j < per; ++j) {
            const double vhat = p.v.d[base + j] * inv_norm;
            grad.v.d[base + j] += gscale * (dw.d[base + j] - dg * vhat);
        }
    }
}

inline Tensor3 pad_input(const Tensor3& in, int pad, PadMode mode) {
    Tensor3 out(in.ch, in.h + 2 * pad, in.w + 2 * pad);
    for (int c = 0; c < in.ch; ++c) {
        const double* src = in.plane(c);
        double* dst = out.plane(c);
        for (int y = 0; y < out.h; ++y) {
            int sy = y - pad;
            if (mode == PadMode::replicate) {
                sy = sy < 0 ? 0 : (sy >= in.h ? in.h - 1 : sy);
            } else {
                sy = ((sy % in.h) + in.h) % in.h;
            }
            for (int x = 0; x < out.w; ++x) {
                int sx = x - pad;
                if (mode == PadMode::replicate) {
                    sx = sx < 0 ? 0 : (sx >= in.w ? in.w - 1 : sx);
                } else {
                    sx = ((sx % in.w) + in.w) % in.w;
                }
                dst[static_cast<std::size_t>(y) * out.w + x] =
                    src[static_cast<std::size_t>(sy) * in.w + sx];
            }
        }
    }
    return out;
}

// Accumulates gradients that landed in the padded border back onto the source
// pixels they were read from.
inline void fold_padding(const Tensor3& dpad, Tensor3& din, int pad, PadMode mode) {
    for (int c = 0; c < din.ch; ++c) {
        const double* src = dpad.plane(c);
        double* dst = din.plane(c);
        for (int y = 0; y < dpad.h; ++y) {
            int sy = y - pad;
            if (mode == PadMode::replicate) {
                sy = sy < 0 ? 0 : (sy >= din.h ? din.h - 1 : sy);
            } else {
                sy = ((sy % din.h) + din.h) % din.h;
            }
            for (int x = 0; x < dpad.w; ++x) {
                int sx = x - pad;
                if (mode == PadMode::replicate) {
                    sx = sx < 0 ? 0 : (sx >= din.w ? din.w - 1 : sx);
                } else {
                    sx = ((sx % din.w) + din.w) % din.w;
                }
                dst[static_cast<std::size_t>(sy) * din.w + sx] +=
                    src[static_cast<std::size_t>(y) * dpad.w + x];
            }
        }
    }
}

// Same-padding convolution. Inner loop runs contiguously over x so the
// compiler can vectorize the multiply-accumulate.
inline Tensor3 conv_forward(const EffConv& layer, const Tensor3& in, PadMode mode) {
    const int K = layer.w.kh, pad = (K - 1) / 2;
    const Tensor3 padded = pad_input(in, pad, mode);
    Tensor3 out(layer.w.o, in.h, in.w);
    for (int o = 0; o < layer.w.o; ++o) {
        double* dst = out.plane(o);
        const double bias = layer.b[static_cast<std::size_t>(o)];
        for (std::size_t i = 0; i < static_cast<std::size_t>(in.h) * in.w; ++i) dst[i] = bias;
        for (int ci = 0; ci < layer.w.i; ++ci) {
            const double* src = padded.plane(ci);
            for (int ky = 0; ky < K; ++ky) {
                for (int kx = 0; kx < K; ++kx) {
                    const double wv = layer.w.at(o, ci, ky, kx);
                    for (int y = 0; y < in.h; ++y) {
                        const double* srow =
                            src + static_cast<std::size_t>(y + ky) * padded.w + kx;
                        double* drow = dst + static_cast<std::size_t>(y) * in.w;
                        for (int x = 0; x < in.w; ++x) drow[x] += wv * srow[x];
                    }
                }
            }
        }
    }
    return out;
}

struct ConvGrads {
    Tensor3 din;
    Tensor4 dw;
    std::vector<double> db;
};

inline ConvGrads conv_backward(const EffConv& layer, const Tensor3& in, const Tensor3& dout,
                               PadMode mode, bool want_dinput) {
    const int K = layer.w.kh, pad = (K - 1) / 2;
    const Tensor3 padded = pad_input(in, pad, mode);
    ConvGrads g;
    g.dw = Tensor4(layer.w.o, layer.w.i, K, K, 0.0);
    g.db.assign(static_cast<std::size_t>(layer.w.o), 0.0);
    Tensor3 dpad;
    if (want_dinput) dpad = Tensor3(in.ch, padded.h, padded.w, 0.0);

    const std::size_t hw = static_cast<std::size_t>(in.h) * in.w;
    for (int o = 0; o < layer.w.o; ++o) {
        const double* dsrc = dout.plane(o);
        double acc = 0.0;
        for (std::size_t i = 0; i < hw; ++i) acc += dsrc[i];
        g.db[static_cast<std::size_t>(o)] = acc;
        for (int ci = 0; ci < layer.w.i; ++ci) {
            const double* src = padded.plane(ci);
            double* dpsrc = want_dinput ? dpad.plane(ci) : nullptr;
            for (int ky = 0; ky < K; ++ky) {
                for (int kx = 0; kx < K; ++kx) {
                    const double wv = layer.w.at(o, ci, ky, kx);
                    double wacc = 0.0;
                    for (int y = 0; y < in.h; ++y) {
                        const double* srow =
                            src + static_cast<std::size_t>(y + ky) * padded.w + kx;
                        const double* drow = dsrc + static_cast<std::size_t>(y) * in.w;
                        if (want_dinput) {
                            double* prow = dpsrc + static_cast<std::size_t>(y + ky) * padded.w + kx;
                            for (int x = 0; x < in.w; ++x) {
                                wacc += drow[x] * srow[x];
                                prow[x] += wv * drow[x];
                            }
                        } else {
                            for (int x = 0; x < in.w; ++x) wacc += drow[x] * srow[x];
                        }
                    }
                    g.dw.at(o, ci, ky, kx) = wacc;
                }
            }
        }
    }
    if (want_dinput) {
        g.din = Tensor3(in.ch, in.h, in.w, 0.0);
        fold_padding(dpad, g.din, pad, mode);
    }
    return g;
}

// Transposed convolution, stride k, kernel 2k, pad k/2; output is exactly
// k times the input extent. Out-of-range taps are dropped (replicate mode)
// or wrapped (periodic mode, used by the shift-covariance tests).
inline Tensor3 tconv_forward(const EffConv& layer, const Tensor3& in, int stride, PadMode mode) {
    const int K = layer.w.kh, pad = stride / 2;
    Tensor3 out(layer.w.o, in.h * stride, in.w * stride);
    for (int o = 0; o < layer.w.o; ++o) {
        double* dst = out.plane(o);
        const double bias = layer.b[static_cast<std::size_t>(o)];
        for (std::size_t i = 0; i < static_cast<std::size_t>(out.h) * out.w; ++i) dst[i] = bias;
        for (int ci = 0; ci < layer.w.i; ++ci) {
            const double* src = in.plane(ci);
            for (int ky = 0; ky < K; ++ky) {
                for (int kx = 0; kx < K; ++kx) {
                    const double wv = layer.w.at(o, ci, ky, kx);
                    for (int r = 0; r < in.h; ++r) {
                        int y = r * stride - pad + ky;
                        if (mode == PadMode::periodic) {
                            y = ((y % out.h) + out.h) % out.h;
                        } else if (y < 0 || y >= out.h) {
                            continue;
                        }
                        const double* srow = src + static_cast<std::size_t>(r) * in.w;
                        double* drow = dst + static_cast<std::size_t>(y) * out.w;
                        for (int c = 0; c < in.w; ++c) {
                            int x = c * stride - pad + kx;
                            if (mode == PadMode::periodic) {
                                x = ((x % out.w) + out.w) % out.w;
                            } else if (x < 0 || x >= out.w) {
                                continue;
                            }
                            drow[x] += wv * srow[c];
                        }
                    }
                }
            }
        }
    }
    return out;
}

inline ConvGrads tconv_backward(const EffConv& layer, const Tensor3& in, const Tensor3& dout,
                                int stride, PadMode mode, bool want_dinput) {
    const int K = layer.w.kh, pad = stride / 2;
    ConvGrads g;
    g.dw = Tensor4(layer.w.o, layer.w.i, K, K, 0.0);
    g.db.assign(static_cast<std::size_t>(layer.w.o), 0.0);
    if (want_dinput) g.din = Tensor3(in.ch, in.h, in.w, 0.0);

    const std::size_t out_hw = static_cast<std::size_t>(dout.h) * dout.w;
    for (int o = 0; o < layer.w.o; ++o) {
        const double* dsrc = dout.plane(o);
        double acc = 0.0;
        for (std::size_t i = 0; i < out_hw; ++i) acc += dsrc[i];
        g.db[static_cast<std::size_t>(o)] = acc;
        for (int ci = 0; ci < layer.w.i; ++ci) {
            const double* src = in.plane(ci);
            double* dsrc_in = want_dinput ? g.din.plane(ci) : nullptr;
            for (int ky = 0; ky < K; ++ky) {
                for (int kx = 0; kx < K; ++kx) {
                    const double wv = layer.w.at(o, ci, ky, kx);
                    double wacc = 0.0;
                    for (int r = 0; r < in.h; ++r) {
                        int y = r * stride - pad + ky;
                        if (mode == PadMode::periodic) {
                            y = ((y % dout.h) + dout.h) % dout.h;
                        } else if (y < 0 || y >= dout.h) {
                            continue;
                        }
                        const double* srow = src + static_cast<std::size_t>(r) * in.w;
                        const double* drow = dsrc + static_cast<std::size_t>(y) * dout.w;
                        for (int c = 0; c < in.w; ++c) {
                            int x = c * stride - pad + kx;
                            if (mode == PadMode::periodic) {
                                x = ((x % dout.w) + dout.w) % dout.w;
                            } else if (x < 0 || x >= dout.w) {
                                continue;
                            }
                            wacc += srow[c] * drow[x];
                            if (want_dinput)
                                dsrc_in[static_cast<std::size_t>(r) * in.w + c] += wv * drow[x];
                        }
                    }
                    g.dw.at(o, ci, ky, kx) = wacc;
                }
            }
        }
    }
    return g;
}

} // namespace detail

inline EffNet materialize(const ParameterSet& params, const NetworkConfig& cfg) {
    cfg.validate();
    EffNet net;
    net.cfg = cfg;
    net.head = detail::materialize_conv(params.head);
    for (const BlockParam& b : params.blocks)
        net.blocks.emplace_back(detail::materialize_conv(b.expand),
                                detail::materialize_conv(b.project));
    net.tail = detail::materialize_conv(params.tail);
    net.up_main = detail::materialize_conv(params.up_main);
    net.skip_in = detail::materialize_conv(params.skip_in);
    net.up_skip = detail::materialize_conv(params.up_skip);
    return net;
}

// Activations cached by the training forward pass for backpropagation.
struct ForwardCtx {
    Tensor3 z0;
    Tensor3 head_out;
    std::vector<Tensor3> block_in;
    std::vector<Tensor3> expand_pre;
    std::vector<Tensor3> relu_out;
    Tensor3 body_out;
    Tensor3 sum_body; // tail output + head skip, input of up_main
    Tensor3 skip_mid;
};

// Full computation graph:
//   normalize -> head conv -> blocks (expand, ReLU, project, residual add)
//   -> tail conv -> + head skip -> transposed conv, summed with the skip
//   branch (conv -> transposed conv on the normalized input) -> denormalize.
// Clipping to [0,1] is applied at inference only.
inline ImageGrid forward(const EffNet& net, const NormalizationStats& stats, const ImageGrid& l,
                         bool clip_output, PadMode mode = PadMode::replicate,
                         ForwardCtx* ctx = nullptr) {
    const NetworkConfig& cfg = net.cfg;
    if (l.height < cfg.kernel_size || l.width < cfg.kernel_size)
        throw InputError("forward: input smaller than kernel support");

    Tensor3 z0 = to_tensor(normalize(l, stats));
    Tensor3 h = detail::conv_forward(net.head, z0, mode);
    Tensor3 head_out = h;
    if (ctx) {
        ctx->z0 = z0;
        ctx->head_out = head_out;
        ctx->block_in.clear();
        ctx->expand_pre.clear();
        ctx->relu_out.clear();
    }

    for (std::size_t bi = 0; bi < net.blocks.size(); ++bi) {
        if (ctx) ctx->block_in.push_back(h);
        Tensor3 pre = detail::conv_forward(net.blocks[bi].first, h, mode);
        if (ctx) ctx->expand_pre.push_back(pre);
        for (double& v : pre.d) v = v > 0.0 ? v : 0.0;
        if (ctx) ctx->relu_out.push_back(pre);
        Tensor3 proj = detail::conv_forward(net.blocks[bi].second, pre, mode);
        for (std::size_t i = 0; i < h.d.size(); ++i) h.d[i] += proj.d[i];
    }
    if (ctx) ctx->body_out = h;

    Tensor3 t = detail::conv_forward(net.tail, h, mode);
    for (std::size_t i = 0; i < t.d.size(); ++i) t.d[i] += head_out.d[i];
    if (ctx) ctx->sum_body = t;

    Tensor3 up = detail::tconv_forward(net.up_main, t, cfg.factor, mode);

    Tensor3 skip_mid = detail::conv_forward(net.skip_in, z0, mode);
    if (ctx) ctx->skip_mid = skip_mid;
    Tensor3 up_skip = detail::tconv_forward(net.up_skip, skip_mid, cfg.factor, mode);

    for (std::size_t i = 0; i < up.d.size(); ++i) up.d[i] += up_skip.d[i];
    ImageGrid out = denormalize(to_image(up), stats);
    if (clip_output)
        for (double& v : out.data) v = std::clamp(v, 0.0, 1.0);
    return out;
}

// Gradients of a scalar loss with respect to every parameter, given dL/dP on
// the (unclipped) prediction. Mirrors forward exactly.
inline ParameterSet backward(const EffNet& net, const ParameterSet& params,
                             const NormalizationStats& stats, const ForwardCtx& ctx,
                             const ImageGrid& dP, PadMode mode = PadMode::replicate) {
    const NetworkConfig& cfg = net.cfg;
    ParameterSet grads = zero_parameters(cfg);

    Tensor3 dyhat = to_tensor(dP);
    for (double& v : dyhat.d) v *= stats.std;

    // Skip branch.
    {
        detail::ConvGrads gu =
            detail::tconv_backward(net.up_skip, ctx.skip_mid, dyhat, cfg.factor, mode, true);
        detail::weight_norm_backward(params.up_skip, net.up_skip, gu.dw, grads.up_skip);
        for (std::size_t i = 0; i < gu.db.size(); ++i) grads.up_skip.b[i] += gu.db[i];
        detail::ConvGrads gs = detail::conv_backward(net.skip_in, ctx.z0, gu.din, mode, false);
        detail::weight_norm_backward(params.skip_in, net.skip_in, gs.dw, grads.skip_in);
        for (std::size_t i = 0; i < gs.db.size(); ++i) grads.skip_in.b[i] += gs.db[i];
    }

    // Main branch.
    detail::ConvGrads gm =
        detail::tconv_backward(net.up_main, ctx.sum_body, dyhat, cfg.factor, mode, true);
    detail::weight_norm_backward(params.up_main, net.up_main, gm.dw, grads.up_main);
    for (std::size_t i = 0; i < gm.db.size(); ++i) grads.up_main.b[i] += gm.db[i];

    Tensor3 dhead = gm.din; // gradient reaching head_out through the long skip

    detail::ConvGrads gt = detail::conv_backward(net.tail, ctx.body_out, gm.din, mode, true);
    detail::weight_norm_backward(params.tail, net.tail, gt.dw, grads.tail);
    for (std::size_t i = 0; i < gt.db.size(); ++i) grads.tail.b[i] += gt.db[i];

    Tensor3 dbody = gt.din;
    for (std::size_t bi = net.blocks.size(); bi-- > 0;) {
        detail::ConvGrads gp = detail::conv_backward(net.blocks[bi].second, ctx.relu_out[bi],
                                                     dbody, mode, true);
        detail::weight_norm_backward(params.blocks[bi].project, net.blocks[bi].second, gp.dw,
                                     grads.blocks[bi].project);
        for (std::size_t i = 0; i < gp.db.size(); ++i) grads.blocks[bi].project.b[i] += gp.db[i];

        Tensor3& dpre = gp.din;
        const Tensor3& pre = ctx.expand_pre[bi];
        for (std::size_t i = 0; i < dpre.d.size(); ++i)
            if (pre.d[i] <= 0.0) dpre.d[i] = 0.0;

        detail::ConvGrads ge =
            detail::conv_backward(net.blocks[bi].first, ctx.block_in[bi], dpre, mode, true);
        detail::weight_norm_backward(params.blocks[bi].expand, net.blocks[bi].first, ge.dw,
                                     grads.blocks[bi].expand);
        for (std::size_t i = 0; i < ge.db.size(); ++i) grads.blocks[bi].expand.b[i] += ge.db[i];

        for (std::size_t i = 0; i < dbody.d.size(); ++i) dbody.d[i] += ge.din.d[i];
    }

    for (std::size_t i = 0; i < dhead.d.size(); ++i) dhead.d[i] += dbody.d[i];
    detail::ConvGrads gh = detail::conv_backward(net.head, ctx.z0, dhead, mode, false);
    detail::weight_norm_backward(params.head, net.head, gh.dw, grads.head);
    for (std::size_t i = 0; i < gh.db.size(); ++i) grads.head.b[i] += gh.db[i];

    return grads;
}

} // namespace noisr

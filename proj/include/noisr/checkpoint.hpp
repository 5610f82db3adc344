#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "noisr/common.hpp"
#include "noisr/image.hpp"
#include "noisr/network.hpp"

namespace noisr {

struct TrainMeta {
    std::uint32_t epoch = 0;
    double best_val_total = 0.0;
    double final_train_total = 0.0;
};

struct Checkpoint {
    NetworkConfig config;
    ParameterSet params;
    NormalizationStats stats;
    TrainMeta meta;
};

namespace detail {

inline constexpr char kCkptMagic[8] = {'N', 'O', 'I', 'S', 'R', 'C', 'K', '1'};
inline constexpr std::uint32_t kCkptVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("checkpoint: truncated file");
    return v;
}

} // namespace detail

// Little-endian container: magic, version, config block, normalization stats,
// training metadata, then named arrays as (name length, name, rank, dims,
// raw 32-bit float data). Parameters are stored in float32.
inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("save_checkpoint: cannot write " + path);
    out.write(detail::kCkptMagic, 8);
    detail::put(out, detail::kCkptVersion);
    detail::put<std::int32_t>(out, ckpt.config.factor);
    detail::put<std::int32_t>(out, ckpt.config.kernel_size);
    detail::put<std::int32_t>(out, ckpt.config.num_blocks);
    detail::put<std::int32_t>(out, ckpt.config.width);
    detail::put<std::int32_t>(out, ckpt.config.skip_width);
    detail::put<std::int32_t>(out, ckpt.config.expansion);
    detail::put<std::uint64_t>(out, ckpt.config.seed);
    detail::put<double>(out, ckpt.stats.mean);
    detail::put<double>(out, ckpt.stats.std);
    detail::put<std::uint32_t>(out, ckpt.meta.epoch);
    detail::put<double>(out, ckpt.meta.best_val_total);
    detail::put<double>(out, ckpt.meta.final_train_total);

    ParameterSet& params = const_cast<ParameterSet&>(ckpt.params);
    auto arrays = parameter_arrays(params, ckpt.config);
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(arrays.size()));
    for (const ArrayRef& a : arrays) {
        detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
        out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
        detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(a.dims.size()));
        for (int d : a.dims) detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        std::vector<float> f(a.data->size());
        for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>((*a.data)[i]);
        out.write(reinterpret_cast<const char*>(f.data()),
                  static_cast<std::streamsize>(f.size() * sizeof(float)));
    }
    if (!out) throw InputError("save_checkpoint: write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("load_checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, detail::kCkptMagic, 8) != 0)
        throw DataError("load_checkpoint: bad magic (not a checkpoint): " + path);
    const auto version = detail::get<std::uint32_t>(in);
    if (version != detail::kCkptVersion)
        throw DataError("load_checkpoint: unsupported format version " + std::to_string(version));

    Checkpoint ckpt;
    ckpt.config.factor = detail::get<std::int32_t>(in);
    ckpt.config.kernel_size = detail::get<std::int32_t>(in);
    ckpt.config.num_blocks = detail::get<std::int32_t>(in);
    ckpt.config.width = detail::get<std::int32_t>(in);
    ckpt.config.skip_width = detail::get<std::int32_t>(in);
    ckpt.config.expansion = detail::get<std::int32_t>(in);
    ckpt.config.seed = detail::get<std::uint64_t>(in);
    try {
        ckpt.config.validate();
    } catch (const InputError& e) {
        throw DataError(std::string("load_checkpoint: invalid config: ") + e.what());
    }
    ckpt.stats.mean = detail::get<double>(in);
    ckpt.stats.std = detail::get<double>(in);
    if (!(ckpt.stats.std > 0.0)) throw DataError("load_checkpoint: non-positive std");
    ckpt.meta.epoch = detail::get<std::uint32_t>(in);
    ckpt.meta.best_val_total = detail::get<double>(in);
    ckpt.meta.final_train_total = detail::get<double>(in);

    ckpt.params = zero_parameters(ckpt.config);
    auto arrays = parameter_arrays(ckpt.params, ckpt.config);
    const auto count = detail::get<std::uint32_t>(in);
    if (count != arrays.size())
        throw DataError("load_checkpoint: array count does not match config");
    for (ArrayRef& a : arrays) {
        const auto name_len = detail::get<std::uint32_t>(in);
        if (name_len > 4096) throw DataError("load_checkpoint: implausible name length");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw DataError("checkpoint: truncated file");
        if (name != a.name)
            throw DataError("load_checkpoint: unexpected array '" + name + "' (wanted '" +
                            a.name + "')");
        const auto rank = detail::get<std::uint32_t>(in);
        if (rank != a.dims.size()) throw DataError("load_checkpoint: rank mismatch for " + name);
        std::size_t total = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            const auto d = detail::get<std::uint32_t>(in);
            if (d != static_cast<std::uint32_t>(a.dims[r]))
                throw DataError("load_checkpoint: shape mismatch for " + name);
            total *= d;
        }
        if (total != a.data->size()) throw DataError("load_checkpoint: size mismatch for " + name);
        std::vector<float> f(total);
        in.read(reinterpret_cast<char*>(f.data()),
                static_cast<std::streamsize>(total * sizeof(float)));
        if (!in) throw DataError("checkpoint: truncated file");
        for (std::size_t i = 0; i < total; ++i) {
            if (!std::isfinite(f[i])) throw DataError("load_checkpoint: non-finite weight in " + name);
            (*a.data)[i] = static_cast<double>(f[i]);
        }
    }
    return ckpt;
}

} // namespace noisr

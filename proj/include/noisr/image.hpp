#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "noisr/common.hpp"

namespace noisr {

// 2D grayscale intensity field in [0,1], row-major. Shared carrier for
// ground-truth, noisy, low-resolution and predicted images.
struct ImageGrid {
    int height = 0;
    int width = 0;
    std::vector<double> data;

    ImageGrid() = default;
    ImageGrid(int h, int w, double fill = 0.0)
        : height(h), width(w), data(static_cast<std::size_t>(check_dims(h, w)) , fill) {}

    double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
    double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }

    std::size_t size() const { return data.size(); }
    bool same_shape(const ImageGrid& o) const { return height == o.height && width == o.width; }

private:
    static std::size_t check_dims(int h, int w) {
        if (h < 1 || w < 1) throw InputError("ImageGrid dimensions must be at least 1x1");
        return static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    }
};

inline void require_same_shape(const ImageGrid& a, const ImageGrid& b, const char* what) {
    if (!a.same_shape(b))
        throw InputError(std::string(what) + ": dimension mismatch (" +
                         std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                         std::to_string(b.height) + "x" + std::to_string(b.width) + ")");
}

inline ImageGrid clip01(ImageGrid img) {
    for (double& v : img.data) v = std::clamp(v, 0.0, 1.0);
    return img;
}

struct NormalizationStats {
    double mean = 0.0;
    double std = 1.0;
};

inline ImageGrid normalize(const ImageGrid& img, const NormalizationStats& stats) {
    if (!(stats.std > 0.0)) throw InputError("normalize: std must be positive");
    ImageGrid out = img;
    for (double& v : out.data) v = (v - stats.mean) / stats.std;
    return out;
}

inline ImageGrid denormalize(const ImageGrid& img, const NormalizationStats& stats) {
    if (!(stats.std > 0.0)) throw InputError("denormalize: std must be positive");
    ImageGrid out = img;
    for (double& v : out.data) v = v * stats.std + stats.mean;
    return out;
}

// Largest centered sub-rectangle whose dims are multiples of k. Extra
// rows/columns on odd margins come off the bottom/right.
inline ImageGrid center_crop_to_multiple(const ImageGrid& img, int k) {
    if (k < 1) throw InputError("center_crop_to_multiple: factor must be positive");
    if (img.height < k || img.width < k)
        throw InputError("center_crop_to_multiple: image smaller than factor");
    const int h = img.height - img.height % k;
    const int w = img.width - img.width % k;
    const int r0 = (img.height - h) / 2;
    const int c0 = (img.width - w) / 2;
    ImageGrid out(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) out(r, c) = img(r0 + r, c0 + c);
    return out;
}

// Pooled pixel mean/std over a collection; degenerate (near-zero) spread
// falls back to std = 1 so normalization stays invertible.
inline NormalizationStats compute_dataset_stats(const std::vector<ImageGrid>& images) {
    if (images.empty()) throw InputError("compute_dataset_stats: empty collection");
    double sum = 0.0, sumsq = 0.0;
    std::size_t n = 0;
    for (const ImageGrid& img : images) {
        for (double v : img.data) {
            sum += v;
            sumsq += v * v;
        }
        n += img.size();
    }
    const double mean = sum / static_cast<double>(n);
    double var = sumsq / static_cast<double>(n) - mean * mean;
    if (var < 0.0) var = 0.0;
    double std = std::sqrt(var);
    if (std < 1e-8) std = 1.0;
    return NormalizationStats{mean, std};
}

} // namespace noisr

#pragma once

#include <vector>

#include "noisr/common.hpp"
#include "noisr/image.hpp"

namespace noisr {

// Channel-major activation tensor (ch, h, w).
struct Tensor3 {
    int ch = 0, h = 0, w = 0;
    std::vector<double> d;

    Tensor3() = default;
    Tensor3(int c_, int h_, int w_, double fill = 0.0)
        : ch(c_), h(h_), w(w_),
          d(static_cast<std::size_t>(c_) * h_ * w_, fill) {}

    double* plane(int c) { return d.data() + static_cast<std::size_t>(c) * h * w; }
    const double* plane(int c) const { return d.data() + static_cast<std::size_t>(c) * h * w; }
    double& at(int c, int y, int x) {
        return d[(static_cast<std::size_t>(c) * h + y) * w + x];
    }
    double at(int c, int y, int x) const {
        return d[(static_cast<std::size_t>(c) * h + y) * w + x];
    }
    std::size_t size() const { return d.size(); }
};

// Kernel weights (out_ch, in_ch, kh, kw).
struct Tensor4 {
    int o = 0, i = 0, kh = 0, kw = 0;
    std::vector<double> d;

    Tensor4() = default;
    Tensor4(int o_, int i_, int kh_, int kw_, double fill = 0.0)
        : o(o_), i(i_), kh(kh_), kw(kw_),
          d(static_cast<std::size_t>(o_) * i_ * kh_ * kw_, fill) {}

    double& at(int oo, int ii, int ky, int kx) {
        return d[((static_cast<std::size_t>(oo) * i + ii) * kh + ky) * kw + kx];
    }
    double at(int oo, int ii, int ky, int kx) const {
        return d[((static_cast<std::size_t>(oo) * i + ii) * kh + ky) * kw + kx];
    }
    std::size_t per_out() const { return static_cast<std::size_t>(i) * kh * kw; }
    std::size_t size() const { return d.size(); }
};

inline Tensor3 to_tensor(const ImageGrid& img) {
    Tensor3 t(1, img.height, img.width);
    t.d = img.data;
    return t;
}

inline ImageGrid to_image(const Tensor3& t) {
    if (t.ch != 1) throw Error("to_image: tensor is not single-channel");
    ImageGrid img(t.h, t.w);
    img.data = t.d;
    return img;
}

} // namespace noisr

#pragma once

#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <png.h>

#include "noisr/common.hpp"
#include "noisr/image.hpp"

namespace noisr {

// Round-half-up 8-bit quantization; |load(save(x)) - clip(x)| <= 1/510.
inline int quantize_u8(double v) {
    v = std::clamp(v, 0.0, 1.0);
    const int q = static_cast<int>(std::floor(v * 255.0 + 0.5));
    return std::clamp(q, 0, 255);
}

// In-memory equivalent of a save/load round trip.
inline ImageGrid quantize_sim(const ImageGrid& img) {
    ImageGrid out = img;
    for (double& v : out.data) v = quantize_u8(v) / 255.0;
    return out;
}

namespace detail {

inline double luminance601(double r, double g, double b) {
    return 0.299 * r + 0.587 * g + 0.114 * b;
}

inline int pgm_next_token(std::istream& in, std::string& tok) {
    tok.clear();
    int ch = in.get();
    while (ch != EOF) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = in.get();
        } else if (std::isspace(ch)) {
            ch = in.get();
        } else {
            break;
        }
    }
    while (ch != EOF && !std::isspace(ch)) {
        tok.push_back(static_cast<char>(ch));
        ch = in.get();
    }
    return tok.empty() ? EOF : 0;
}

inline ImageGrid load_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("load_image: cannot open " + path);
    std::string tok;
    if (pgm_next_token(in, tok) == EOF || tok != "P5")
        throw InputError("load_image: not a binary PGM (P5): " + path);
    int w = 0, h = 0, maxval = 0;
    auto header_int = [&](int& value) {
        if (pgm_next_token(in, tok) == EOF)
            throw DataError("load_image: truncated PGM header: " + path);
        try {
            value = std::stoi(tok);
        } catch (const std::exception&) {
            throw DataError("load_image: malformed PGM header: " + path);
        }
    };
    header_int(w);
    header_int(h);
    header_int(maxval);
    if (w < 1 || h < 1) throw InputError("load_image: zero-size image: " + path);
    if (maxval != 255) throw InputError("load_image: only 8-bit PGM supported: " + path);
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size()))
        throw DataError("load_image: truncated PGM payload: " + path);
    ImageGrid img(h, w);
    for (std::size_t i = 0; i < raw.size(); ++i) img.data[i] = raw[i] / 255.0;
    return img;
}

inline void save_pgm(const ImageGrid& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("save_image: cannot write " + path);
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> raw(img.size());
    for (std::size_t i = 0; i < raw.size(); ++i)
        raw[i] = static_cast<unsigned char>(quantize_u8(img.data[i]));
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw InputError("save_image: write failed: " + path);
}

struct PngReadCtx {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* fp = nullptr;
    ~PngReadCtx() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) std::fclose(fp);
    }
};

struct PngWriteCtx {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* fp = nullptr;
    ~PngWriteCtx() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (fp) std::fclose(fp);
    }
};

inline ImageGrid load_png(const std::string& path) {
    PngReadCtx ctx;
    ctx.fp = std::fopen(path.c_str(), "rb");
    if (!ctx.fp) throw InputError("load_image: cannot open " + path);
    ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!ctx.png) throw Error("load_image: libpng init failed");
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.info) throw Error("load_image: libpng init failed");
    if (setjmp(png_jmpbuf(ctx.png))) throw DataError("load_image: corrupt PNG: " + path);

    png_init_io(ctx.png, ctx.fp);
    png_read_info(ctx.png, ctx.info);

    const png_uint_32 w = png_get_image_width(ctx.png, ctx.info);
    const png_uint_32 h = png_get_image_height(ctx.png, ctx.info);
    const int bit_depth = png_get_bit_depth(ctx.png, ctx.info);
    const int color_type = png_get_color_type(ctx.png, ctx.info);
    if (w < 1 || h < 1) throw InputError("load_image: zero-size image: " + path);
    if (bit_depth == 16)
        throw InputError("load_image: 16-bit PNG unsupported: " + path);

    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(ctx.png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(ctx.png);
    if (png_get_valid(ctx.png, ctx.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(ctx.png);
    if ((color_type & PNG_COLOR_MASK_ALPHA) || png_get_valid(ctx.png, ctx.info, PNG_INFO_tRNS))
        png_set_strip_alpha(ctx.png);
    png_set_interlace_handling(ctx.png);
    png_read_update_info(ctx.png, ctx.info);

    const int channels = png_get_channels(ctx.png, ctx.info);
    if (channels != 1 && channels != 3)
        throw InputError("load_image: unsupported PNG channel layout: " + path);

    const std::size_t rowbytes = png_get_rowbytes(ctx.png, ctx.info);
    std::vector<unsigned char> buf(rowbytes * h);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 r = 0; r < h; ++r) rows[r] = buf.data() + r * rowbytes;
    png_read_image(ctx.png, rows.data());
    png_read_end(ctx.png, nullptr);

    ImageGrid img(static_cast<int>(h), static_cast<int>(w));
    for (png_uint_32 r = 0; r < h; ++r) {
        const unsigned char* row = rows[r];
        for (png_uint_32 c = 0; c < w; ++c) {
            if (channels == 1) {
                img(static_cast<int>(r), static_cast<int>(c)) = row[c] / 255.0;
            } else {
                img(static_cast<int>(r), static_cast<int>(c)) = luminance601(
                    row[3 * c] / 255.0, row[3 * c + 1] / 255.0, row[3 * c + 2] / 255.0);
            }
        }
    }
    return img;
}

inline void save_png(const ImageGrid& img, const std::string& path) {
    PngWriteCtx ctx;
    ctx.fp = std::fopen(path.c_str(), "wb");
    if (!ctx.fp) throw InputError("save_image: cannot write " + path);
    ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!ctx.png) throw Error("save_image: libpng init failed");
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.info) throw Error("save_image: libpng init failed");
    if (setjmp(png_jmpbuf(ctx.png))) throw InputError("save_image: write failed: " + path);

    png_init_io(ctx.png, ctx.fp);
    png_set_IHDR(ctx.png, ctx.info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);

    std::vector<unsigned char> row(static_cast<std::size_t>(img.width));
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c)
            row[static_cast<std::size_t>(c)] = static_cast<unsigned char>(quantize_u8(img(r, c)));
        png_write_row(ctx.png, row.data());
    }
    png_write_end(ctx.png, nullptr);
}

inline bool has_suffix(const std::string& s, const std::string& suf) {
    if (s.size() < suf.size()) return false;
    for (std::size_t i = 0; i < suf.size(); ++i)
        if (std::tolower(static_cast<unsigned char>(s[s.size() - suf.size() + i])) != suf[i])
            return false;
    return true;
}

} // namespace detail

// Loads an 8-bit PGM (P5) or PNG (grayscale/RGB, collapsed to BT.601
// luminance) into [0,1]. Format detected from the file's magic bytes.
inline ImageGrid load_image(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw InputError("load_image: cannot open " + path);
    unsigned char magic[8] = {0};
    probe.read(reinterpret_cast<char*>(magic), 8);
    probe.close();
    if (magic[0] == 'P' && magic[1] == '5') return detail::load_pgm(path);
    static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    if (std::memcmp(magic, png_sig, 8) == 0) return detail::load_png(path);
    throw InputError("load_image: unsupported format: " + path);
}

// Saves as 8-bit PGM or grayscale PNG depending on the path extension.
inline void save_image(const ImageGrid& img, const std::string& path) {
    for (double v : img.data)
        if (!std::isfinite(v)) throw InputError("save_image: non-finite intensity");
    if (detail::has_suffix(path, ".pgm")) {
        detail::save_pgm(img, path);
    } else if (detail::has_suffix(path, ".png")) {
        detail::save_png(img, path);
    } else {
        throw InputError("save_image: unsupported extension (use .pgm or .png): " + path);
    }
}

} // namespace noisr

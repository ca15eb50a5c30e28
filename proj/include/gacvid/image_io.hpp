#pragma once

#include <png.h>

#include <array>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "gacvid/errors.hpp"
#include "gacvid/tensor.hpp"
#include "gacvid/types.hpp"

namespace gacvid {

namespace detail {

struct PngReader {
    std::FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;

    explicit PngReader(const std::string& path) {
        fp = std::fopen(path.c_str(), "rb");
        if (!fp) throw IoError("cannot open " + path);
        png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        info = png ? png_create_info_struct(png) : nullptr;
        if (!png || !info) {
            close();
            throw IoError("libpng init failed for " + path);
        }
    }
    ~PngReader() { close(); }
    void close() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        png = nullptr;
        info = nullptr;
        if (fp) std::fclose(fp);
        fp = nullptr;
    }
};

struct PngWriter {
    std::FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;

    explicit PngWriter(const std::string& path) {
        fp = std::fopen(path.c_str(), "wb");
        if (!fp) throw IoError("cannot open " + path + " for writing");
        png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        info = png ? png_create_info_struct(png) : nullptr;
        if (!png || !info) {
            close();
            throw IoError("libpng init failed for " + path);
        }
    }
    ~PngWriter() { close(); }
    void close() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        png = nullptr;
        info = nullptr;
        if (fp) std::fclose(fp);
        fp = nullptr;
    }
};

inline std::uint8_t to_byte(float v) {
    const float s = v <= 0.f ? 0.f : (v >= 1.f ? 255.f : v * 255.f);
    return static_cast<std::uint8_t>(s + 0.5f);
}

}  // namespace detail

// Quantize to the 8-bit grid used on disk. The toy renderer emits colors
// already on this grid so dataset round trips are bit exact.
inline float quantize8(float v) { return detail::to_byte(v) / 255.f; }

// --- RGB PNG ---------------------------------------------------------------

inline void write_png_rgb(const std::string& path, const Tensor<float>& image) {
    if (image.rank() != 3 || image.dim(0) != 3)
        throw ShapeMismatch("write_png_rgb expects (3,H,W)");
    const int h = image.dim(1), w = image.dim(2);
    detail::PngWriter wr(path);
    if (setjmp(png_jmpbuf(wr.png))) throw IoError("libpng write failed: " + path);
    png_init_io(wr.png, wr.fp);
    png_set_IHDR(wr.png, wr.info, w, h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(wr.png, wr.info);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                row[3 * x + c] = detail::to_byte(image(c, y, x));
        png_write_row(wr.png, row.data());
    }
    png_write_end(wr.png, nullptr);
}

inline Tensor<float> read_png_rgb(const std::string& path) {
    detail::PngReader rd(path);
    if (setjmp(png_jmpbuf(rd.png))) throw FormatError("libpng read failed: " + path);
    png_init_io(rd.png, rd.fp);
    png_read_info(rd.png, rd.info);
    png_set_expand(rd.png);
    png_set_strip_16(rd.png);
    png_set_strip_alpha(rd.png);
    if (png_get_color_type(rd.png, rd.info) == PNG_COLOR_TYPE_GRAY ||
        png_get_color_type(rd.png, rd.info) == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(rd.png);
    png_read_update_info(rd.png, rd.info);
    const int h = png_get_image_height(rd.png, rd.info);
    const int w = png_get_image_width(rd.png, rd.info);
    Tensor<float> image({3, h, w});
    std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        png_read_row(rd.png, row.data(), nullptr);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                image(c, y, x) = row[3 * x + c] / 255.f;
    }
    return image;
}

// --- Palette PNG for semantic layouts ---------------------------------------

// Distinct display colors per class; the palette index is the class id, which
// is what consumers read back.
inline const std::array<std::array<std::uint8_t, 3>, kNumClasses>& class_palette() {
    static const std::array<std::array<std::uint8_t, 3>, kNumClasses> p = {{
        {0, 0, 0},        // background
        {128, 64, 0},     // hair
        {255, 204, 153},  // face
        {204, 0, 0},      // tops
        {255, 153, 102},  // torso-skin
        {0, 153, 0},      // left-arm
        {0, 204, 204},    // right-arm
        {0, 0, 204},      // bottoms
        {153, 153, 0},    // left-leg
        {153, 0, 153},    // right-leg
        {64, 64, 64},     // left-shoe
        {192, 192, 192},  // right-shoe
        {255, 255, 255},  // socks
    }};
    return p;
}

inline void write_png_layout(const std::string& path, const SemanticLayout& layout) {
    detail::PngWriter wr(path);
    if (setjmp(png_jmpbuf(wr.png))) throw IoError("libpng write failed: " + path);
    png_init_io(wr.png, wr.fp);
    png_set_IHDR(wr.png, wr.info, layout.width, layout.height, 8,
                 PNG_COLOR_TYPE_PALETTE, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    std::array<png_color, kNumClasses> palette;
    for (int i = 0; i < kNumClasses; ++i) {
        palette[i].red = class_palette()[i][0];
        palette[i].green = class_palette()[i][1];
        palette[i].blue = class_palette()[i][2];
    }
    png_set_PLTE(wr.png, wr.info, palette.data(), kNumClasses);
    png_write_info(wr.png, wr.info);
    std::vector<std::uint8_t> row(layout.width);
    for (int y = 0; y < layout.height; ++y) {
        for (int x = 0; x < layout.width; ++x) row[x] = layout.at(y, x);
        png_write_row(wr.png, row.data());
    }
    png_write_end(wr.png, nullptr);
}

inline SemanticLayout read_png_layout(const std::string& path) {
    detail::PngReader rd(path);
    if (setjmp(png_jmpbuf(rd.png))) throw FormatError("libpng read failed: " + path);
    png_init_io(rd.png, rd.fp);
    png_read_info(rd.png, rd.info);
    if (png_get_color_type(rd.png, rd.info) != PNG_COLOR_TYPE_PALETTE)
        throw FormatError("layout PNG must be palette-indexed: " + path);
    if (png_get_bit_depth(rd.png, rd.info) < 8) png_set_packing(rd.png);
    png_read_update_info(rd.png, rd.info);
    SemanticLayout layout(png_get_image_height(rd.png, rd.info),
                          png_get_image_width(rd.png, rd.info));
    std::vector<std::uint8_t> row(layout.width);
    for (int y = 0; y < layout.height; ++y) {
        png_read_row(rd.png, row.data(), nullptr);
        for (int x = 0; x < layout.width; ++x) {
            if (row[x] >= kNumClasses)
                throw FormatError("layout class id out of range in " + path);
            layout.at(y, x) = row[x];
        }
    }
    return layout;
}

// --- Raw float raster --------------------------------------------------------

// 16-byte header: magic "GVSF", u32 height, u32 width, u32 reserved, then
// height*width little-endian float32.
inline constexpr char kFloatRasterMagic[4] = {'G', 'V', 'S', 'F'};

inline void write_float_raster(const std::string& path, const Tensor<float>& map) {
    if (map.rank() != 2) throw ShapeMismatch("float raster must be rank 2");
    std::FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw IoError("cannot open " + path + " for writing");
    const std::uint32_t h = map.dim(0), w = map.dim(1), reserved = 0;
    bool ok = std::fwrite(kFloatRasterMagic, 1, 4, fp) == 4 &&
              std::fwrite(&h, 4, 1, fp) == 1 && std::fwrite(&w, 4, 1, fp) == 1 &&
              std::fwrite(&reserved, 4, 1, fp) == 1 &&
              std::fwrite(map.data(), sizeof(float), map.size(), fp) == map.size();
    std::fclose(fp);
    if (!ok) throw IoError("short write: " + path);
}

inline Tensor<float> read_float_raster(const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw IoError("cannot open " + path);
    char magic[4];
    std::uint32_t h = 0, w = 0, reserved = 0;
    bool ok = std::fread(magic, 1, 4, fp) == 4 && std::fread(&h, 4, 1, fp) == 1 &&
              std::fread(&w, 4, 1, fp) == 1 && std::fread(&reserved, 4, 1, fp) == 1;
    if (!ok || std::memcmp(magic, kFloatRasterMagic, 4) != 0) {
        std::fclose(fp);
        throw FormatError("bad float raster header: " + path);
    }
    Tensor<float> map({static_cast<int>(h), static_cast<int>(w)});
    ok = std::fread(map.data(), sizeof(float), map.size(), fp) == map.size();
    std::fclose(fp);
    if (!ok) throw FormatError("truncated float raster: " + path);
    return map;
}

}  // namespace gacvid

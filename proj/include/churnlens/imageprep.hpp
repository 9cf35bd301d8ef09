#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "churnlens/error.hpp"

namespace churnlens {

/// Row-major interleaved RGB, 8 bits per channel.
struct RasterImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;
    std::size_t source_byte_size = 0;  // size of the encoded file the raster came from

    RasterImage() = default;
    RasterImage(std::size_t w, std::size_t h, std::vector<std::uint8_t> px, std::size_t byte_size = 0)
        : width(w), height(h), pixels(std::move(px)), source_byte_size(byte_size) {
        validate();
    }

    void validate() const {
        if (width == 0 || height == 0) throw Error(ErrorCode::InvalidImage, "image has zero extent");
        if (pixels.size() != width * height * 3) {
            throw Error(ErrorCode::InvalidImage, "pixel buffer holds " + std::to_string(pixels.size()) +
                                                     " bytes, expected " + std::to_string(width * height * 3));
        }
    }

    std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }
};

struct FaceBox {
    std::size_t x = 0;
    std::size_t y = 0;
    std::size_t w = 0;
    std::size_t h = 0;

    std::size_t area() const noexcept { return w * h; }
    bool fits(std::size_t width, std::size_t height) const noexcept {
        return w >= 1 && h >= 1 && x + w <= width && y + h <= height;
    }

    friend bool operator==(const FaceBox&, const FaceBox&) = default;
};

inline constexpr std::size_t kFaceSide = 28;
inline constexpr std::size_t kFaceChannels = 3;
inline constexpr std::size_t kFaceValues = kFaceChannels * kFaceSide * kFaceSide;

/// 3x28x28 channel-major tensor with every value in [0, 1].
struct FaceTensor {
    std::array<double, kFaceValues> data{};

    double& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * kFaceSide + y) * kFaceSide + x]; }
    double at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * kFaceSide + y) * kFaceSide + x]; }

    friend bool operator==(const FaceTensor&, const FaceTensor&) = default;
};

/// Largest box by area; ties go to the smallest y, then the smallest x.
inline FaceBox select_face(std::span<const FaceBox> boxes) {
    if (boxes.empty()) throw Error(ErrorCode::NoFace, "no face boxes");
    const auto better = [](const FaceBox& a, const FaceBox& b) {
        if (a.area() != b.area()) return a.area() > b.area();
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    };
    FaceBox best = boxes.front();
    for (const auto& b : boxes.subspan(1)) {
        if (better(b, best)) best = b;
    }
    return best;
}

inline constexpr std::size_t kDefaultSizeThreshold = 18 * 1024;

/// Inclusive: images exactly at the threshold are kept.
inline bool size_filter(std::size_t byte_size, std::size_t threshold_bytes = kDefaultSizeThreshold) noexcept {
    return byte_size >= threshold_bytes;
}

inline bool size_filter(const RasterImage& image, std::size_t threshold_bytes = kDefaultSizeThreshold) noexcept {
    return size_filter(image.source_byte_size, threshold_bytes);
}

/// Bilinear resample of the boxed region to out_w x out_h, sampling at
/// half-pixel centres and clamping at the crop edge. Output is channel-major
/// and scaled into [0, 1].
inline std::vector<double> resample_bilinear(const RasterImage& image, const FaceBox& box, std::size_t out_w,
                                             std::size_t out_h) {
    image.validate();
    if (!box.fits(image.width, image.height)) {
        throw Error(ErrorCode::InvalidBox, "box (" + std::to_string(box.x) + "," + std::to_string(box.y) + "," +
                                               std::to_string(box.w) + "," + std::to_string(box.h) + ") outside " +
                                               std::to_string(image.width) + "x" + std::to_string(image.height));
    }
    if (out_w == 0 || out_h == 0) throw Error(ErrorCode::InvalidBox, "empty output size");

    struct Tap {
        std::size_t lo, hi;
        double frac;
    };
    const auto taps = [](std::size_t in, std::size_t out) {
        std::vector<Tap> t(out);
        const double scale = static_cast<double>(in) / static_cast<double>(out);
        for (std::size_t o = 0; o < out; ++o) {
            double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
            src = std::clamp(src, 0.0, static_cast<double>(in - 1));
            const auto lo = static_cast<std::size_t>(std::floor(src));
            const std::size_t hi = std::min(lo + 1, in - 1);
            t[o] = {lo, hi, src - static_cast<double>(lo)};
        }
        return t;
    };
    const auto xs = taps(box.w, out_w);
    const auto ys = taps(box.h, out_h);

    std::vector<double> out(3 * out_w * out_h);
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            const Tap ty = ys[oy];
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                const Tap tx = xs[ox];
                const double p00 = image.at(box.x + tx.lo, box.y + ty.lo, c);
                const double p01 = image.at(box.x + tx.hi, box.y + ty.lo, c);
                const double p10 = image.at(box.x + tx.lo, box.y + ty.hi, c);
                const double p11 = image.at(box.x + tx.hi, box.y + ty.hi, c);
                const double top = p00 + tx.frac * (p01 - p00);
                const double bottom = p10 + tx.frac * (p11 - p10);
                const double v = (top + ty.frac * (bottom - top)) / 255.0;
                out[(c * out_h + oy) * out_w + ox] = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return out;
}

inline FaceTensor crop_resize(const RasterImage& image, const FaceBox& box) {
    const auto values = resample_bilinear(image, box, kFaceSide, kFaceSide);
    FaceTensor t;
    std::copy(values.begin(), values.end(), t.data.begin());
    return t;
}

}  // namespace churnlens

#pragma once

// PNG / JPEG decoding and PNG encoding for profile images, backed by libpng
// and libjpeg.

#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "churnlens/error.hpp"
#include "churnlens/imageprep.hpp"

namespace churnlens {

namespace detail {

inline RasterImage decode_png(const std::vector<std::uint8_t>& bytes) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()) == 0) {
        throw Error(ErrorCode::DecodeFailure, std::string("png: ") + img.message);
    }
    img.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(img));
    if (png_image_finish_read(&img, nullptr, pixels.data(), 0, nullptr) == 0) {
        const std::string msg = img.message;
        png_image_free(&img);
        throw Error(ErrorCode::DecodeFailure, "png: " + msg);
    }
    return RasterImage(img.width, img.height, std::move(pixels), bytes.size());
}

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

inline RasterImage decode_jpeg(const std::vector<std::uint8_t>& bytes) {
    jpeg_decompress_struct cinfo;
    JpegErrorManager jerr;
    cinfo.err = jpeg_std_error(&jerr.base);
    jerr.base.error_exit = jpeg_error_exit;
    std::vector<std::uint8_t> pixels;
    std::size_t width = 0, height = 0;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw Error(ErrorCode::DecodeFailure, std::string("jpeg: ") + jerr.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    width = cinfo.output_width;
    height = cinfo.output_height;
    pixels.resize(width * height * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return RasterImage(width, height, std::move(pixels), bytes.size());
}

}  // namespace detail

/// Decodes PNG or JPEG by signature. `source_byte_size` is the encoded size.
inline RasterImage decode_image(const std::vector<std::uint8_t>& bytes) {
    static constexpr std::uint8_t png_sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), png_sig, 8) == 0) return detail::decode_png(bytes);
    if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) {
        return detail::decode_jpeg(bytes);
    }
    throw Error(ErrorCode::DecodeFailure, "unrecognized image signature");
}

inline RasterImage load_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open image " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_image(bytes);
}

/// Writes an RGB PNG. compression_level 0 stores the pixel data verbatim,
/// making the file size a fixed function of the dimensions.
inline void write_png(const RasterImage& image, const std::filesystem::path& path, int compression_level = 0) {
    image.validate();
    std::FILE* fp = std::fopen(path.string().c_str(), "wb");
    if (fp == nullptr) throw Error(ErrorCode::Io, "cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
    if (png == nullptr || info == nullptr || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw Error(ErrorCode::Io, "png encode failed for " + path.string());
    }
    png_init_io(png, fp);
    png_set_compression_level(png, compression_level);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_filter(png, PNG_FILTER_TYPE_BASE, PNG_FILTER_NONE);
    png_write_info(png, info);
    for (std::size_t y = 0; y < image.height; ++y) {
        png_write_row(png, const_cast<png_bytep>(image.pixels.data() + y * image.width * 3));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    if (std::fclose(fp) != 0) throw Error(ErrorCode::Io, "close failed for " + path.string());
}

}  // namespace churnlens

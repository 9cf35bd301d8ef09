#pragma once

// Model file layout (all integers and floats little-endian):
//
//   "CNNW"                      4 bytes magic
//   format_version              u32
//   architecture descriptor     13 x u32 (field order of Architecture)
//   parameter_count             u64
//   parameters                  parameter_count x f64, ParamLayout order
//   crc32                       u32 over every preceding byte

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <zlib.h>

#include "churnlens/cnn/model.hpp"
#include "churnlens/error.hpp"

namespace churnlens::cnn {

inline constexpr char kModelMagic[4] = {'C', 'N', 'N', 'W'};

namespace detail {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    std::uint64_t bits = 0;
    if constexpr (std::is_floating_point_v<T>) {
        bits = std::bit_cast<std::uint64_t>(static_cast<double>(value));
    } else {
        bits = static_cast<std::uint64_t>(value);
    }
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

template <typename T>
T get_le(const std::uint8_t* p) {
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    if constexpr (std::is_floating_point_v<T>) {
        return std::bit_cast<double>(bits);
    } else {
        return static_cast<T>(bits);
    }
}

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
    return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), data, static_cast<uInt>(n)));
}

inline constexpr std::size_t kDescriptorWords = 13;
inline constexpr std::size_t kHeaderBytes = 4 + 4 + kDescriptorWords * 4 + 8;

}  // namespace detail

inline std::vector<std::uint8_t> encode_model(const CnnModel& model) {
    const Architecture& a = model.architecture();
    std::vector<std::uint8_t> out(std::begin(kModelMagic), std::end(kModelMagic));
    detail::put_le<std::uint32_t>(out, model.format_version());
    for (const std::uint32_t w : {a.in_channels, a.in_height, a.in_width, a.conv1_channels, a.conv1_kernel,
                                  a.conv2_channels, a.conv2_kernel, a.conv_stride, static_cast<std::uint32_t>(a.padding),
                                  a.pool_window, a.pool_stride, static_cast<std::uint32_t>(a.activation), a.classes}) {
        detail::put_le<std::uint32_t>(out, w);
    }
    detail::put_le<std::uint64_t>(out, model.parameter_count());
    for (const double p : model.parameters()) detail::put_le<double>(out, p);
    detail::put_le<std::uint32_t>(out, detail::crc32_of(out.data(), out.size()));
    return out;
}

inline CnnModel decode_model(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8) throw Error(ErrorCode::TruncatedFile, "model file shorter than its header");
    if (std::memcmp(bytes.data(), kModelMagic, 4) != 0) throw Error(ErrorCode::BadMagic, "not a CNNW model file");
    const auto version = detail::get_le<std::uint32_t>(bytes.data() + 4);
    if (version != kModelFormatVersion) {
        throw Error(ErrorCode::VersionMismatch, "model format version " + std::to_string(version) + ", supported " +
                                                    std::to_string(kModelFormatVersion));
    }
    if (bytes.size() < detail::kHeaderBytes + 4) throw Error(ErrorCode::TruncatedFile, "model header truncated");
    const std::uint64_t count = detail::get_le<std::uint64_t>(bytes.data() + detail::kHeaderBytes - 8);
    if (count > (bytes.size() - detail::kHeaderBytes) / 8) {
        throw Error(ErrorCode::TruncatedFile, "parameter block truncated");
    }
    const std::size_t expected = detail::kHeaderBytes + count * 8 + 4;
    if (bytes.size() != expected) {
        throw Error(bytes.size() < expected ? ErrorCode::TruncatedFile : ErrorCode::ChecksumMismatch,
                    "model file is " + std::to_string(bytes.size()) + " bytes, expected " + std::to_string(expected));
    }
    const std::uint32_t stored = detail::get_le<std::uint32_t>(bytes.data() + expected - 4);
    if (stored != detail::crc32_of(bytes.data(), expected - 4)) {
        throw Error(ErrorCode::ChecksumMismatch, "CRC32 mismatch");
    }

    std::uint32_t w[detail::kDescriptorWords];
    for (std::size_t i = 0; i < detail::kDescriptorWords; ++i) {
        w[i] = detail::get_le<std::uint32_t>(bytes.data() + 8 + 4 * i);
    }
    Architecture a;
    a.in_channels = w[0];
    a.in_height = w[1];
    a.in_width = w[2];
    a.conv1_channels = w[3];
    a.conv1_kernel = w[4];
    a.conv2_channels = w[5];
    a.conv2_kernel = w[6];
    a.conv_stride = w[7];
    a.padding = static_cast<Padding>(w[8]);
    a.pool_window = w[9];
    a.pool_stride = w[10];
    a.activation = static_cast<Activation>(w[11]);
    a.classes = w[12];

    std::vector<double> params(count);
    const std::uint8_t* p = bytes.data() + detail::kHeaderBytes;
    for (std::size_t i = 0; i < count; ++i) params[i] = detail::get_le<double>(p + 8 * i);
    return CnnModel(a, std::move(params));
}

inline void save_model(const CnnModel& model, const std::filesystem::path& path) {
    const auto bytes = encode_model(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

inline CnnModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_model(bytes);
}

}  // namespace churnlens::cnn

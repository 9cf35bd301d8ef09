#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "churnlens/cnn/layers.hpp"
#include "churnlens/error.hpp"

namespace churnlens::cnn {

enum class Padding : std::uint32_t { Valid = 0 };
enum class Activation : std::uint32_t { Relu = 1 };

/// conv -> ReLU -> pool -> conv -> ReLU -> pool -> flatten -> dense.
/// The defaults give the 3x28x28 -> 32x24x24 -> 32x12x12 -> 64x8x8 -> 64x4x4
/// -> 1024 -> 2 chain with 55,746 parameters.
struct Architecture {
    std::uint32_t in_channels = 3;
    std::uint32_t in_height = 28;
    std::uint32_t in_width = 28;
    std::uint32_t conv1_channels = 32;
    std::uint32_t conv1_kernel = 5;
    std::uint32_t conv2_channels = 64;
    std::uint32_t conv2_kernel = 5;
    std::uint32_t conv_stride = 1;
    Padding padding = Padding::Valid;
    std::uint32_t pool_window = 2;
    std::uint32_t pool_stride = 2;
    Activation activation = Activation::Relu;
    std::uint32_t classes = 2;

    friend bool operator==(const Architecture&, const Architecture&) = default;

    Shape3 input_shape() const { return {in_channels, in_height, in_width}; }
    Shape3 conv1_shape() const { return conv_valid_output(input_shape(), conv1_channels, conv1_kernel); }
    Shape3 pool1_shape() const { return pool_output(conv1_shape(), pool_window); }
    Shape3 conv2_shape() const { return conv_valid_output(pool1_shape(), conv2_channels, conv2_kernel); }
    Shape3 pool2_shape() const { return pool_output(conv2_shape(), pool_window); }
    std::size_t features() const { return pool2_shape().size(); }

    /// Rejects descriptors this implementation cannot run.
    void validate() const {
        const auto fail = [](const std::string& why) { throw Error(ErrorCode::InvalidConfig, "architecture: " + why); };
        if (conv_stride != 1) fail("only stride-1 convolution is supported");
        if (padding != Padding::Valid) fail("only valid padding is supported");
        if (activation != Activation::Relu) fail("only ReLU is supported");
        if (pool_window == 0 || pool_stride != pool_window) fail("pooling must be non-overlapping");
        if (in_channels == 0 || conv1_channels == 0 || conv2_channels == 0 || classes < 2) fail("zero-sized layer");
        if (conv1_kernel == 0 || conv1_kernel > in_height || conv1_kernel > in_width) fail("conv1 kernel too large");
        const Shape3 c1 = conv1_shape();
        if (c1.height % pool_window || c1.width % pool_window) fail("conv1 output not divisible by pool window");
        const Shape3 p1 = pool1_shape();
        if (conv2_kernel == 0 || conv2_kernel > p1.height || conv2_kernel > p1.width) fail("conv2 kernel too large");
        const Shape3 c2 = conv2_shape();
        if (c2.height % pool_window || c2.width % pool_window) fail("conv2 output not divisible by pool window");
    }
};

/// Offsets of each parameter block inside the flat parameter vector, in
/// storage order: conv1 weights, conv1 bias, conv2 weights, conv2 bias,
/// dense weights, dense bias.
struct ParamLayout {
    struct Block {
        std::size_t offset = 0;
        std::size_t size = 0;
    };
    Block conv1_w, conv1_b, conv2_w, conv2_b, fc_w, fc_b;
    std::size_t total = 0;

    explicit ParamLayout(const Architecture& a) {
        std::size_t at = 0;
        const auto take = [&at](std::size_t n) {
            Block b{at, n};
            at += n;
            return b;
        };
        conv1_w = take(std::size_t{a.conv1_channels} * a.in_channels * a.conv1_kernel * a.conv1_kernel);
        conv1_b = take(a.conv1_channels);
        conv2_w = take(std::size_t{a.conv2_channels} * a.conv1_channels * a.conv2_kernel * a.conv2_kernel);
        conv2_b = take(a.conv2_channels);
        fc_w = take(std::size_t{a.classes} * a.features());
        fc_b = take(a.classes);
        total = at;
    }
};

inline constexpr std::uint32_t kModelFormatVersion = 1;

class CnnModel {
public:
    CnnModel() : CnnModel(Architecture{}) {}

    /// All parameters zero.
    explicit CnnModel(Architecture arch) : arch_(arch), layout_((arch.validate(), arch)), params_(layout_.total, 0.0) {}

    CnnModel(Architecture arch, std::vector<double> params) : CnnModel(arch) {
        if (params.size() != layout_.total) {
            throw Error(ErrorCode::ShapeMismatch, "expected " + std::to_string(layout_.total) + " parameters, got " +
                                                      std::to_string(params.size()));
        }
        params_ = std::move(params);
    }

    const Architecture& architecture() const noexcept { return arch_; }
    const ParamLayout& layout() const noexcept { return layout_; }
    std::uint32_t format_version() const noexcept { return kModelFormatVersion; }
    std::size_t parameter_count() const noexcept { return params_.size(); }

    std::span<double> parameters() noexcept { return params_; }
    std::span<const double> parameters() const noexcept { return params_; }

    std::span<const double> conv1_weights() const { return block(layout_.conv1_w); }
    std::span<const double> conv1_bias() const { return block(layout_.conv1_b); }
    std::span<const double> conv2_weights() const { return block(layout_.conv2_w); }
    std::span<const double> conv2_bias() const { return block(layout_.conv2_b); }
    std::span<const double> fc_weights() const { return block(layout_.fc_w); }
    std::span<const double> fc_bias() const { return block(layout_.fc_b); }

    friend bool operator==(const CnnModel& a, const CnnModel& b) {
        return a.arch_ == b.arch_ && a.params_ == b.params_;
    }

private:
    std::span<const double> block(ParamLayout::Block b) const {
        return std::span<const double>(params_).subspan(b.offset, b.size);
    }

    Architecture arch_;
    ParamLayout layout_;
    std::vector<double> params_;
};

/// Weights ~ U(-r, r) with r = sqrt(6 / (fan_in + fan_out)) per layer; biases 0.
inline CnnModel initialize_model(const Architecture& arch, std::uint64_t seed) {
    CnnModel model(arch);
    const ParamLayout& l = model.layout();
    std::mt19937_64 rng(seed);
    auto params = model.parameters();
    const auto fill = [&](ParamLayout::Block b, double fan_in, double fan_out) {
        const double r = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-r, r);
        for (std::size_t i = 0; i < b.size; ++i) params[b.offset + i] = dist(rng);
    };
    const double k1 = double(arch.conv1_kernel) * arch.conv1_kernel;
    const double k2 = double(arch.conv2_kernel) * arch.conv2_kernel;
    fill(l.conv1_w, arch.in_channels * k1, arch.conv1_channels * k1);
    fill(l.conv2_w, arch.conv1_channels * k2, arch.conv2_channels * k2);
    fill(l.fc_w, double(arch.features()), double(arch.classes));
    return model;
}

}  // namespace churnlens::cnn

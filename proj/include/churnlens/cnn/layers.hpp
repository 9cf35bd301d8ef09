#pragma once

// Layer primitives on channel-major (C, H, W) buffers. Backward passes
// accumulate into their gradient outputs; callers zero them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>

namespace churnlens::cnn {

struct Shape3 {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t size() const noexcept { return channels * height * width; }
    friend bool operator==(const Shape3&, const Shape3&) = default;
};

inline Shape3 conv_valid_output(Shape3 in, std::size_t out_channels, std::size_t kernel) {
    return {out_channels, in.height - kernel + 1, in.width - kernel + 1};
}

inline Shape3 pool_output(Shape3 in, std::size_t window) {
    return {in.channels, in.height / window, in.width / window};
}

/// Valid cross-correlation, stride 1, no kernel flip.
/// weights: (out_ch, in_ch, k, k); bias: (out_ch).
template <typename T>
void conv_valid_forward(std::span<const T> in, Shape3 in_shape, std::span<const T> weights, std::span<const T> bias,
                        std::size_t kernel, std::span<T> out) {
    const Shape3 os = conv_valid_output(in_shape, bias.size(), kernel);
    const std::size_t in_plane = in_shape.height * in_shape.width;
    const std::size_t out_plane = os.height * os.width;
    for (std::size_t o = 0; o < os.channels; ++o) {
        T* dst = out.data() + o * out_plane;
        std::fill(dst, dst + out_plane, bias[o]);
        for (std::size_t c = 0; c < in_shape.channels; ++c) {
            const T* src = in.data() + c * in_plane;
            const T* w = weights.data() + (o * in_shape.channels + c) * kernel * kernel;
            for (std::size_t ky = 0; ky < kernel; ++ky) {
                for (std::size_t kx = 0; kx < kernel; ++kx) {
                    const T wv = w[ky * kernel + kx];
                    for (std::size_t y = 0; y < os.height; ++y) {
                        const T* s = src + (y + ky) * in_shape.width + kx;
                        T* d = dst + y * os.width;
                        for (std::size_t x = 0; x < os.width; ++x) d[x] += wv * s[x];
                    }
                }
            }
        }
    }
}

/// Gradients of a valid convolution. `grad_in` may be empty when the input
/// gradient is not needed (first layer).
template <typename T>
void conv_valid_backward(std::span<const T> in, Shape3 in_shape, std::span<const T> weights, std::size_t kernel,
                         std::span<const T> grad_out, std::size_t out_channels, std::span<T> grad_weights,
                         std::span<T> grad_bias, std::span<T> grad_in) {
    const Shape3 os = conv_valid_output(in_shape, out_channels, kernel);
    const std::size_t in_plane = in_shape.height * in_shape.width;
    const std::size_t out_plane = os.height * os.width;
    for (std::size_t o = 0; o < out_channels; ++o) {
        const T* g = grad_out.data() + o * out_plane;
        T gb = 0;
        for (std::size_t i = 0; i < out_plane; ++i) gb += g[i];
        grad_bias[o] += gb;
        for (std::size_t c = 0; c < in_shape.channels; ++c) {
            const T* src = in.data() + c * in_plane;
            const std::size_t wbase = (o * in_shape.channels + c) * kernel * kernel;
            for (std::size_t ky = 0; ky < kernel; ++ky) {
                for (std::size_t kx = 0; kx < kernel; ++kx) {
                    T acc = 0;
                    for (std::size_t y = 0; y < os.height; ++y) {
                        const T* s = src + (y + ky) * in_shape.width + kx;
                        const T* gr = g + y * os.width;
                        for (std::size_t x = 0; x < os.width; ++x) acc += gr[x] * s[x];
                    }
                    grad_weights[wbase + ky * kernel + kx] += acc;
                }
            }
            if (grad_in.empty()) continue;
            T* gi = grad_in.data() + c * in_plane;
            for (std::size_t ky = 0; ky < kernel; ++ky) {
                for (std::size_t kx = 0; kx < kernel; ++kx) {
                    const T wv = weights[wbase + ky * kernel + kx];
                    for (std::size_t y = 0; y < os.height; ++y) {
                        T* d = gi + (y + ky) * in_shape.width + kx;
                        const T* gr = g + y * os.width;
                        for (std::size_t x = 0; x < os.width; ++x) d[x] += wv * gr[x];
                    }
                }
            }
        }
    }
}

template <typename T>
void relu_inplace(std::span<T> values) {
    for (T& v : values) v = v < T(0) ? T(0) : v;  // NaN passes through
}

/// Zeroes gradient entries whose activation was clamped. `activated` holds
/// post-ReLU values, which are positive exactly where the input was.
template <typename T>
void relu_backward_inplace(std::span<const T> activated, std::span<T> grad) {
    for (std::size_t i = 0; i < grad.size(); ++i) {
        if (!(activated[i] > T(0))) grad[i] = T(0);
    }
}

/// Non-overlapping max-pool. `argmax` records the flat input index of each
/// winner; ties keep the first element in row-major window order. A NaN
/// wins its window so non-finite values reach the loss.
template <typename T>
void maxpool_forward(std::span<const T> in, Shape3 in_shape, std::size_t window, std::span<T> out,
                     std::span<std::uint32_t> argmax) {
    const Shape3 os = pool_output(in_shape, window);
    for (std::size_t c = 0; c < os.channels; ++c) {
        for (std::size_t y = 0; y < os.height; ++y) {
            for (std::size_t x = 0; x < os.width; ++x) {
                std::size_t best = (c * in_shape.height + y * window) * in_shape.width + x * window;
                for (std::size_t dy = 0; dy < window; ++dy) {
                    for (std::size_t dx = 0; dx < window; ++dx) {
                        const std::size_t idx = (c * in_shape.height + y * window + dy) * in_shape.width + x * window + dx;
                        if (in[idx] > in[best] || (std::isnan(in[idx]) && !std::isnan(in[best]))) best = idx;
                    }
                }
                const std::size_t o = (c * os.height + y) * os.width + x;
                out[o] = in[best];
                argmax[o] = static_cast<std::uint32_t>(best);
            }
        }
    }
}

template <typename T>
void maxpool_backward(std::span<const T> grad_out, std::span<const std::uint32_t> argmax, std::span<T> grad_in) {
    for (std::size_t o = 0; o < grad_out.size(); ++o) grad_in[argmax[o]] += grad_out[o];
}

/// out = W in + b, W row-major (outputs, inputs).
template <typename T>
void dense_forward(std::span<const T> in, std::span<const T> weights, std::span<const T> bias, std::span<T> out) {
    const std::size_t n_in = in.size();
    for (std::size_t k = 0; k < bias.size(); ++k) {
        const T* w = weights.data() + k * n_in;
        T acc = 0;
        for (std::size_t i = 0; i < n_in; ++i) acc += w[i] * in[i];
        out[k] = acc + bias[k];
    }
}

template <typename T>
void dense_backward(std::span<const T> in, std::span<const T> weights, std::span<const T> grad_out,
                    std::span<T> grad_weights, std::span<T> grad_bias, std::span<T> grad_in) {
    const std::size_t n_in = in.size();
    for (std::size_t k = 0; k < grad_out.size(); ++k) {
        const T g = grad_out[k];
        grad_bias[k] += g;
        T* gw = grad_weights.data() + k * n_in;
        for (std::size_t i = 0; i < n_in; ++i) gw[i] += g * in[i];
        if (!grad_in.empty()) {
            const T* w = weights.data() + k * n_in;
            for (std::size_t i = 0; i < n_in; ++i) grad_in[i] += g * w[i];
        }
    }
}

/// Numerically stable log(sum(exp(v))).
template <typename T>
T log_sum_exp(std::span<const T> v) {
    const T m = *std::max_element(v.begin(), v.end());
    T s = 0;
    for (const T x : v) s += std::exp(x - m);
    return m + std::log(s);
}

}  // namespace churnlens::cnn

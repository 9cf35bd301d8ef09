#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "churnlens/cnn/layers.hpp"
#include "churnlens/cnn/model.hpp"
#include "churnlens/cnn/tensor.hpp"
#include "churnlens/error.hpp"
#include "churnlens/imageprep.hpp"
#include "churnlens/weaklabel.hpp"

namespace churnlens::cnn {

/// Per-sample activations kept for the backward pass.
struct Workspace {
    std::vector<double> conv1, pool1, conv2, pool2, logits;
    std::vector<std::uint32_t> pool1_arg, pool2_arg;
    std::vector<double> g_conv1, g_pool1, g_conv2, g_pool2, g_logits;

    explicit Workspace(const Architecture& a)
        : conv1(a.conv1_shape().size()), pool1(a.pool1_shape().size()), conv2(a.conv2_shape().size()),
          pool2(a.pool2_shape().size()), logits(a.classes), pool1_arg(pool1.size()), pool2_arg(pool2.size()),
          g_conv1(conv1.size()), g_pool1(pool1.size()), g_conv2(conv2.size()), g_pool2(pool2.size()),
          g_logits(a.classes) {}
};

namespace detail {

inline void check_batch(const CnnModel& model, const Tensor& batch) {
    const auto& a = model.architecture();
    const auto& s = batch.shape();
    if (s.size() != 4 || s[0] == 0 || s[1] != a.in_channels || s[2] != a.in_height || s[3] != a.in_width) {
        throw Error(ErrorCode::ShapeMismatch, "batch shape " + batch.shape_string() + " does not match model input (N," +
                                                  std::to_string(a.in_channels) + "," + std::to_string(a.in_height) +
                                                  "," + std::to_string(a.in_width) + ")");
    }
}

inline void check_labels(const CnnModel& model, std::size_t n, std::span<const int> labels) {
    if (labels.size() != n) {
        throw Error(ErrorCode::ShapeMismatch,
                    std::to_string(labels.size()) + " labels for " + std::to_string(n) + " samples");
    }
    for (const int l : labels) {
        if (l < 0 || static_cast<std::uint32_t>(l) >= model.architecture().classes) {
            throw Error(ErrorCode::ShapeMismatch, "label " + std::to_string(l) + " out of range");
        }
    }
}

}  // namespace detail

/// Runs one sample through the network; logits land in `ws.logits`.
inline void forward_sample(const CnnModel& model, std::span<const double> input, Workspace& ws) {
    const auto& a = model.architecture();
    conv_valid_forward<double>(input, a.input_shape(), model.conv1_weights(), model.conv1_bias(), a.conv1_kernel,
                               ws.conv1);
    relu_inplace<double>(ws.conv1);
    maxpool_forward<double>(ws.conv1, a.conv1_shape(), a.pool_window, ws.pool1, ws.pool1_arg);
    conv_valid_forward<double>(ws.pool1, a.pool1_shape(), model.conv2_weights(), model.conv2_bias(), a.conv2_kernel,
                               ws.conv2);
    relu_inplace<double>(ws.conv2);
    maxpool_forward<double>(ws.conv2, a.conv2_shape(), a.pool_window, ws.pool2, ws.pool2_arg);
    dense_forward<double>(ws.pool2, model.fc_weights(), model.fc_bias(), ws.logits);
}

/// Cross-entropy of one sample given its logits.
inline double sample_loss(std::span<const double> logits, int label) {
    // (max - z_label) + log1p(sum of the other terms) keeps relative accuracy
    // when the loss is tiny.
    std::size_t top = 0;
    for (std::size_t k = 1; k < logits.size(); ++k) {
        if (logits[k] > logits[top]) top = k;
    }
    double rest = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        if (k != top) rest += std::exp(logits[k] - logits[top]);
    }
    return (logits[top] - logits[static_cast<std::size_t>(label)]) + std::log1p(rest);
}

/// Backpropagates `scale * loss(sample)` into `grad` (flat parameter layout).
/// Requires a preceding forward_sample on the same workspace.
inline void backward_sample(const CnnModel& model, std::span<const double> input, int label, double scale,
                            Workspace& ws, std::span<double> grad) {
    const auto& a = model.architecture();
    const auto& l = model.layout();
    const auto block = [&](ParamLayout::Block b) { return grad.subspan(b.offset, b.size); };

    const double lse = log_sum_exp<double>(ws.logits);
    for (std::size_t k = 0; k < ws.logits.size(); ++k) {
        ws.g_logits[k] = scale * (std::exp(ws.logits[k] - lse) - (static_cast<int>(k) == label ? 1.0 : 0.0));
    }
    std::fill(ws.g_pool2.begin(), ws.g_pool2.end(), 0.0);
    dense_backward<double>(ws.pool2, model.fc_weights(), ws.g_logits, block(l.fc_w), block(l.fc_b), ws.g_pool2);

    std::fill(ws.g_conv2.begin(), ws.g_conv2.end(), 0.0);
    maxpool_backward<double>(ws.g_pool2, ws.pool2_arg, ws.g_conv2);
    relu_backward_inplace<double>(ws.conv2, ws.g_conv2);

    std::fill(ws.g_pool1.begin(), ws.g_pool1.end(), 0.0);
    conv_valid_backward<double>(ws.pool1, a.pool1_shape(), model.conv2_weights(), a.conv2_kernel, ws.g_conv2,
                                a.conv2_channels, block(l.conv2_w), block(l.conv2_b), ws.g_pool1);

    std::fill(ws.g_conv1.begin(), ws.g_conv1.end(), 0.0);
    maxpool_backward<double>(ws.g_pool1, ws.pool1_arg, ws.g_conv1);
    relu_backward_inplace<double>(ws.conv1, ws.g_conv1);

    conv_valid_backward<double>(input, a.input_shape(), model.conv1_weights(), a.conv1_kernel, ws.g_conv1,
                                a.conv1_channels, block(l.conv1_w), block(l.conv1_b), std::span<double>{});
}

/// Logits for an (N, C, H, W) batch, shape (N, classes).
inline Tensor forward(const CnnModel& model, const Tensor& batch) {
    detail::check_batch(model, batch);
    const std::size_t n = batch.dim(0);
    const std::size_t classes = model.architecture().classes;
    Tensor logits({n, classes});
    Workspace ws(model.architecture());
    for (std::size_t i = 0; i < n; ++i) {
        forward_sample(model, batch.row(i), ws);
        std::copy(ws.logits.begin(), ws.logits.end(), logits.data().begin() + static_cast<std::ptrdiff_t>(i * classes));
    }
    return logits;
}

inline Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 2) throw Error(ErrorCode::ShapeMismatch, "softmax expects (N, classes)");
    Tensor out(logits.shape());
    for (std::size_t i = 0; i < logits.dim(0); ++i) {
        const auto row = logits.row(i);
        const double lse = log_sum_exp(row);
        for (std::size_t k = 0; k < row.size(); ++k) out[i * row.size() + k] = std::exp(row[k] - lse);
    }
    return out;
}

/// Mean softmax cross-entropy, log-sum-exp stabilized.
inline double loss(const Tensor& logits, std::span<const int> labels) {
    if (logits.rank() != 2 || logits.dim(0) == 0 || labels.size() != logits.dim(0)) {
        throw Error(ErrorCode::ShapeMismatch, "loss: logits " + logits.shape_string() + " vs " +
                                                  std::to_string(labels.size()) + " labels");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= logits.dim(1)) {
            throw Error(ErrorCode::ShapeMismatch, "label out of range");
        }
        total += sample_loss(logits.row(i), labels[i]);
    }
    return total / static_cast<double>(labels.size());
}

struct Gradients {
    double loss = 0.0;
    std::vector<double> values;  // same layout as CnnModel::parameters()
    std::size_t correct = 0;     // argmax hits, for running accuracy
};

/// Exact gradient of the mean batch loss. Samples are reduced in index order,
/// so results are bit-reproducible.
inline Gradients backward(const CnnModel& model, const Tensor& batch, std::span<const int> labels) {
    detail::check_batch(model, batch);
    const std::size_t n = batch.dim(0);
    detail::check_labels(model, n, labels);
    Gradients g;
    g.values.assign(model.parameter_count(), 0.0);
    Workspace ws(model.architecture());
    const double scale = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        forward_sample(model, batch.row(i), ws);
        g.loss += sample_loss(ws.logits, labels[i]);
        const auto best = std::max_element(ws.logits.begin(), ws.logits.end()) - ws.logits.begin();
        if (best == labels[i]) ++g.correct;
        backward_sample(model, batch.row(i), labels[i], scale, ws, g.values);
    }
    g.loss *= scale;
    return g;
}

inline Tensor make_batch(std::span<const FaceTensor> faces) {
    std::vector<double> data;
    data.reserve(faces.size() * kFaceValues);
    for (const auto& f : faces) data.insert(data.end(), f.data.begin(), f.data.end());
    return Tensor({faces.size(), kFaceChannels, kFaceSide, kFaceSide}, std::move(data));
}

struct Prediction {
    WeakLabel label = WeakLabel::Male;
    int class_index = 0;
    double probability = 0.5;

    friend bool operator==(const Prediction&, const Prediction&) = default;
};

/// Argmax of the two logits; exactly equal logits go to class 0 with p = 0.5.
inline Prediction prediction_from_logits(std::span<const double> logits) {
    if (logits.size() != 2) throw Error(ErrorCode::ShapeMismatch, "binary prediction needs two logits");
    Prediction p;
    p.class_index = logits[1] > logits[0] ? 1 : 0;
    p.label = label_from_class(p.class_index);
    p.probability = 1.0 / (1.0 + std::exp(-std::fabs(logits[0] - logits[1])));
    return p;
}

inline Prediction predict(const CnnModel& model, std::span<const double> input) {
    const auto& a = model.architecture();
    if (input.size() != a.input_shape().size()) {
        throw Error(ErrorCode::ShapeMismatch, "input has " + std::to_string(input.size()) + " values, model expects " +
                                                  std::to_string(a.input_shape().size()));
    }
    Workspace ws(a);
    forward_sample(model, input, ws);
    return prediction_from_logits(ws.logits);
}

inline Prediction predict(const CnnModel& model, const FaceTensor& face) { return predict(model, face.data); }

inline std::vector<Prediction> predict_batch(const CnnModel& model, const Tensor& batch) {
    const Tensor logits = forward(model, batch);
    std::vector<Prediction> out;
    out.reserve(logits.dim(0));
    for (std::size_t i = 0; i < logits.dim(0); ++i) out.push_back(prediction_from_logits(logits.row(i)));
    return out;
}

}  // namespace churnlens::cnn

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "churnlens/cnn/model.hpp"
#include "churnlens/cnn/network.hpp"
#include "churnlens/error.hpp"
#include "churnlens/format.hpp"
#include "churnlens/imageprep.hpp"

namespace churnlens::cnn {

struct Example {
    FaceTensor input;
    int label = 0;  // class index
};

struct TrainConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::size_t batch_size = 64;
    std::size_t epochs = 5;
    std::uint64_t seed = 1;

    void validate() const {
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
            throw Error(ErrorCode::InvalidConfig, "learning_rate must be finite and non-negative");
        }
        if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorCode::InvalidConfig, "momentum must be in [0, 1)");
        if (batch_size < 1) throw Error(ErrorCode::InvalidConfig, "batch_size must be >= 1");
        if (epochs < 1) throw Error(ErrorCode::InvalidConfig, "epochs must be >= 1");
    }
};

struct EpochStats {
    std::size_t epoch = 0;  // 1-based
    double loss = 0.0;      // mean training loss over the epoch's batches
    double train_acc = 0.0;
    double val_acc = std::nan("");  // NaN when no validation set was given
};

struct TrainResult {
    CnnModel model;
    std::vector<EpochStats> history;
};

inline double accuracy(const CnnModel& model, const std::vector<Example>& examples) {
    if (examples.empty()) return std::nan("");
    std::size_t hits = 0;
    Workspace ws(model.architecture());
    for (const auto& ex : examples) {
        forward_sample(model, ex.input.data, ws);
        if (prediction_from_logits(ws.logits).class_index == ex.label) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(examples.size());
}

/// Mini-batch SGD with classical momentum,
///
///     v <- momentum * v - learning_rate * grad;  w <- w + v
///
/// starting from initialize_model(arch, seed). Epoch order is a seeded
/// shuffle; given the same data and config the result is bit-identical.
/// A learning rate of 0 is accepted and leaves the weights at their
/// initial values.
inline TrainResult train(const std::vector<Example>& dataset, const TrainConfig& config,
                         const std::vector<Example>& validation = {}, const Architecture& arch = {},
                         const std::function<void(const EpochStats&)>& on_epoch = {}) {
    config.validate();
    if (dataset.empty()) throw Error(ErrorCode::EmptyClass, "training set is empty");
    std::size_t per_class[2] = {0, 0};
    for (const auto& ex : dataset) {
        if (ex.label < 0 || ex.label > 1) throw Error(ErrorCode::ShapeMismatch, "label outside {0,1}");
        ++per_class[ex.label];
    }
    if (per_class[0] == 0 || per_class[1] == 0) {
        throw Error(ErrorCode::EmptyClass, "training set lacks class " + std::string(per_class[0] == 0 ? "0" : "1"));
    }

    TrainResult result{initialize_model(arch, config.seed), {}};
    CnnModel& model = result.model;
    std::vector<double> velocity(model.parameter_count(), 0.0);
    std::vector<double> grad(model.parameter_count(), 0.0);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(config.seed ^ 0x9E3779B97F4A7C15ULL);
    Workspace ws(model.architecture());

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        std::size_t hits = 0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            const double scale = 1.0 / static_cast<double>(end - start);
            std::fill(grad.begin(), grad.end(), 0.0);
            double batch_loss = 0.0;
            for (std::size_t j = start; j < end; ++j) {
                const Example& ex = dataset[order[j]];
                forward_sample(model, ex.input.data, ws);
                batch_loss += sample_loss(ws.logits, ex.label);
                if (prediction_from_logits(ws.logits).class_index == ex.label) ++hits;
                backward_sample(model, ex.input.data, ex.label, scale, ws, grad);
            }
            if (!std::isfinite(batch_loss)) {
                throw Error(ErrorCode::NonFiniteLoss,
                            "epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_index));
            }
            loss_sum += batch_loss;
            auto params = model.parameters();
            for (std::size_t p = 0; p < params.size(); ++p) {
                velocity[p] = config.momentum * velocity[p] - config.learning_rate * grad[p];
                params[p] += velocity[p];
            }
        }
        EpochStats stats;
        stats.epoch = epoch;
        stats.loss = loss_sum / static_cast<double>(dataset.size());
        stats.train_acc = static_cast<double>(hits) / static_cast<double>(dataset.size());
        if (!validation.empty()) stats.val_acc = accuracy(model, validation);
        result.history.push_back(stats);
        if (on_epoch) on_epoch(stats);
    }
    return result;
}

/// `epoch,loss,train_acc,val_acc`; val_acc is empty without a validation set.
inline std::string history_csv(const std::vector<EpochStats>& history) {
    std::string out = "epoch,loss,train_acc,val_acc\n";
    for (const auto& h : history) {
        out += std::to_string(h.epoch) + "," + format_real(h.loss) + "," + format_real(h.train_acc) + "," +
               (std::isnan(h.val_acc) ? std::string() : format_real(h.val_acc)) + "\n";
    }
    return out;
}

}  // namespace churnlens::cnn

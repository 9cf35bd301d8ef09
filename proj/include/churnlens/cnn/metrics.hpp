#pragma once

#include <cstddef>
#include <vector>

#include "churnlens/cnn/model.hpp"
#include "churnlens/cnn/network.hpp"
#include "churnlens/cnn/train.hpp"

namespace churnlens::cnn {

struct ConfusionCounts {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

    std::size_t total() const noexcept { return tp + fp + fn + tn; }
};

/// Fractions in [0, 1]. A metric whose denominator is zero is reported as 0
/// and flagged.
struct EvalMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;
    bool precision_undefined = false;
    bool recall_undefined = false;
    bool f1_undefined = false;
    bool accuracy_undefined = false;
    ConfusionCounts counts;
};

/// Harmonic mean; 0 when precision + recall is 0.
inline double f1_score(double precision, double recall) {
    const double s = precision + recall;
    return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

inline EvalMetrics metrics_from_counts(const ConfusionCounts& c) {
    EvalMetrics m;
    m.counts = c;
    const auto ratio = [](std::size_t num, std::size_t den, bool& undefined) {
        undefined = den == 0;
        return undefined ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    m.precision = ratio(c.tp, c.tp + c.fp, m.precision_undefined);
    m.recall = ratio(c.tp, c.tp + c.fn, m.recall_undefined);
    m.accuracy = ratio(c.tp + c.tn, c.total(), m.accuracy_undefined);
    m.f1_undefined = m.precision + m.recall == 0.0;
    m.f1 = f1_score(m.precision, m.recall);
    return m;
}

/// Confusion counts of predicted vs actual class indices.
inline ConfusionCounts confusion(const std::vector<int>& predicted, const std::vector<int>& actual, int positive_class) {
    ConfusionCounts c;
    for (std::size_t i = 0; i < predicted.size() && i < actual.size(); ++i) {
        const bool p = predicted[i] == positive_class;
        const bool a = actual[i] == positive_class;
        if (p && a) ++c.tp;
        else if (p && !a) ++c.fp;
        else if (!p && a) ++c.fn;
        else ++c.tn;
    }
    return c;
}

inline EvalMetrics evaluate(const CnnModel& model, const std::vector<Example>& labeled, int positive_class) {
    std::vector<int> predicted, actual;
    predicted.reserve(labeled.size());
    actual.reserve(labeled.size());
    Workspace ws(model.architecture());
    for (const auto& ex : labeled) {
        forward_sample(model, ex.input.data, ws);
        predicted.push_back(prediction_from_logits(ws.logits).class_index);
        actual.push_back(ex.label);
    }
    return metrics_from_counts(confusion(predicted, actual, positive_class));
}

}  // namespace churnlens::cnn

#pragma once

#include <string>

#include "dsfc/ops.hpp"

namespace dsfc {

/// Mean binary cross-entropy on the logits plus Dice loss with smoothing
/// eps, the Dice term computed jointly over the whole batch. Targets must
/// be exactly 0/1.
Var bce_dice_loss(const Var& logits, const Tensor& target, double eps = 1.0);

struct ConfusionCounts {
    int64_t tp = 0, fp = 0, fn = 0, tn = 0;

    ConfusionCounts& operator+=(const ConfusionCounts& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        tn += o.tn;
        return *this;
    }
};

/// Exact pixel counts with prediction = (prob >= threshold).
ConfusionCounts confusion_counts(const Tensor& prob, const Tensor& target, double threshold);

struct Metrics {
    double precision = 0.0, recall = 0.0, f1 = 0.0, iou = 0.0;
};

/// Ratio metrics from raw counts; any zero denominator yields 0.
Metrics metrics_from_counts(int64_t tp, int64_t fp, int64_t fn);

/// Flat machine-readable key-value block.
struct MetricsReport {
    Metrics metrics;
    ConfusionCounts counts;
    double threshold = 0.5;

    std::string str() const;
};

} // namespace dsfc

#include <sstream>

#include "dsfc/metrics.hpp"

namespace dsfc {

namespace O = ops;

Var bce_dice_loss(const Var& logits, const Tensor& target, double eps) {
    DSFC_CHECK(eps > 0.0, "bce_dice_loss: eps must be positive, got ", eps);
    DSFC_CHECK(logits.shape() == target.shape(), "bce_dice_loss: logits ", logits.shape().str(),
               " vs target ", target.shape().str());
    Var bce = O::bce_with_logits_mean(logits, target); // validates binary targets
    Var t = Var::leaf(target);
    Var p = O::sigmoid(logits);
    Var inter = O::sum_all(O::mul(p, t));
    Var sums = O::add(O::sum_all(p), O::sum_all(t));
    Var coef = O::div(O::add_scalar(O::mul_scalar(inter, 2.0), eps), O::add_scalar(sums, eps));
    return O::add(bce, O::rsub_scalar(1.0, coef));
}

ConfusionCounts confusion_counts(const Tensor& prob, const Tensor& target, double threshold) {
    DSFC_CHECK(prob.shape() == target.shape(), "confusion_counts: prob ", prob.shape().str(),
               " vs target ", target.shape().str());
    DSFC_CHECK(threshold > 0.0 && threshold < 1.0, "confusion_counts: threshold ", threshold,
               " outside (0,1)");
    ConfusionCounts c;
    for (int64_t i = 0; i < prob.numel(); ++i) {
        const double t = target[i];
        DSFC_CHECK(t == 0.0 || t == 1.0, "confusion_counts: non-binary target value ", t);
        const bool pred = prob[i] >= threshold;
        const bool pos = t == 1.0;
        if (pred && pos)
            ++c.tp;
        else if (pred && !pos)
            ++c.fp;
        else if (!pred && pos)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

Metrics metrics_from_counts(int64_t tp, int64_t fp, int64_t fn) {
    DSFC_CHECK(tp >= 0 && fp >= 0 && fn >= 0, "metrics_from_counts: negative count");
    Metrics m;
    const double dtp = static_cast<double>(tp);
    if (tp + fp > 0) m.precision = dtp / static_cast<double>(tp + fp);
    if (tp + fn > 0) m.recall = dtp / static_cast<double>(tp + fn);
    // Algebraically equal to 2PR/(P+R) wherever that is defined, and exact
    // on integer counts.
    if (2 * tp + fp + fn > 0) m.f1 = 2.0 * dtp / static_cast<double>(2 * tp + fp + fn);
    if (tp + fp + fn > 0) m.iou = dtp / static_cast<double>(tp + fp + fn);
    return m;
}

std::string MetricsReport::str() const {
    std::ostringstream os;
    os.precision(10);
    os << "precision " << metrics.precision << '\n';
    os << "recall " << metrics.recall << '\n';
    os << "f1 " << metrics.f1 << '\n';
    os << "iou " << metrics.iou << '\n';
    os << "threshold " << threshold << '\n';
    os << "tp " << counts.tp << '\n';
    os << "fp " << counts.fp << '\n';
    os << "fn " << counts.fn << '\n';
    os << "tn " << counts.tn << '\n';
    return os.str();
}

} // namespace dsfc

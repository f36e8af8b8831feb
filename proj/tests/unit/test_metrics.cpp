#include <cmath>

#include "doctest.h"
#include "dsfc/gradcheck.hpp"
#include "dsfc/metrics.hpp"
#include "dsfc/rng.hpp"

using namespace dsfc;

namespace {

Tensor random_binary(const Shape& s, Rng& rng) {
    Tensor t(s);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    return t;
}

/// Direct-loop reference for the loss: scalar formulas per pixel, no ops.
double bce_dice_reference(const Tensor& logits, const Tensor& target, double eps) {
    double bce = 0.0, inter = 0.0, psum = 0.0, tsum = 0.0;
    for (int64_t i = 0; i < logits.numel(); ++i) {
        const double z = logits[i], t = target[i];
        // log(1 + e^-|z|) + max(z,0) - z*t, the stable split
        bce += std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0) - z * t;
        const double p = 1.0 / (1.0 + std::exp(-z));
        inter += p * t;
        psum += p;
        tsum += t;
    }
    bce /= static_cast<double>(logits.numel());
    const double dice = 1.0 - (2.0 * inter + eps) / (psum + tsum + eps);
    return bce + dice;
}

} // namespace

TEST_CASE("bce_dice: near zero for confident correct logits") {
    Rng rng(11);
    Tensor target = random_binary(Shape{2, 8, 8, 1}, rng);
    Tensor logits(target.shape());
    for (int64_t i = 0; i < logits.numel(); ++i) logits[i] = target[i] == 1.0 ? 30.0 : -30.0;
    const double loss = bce_dice_loss(Var::leaf(logits), target).value()[0];
    CHECK(loss >= 0.0);
    CHECK(loss < 1e-6);
}

TEST_CASE("bce_dice: closed-form worked example") {
    // logits 0 (p = 1/2) on an all-ones target of 4 pixels, eps = 1:
    //   bce  = ln 2
    //   dice = 1 - (2*2 + 1)/(2 + 4 + 1) = 2/7
    Tensor logits(Shape{1, 2, 2, 1});
    Tensor target(Shape{1, 2, 2, 1});
    target.fill(1.0);
    const double loss = bce_dice_loss(Var::leaf(logits), target, 1.0).value()[0];
    CHECK(loss == doctest::Approx(std::log(2.0) + 2.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("bce_dice: matches direct-loop reference") {
    Rng rng(12);
    for (double eps : {1.0, 0.25}) {
        Tensor target = random_binary(Shape{2, 6, 5, 1}, rng);
        Tensor logits(target.shape());
        for (int64_t i = 0; i < logits.numel(); ++i) logits[i] = rng.normal(0.0, 2.0);
        const double got = bce_dice_loss(Var::leaf(logits), target, eps).value()[0];
        const double want = bce_dice_reference(logits, target, eps);
        CHECK(std::abs(got - want) < 1e-12);
    }
}

TEST_CASE("bce_dice: gradient check") {
    Rng rng(13);
    Tensor target = random_binary(Shape{1, 4, 4, 1}, rng);
    Tensor x0(target.shape());
    for (int64_t i = 0; i < x0.numel(); ++i) x0[i] = rng.normal(0.0, 1.0);
    const auto report = grad_check(
        [&](std::vector<Var>& xs) { return bce_dice_loss(xs[0], target); },
        {{"logits", x0}});
    CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("bce_dice: dice term stays within [0,1]") {
    Rng rng(14);
    for (int rep = 0; rep < 20; ++rep) {
        Tensor target = random_binary(Shape{1, 5, 7, 1}, rng);
        Tensor logits(target.shape());
        for (int64_t i = 0; i < logits.numel(); ++i) logits[i] = rng.normal(0.0, 4.0);
        const double loss = bce_dice_loss(Var::leaf(logits), target).value()[0];
        const double bce = ops::bce_with_logits_mean(Var::leaf(logits), target).value()[0];
        const double dice = loss - bce;
        CHECK(dice >= -1e-12);
        CHECK(dice <= 1.0 + 1e-12);
    }
}

TEST_CASE("bce_dice: validation") {
    Tensor logits(Shape{1, 2, 2, 1});
    Tensor target(Shape{1, 2, 2, 1});
    CHECK_THROWS_AS(bce_dice_loss(Var::leaf(logits), target, 0.0), value_error);
    CHECK_THROWS_AS(bce_dice_loss(Var::leaf(logits), target, -1.0), value_error);
    Tensor bad_shape(Shape{1, 2, 3, 1});
    CHECK_THROWS_AS(bce_dice_loss(Var::leaf(logits), bad_shape), value_error);
    Tensor bad_vals(Shape{1, 2, 2, 1});
    bad_vals[0] = 0.5;
    CHECK_THROWS_AS(bce_dice_loss(Var::leaf(logits), bad_vals), value_error);
}

TEST_CASE("confusion_counts: hand example and threshold boundary") {
    Tensor prob(Shape{1, 1, 4, 1});
    Tensor target(Shape{1, 1, 4, 1});
    prob[0] = 0.9; target[0] = 1.0;  // tp
    prob[1] = 0.5; target[1] = 0.0;  // fp (>= threshold is positive)
    prob[2] = 0.1; target[2] = 1.0;  // fn
    prob[3] = 0.49; target[3] = 0.0; // tn
    const ConfusionCounts c = confusion_counts(prob, target, 0.5);
    CHECK(c.tp == 1);
    CHECK(c.fp == 1);
    CHECK(c.fn == 1);
    CHECK(c.tn == 1);
}

TEST_CASE("confusion_counts: matches pixel-loop oracle on random pairs") {
    Rng rng(15);
    for (int rep = 0; rep < 50; ++rep) {
        const double thr = rng.uniform(0.05, 0.95);
        Tensor prob(Shape{1, 32, 32, 1});
        for (int64_t i = 0; i < prob.numel(); ++i) prob[i] = rng.uniform();
        Tensor target = random_binary(prob.shape(), rng);
        int64_t tp = 0, fp = 0, fn = 0, tn = 0;
        for (int64_t i = 0; i < prob.numel(); ++i) {
            const bool pred = prob[i] >= thr, pos = target[i] == 1.0;
            tp += pred && pos;
            fp += pred && !pos;
            fn += !pred && pos;
            tn += !pred && !pos;
        }
        const ConfusionCounts c = confusion_counts(prob, target, thr);
        CHECK(c.tp == tp);
        CHECK(c.fp == fp);
        CHECK(c.fn == fn);
        CHECK(c.tn == tn);
        CHECK(c.tp + c.fp + c.fn + c.tn == prob.numel());
    }
}

TEST_CASE("confusion_counts: validation") {
    Tensor prob(Shape{1, 2, 2, 1});
    Tensor target(Shape{1, 2, 2, 1});
    CHECK_THROWS_AS(confusion_counts(prob, target, 0.0), value_error);
    CHECK_THROWS_AS(confusion_counts(prob, target, 1.0), value_error);
    Tensor bad(Shape{1, 2, 2, 1});
    bad[2] = 0.3;
    CHECK_THROWS_AS(confusion_counts(prob, bad, 0.5), value_error);
    Tensor other(Shape{1, 2, 3, 1});
    CHECK_THROWS_AS(confusion_counts(prob, other, 0.5), value_error);
}

TEST_CASE("metrics_from_counts: exact fixtures") {
    { // tp=2 fp=1 fn=1
        const Metrics m = metrics_from_counts(2, 1, 1);
        CHECK(m.precision == 2.0 / 3.0);
        CHECK(m.recall == 2.0 / 3.0);
        CHECK(m.f1 == 2.0 / 3.0);
        CHECK(m.iou == 0.5);
    }
    { // perfect
        const Metrics m = metrics_from_counts(5, 0, 0);
        CHECK(m.precision == 1.0);
        CHECK(m.recall == 1.0);
        CHECK(m.f1 == 1.0);
        CHECK(m.iou == 1.0);
    }
    { // all-negative prediction on positive truth
        const Metrics m = metrics_from_counts(0, 0, 5);
        CHECK(m.precision == 0.0);
        CHECK(m.recall == 0.0);
        CHECK(m.f1 == 0.0);
        CHECK(m.iou == 0.0);
    }
    { // everything zero
        const Metrics m = metrics_from_counts(0, 0, 0);
        CHECK(m.precision == 0.0);
        CHECK(m.recall == 0.0);
        CHECK(m.f1 == 0.0);
        CHECK(m.iou == 0.0);
    }
}

TEST_CASE("metrics: F1 count form agrees with the harmonic-mean form") {
    // Exact-rational identity check: 2tp/(2tp+fp+fn) == 2PR/(P+R) for tp>0,
    // verified by cross-multiplication in 128-bit integers, plus a float
    // comparison against the computed value.
    Rng rng(16);
    for (int rep = 0; rep < 2000; ++rep) {
        const int64_t tp = rng.randint(1, 1000000);
        const int64_t fp = rng.randint(0, 1000000);
        const int64_t fn = rng.randint(0, 1000000);
        // 2PR/(P+R) as one fraction: 2*tp^2 / (tp*(2tp+fp+fn))
        const __int128 lhs_num = 2 * static_cast<__int128>(tp);
        const __int128 lhs_den = static_cast<__int128>(2 * tp + fp + fn);
        const __int128 rhs_num = 2 * static_cast<__int128>(tp) * tp;
        const __int128 rhs_den = static_cast<__int128>(tp) * (2 * tp + fp + fn);
        CHECK(lhs_num * rhs_den == rhs_num * lhs_den);

        const Metrics m = metrics_from_counts(tp, fp, fn);
        CHECK(m.f1 == static_cast<double>(2 * tp) / static_cast<double>(2 * tp + fp + fn));
        const double pr = m.precision * m.recall;
        if (m.precision + m.recall > 0.0)
            CHECK(std::abs(m.f1 - 2.0 * pr / (m.precision + m.recall)) < 1e-12);
    }
}

TEST_CASE("metrics: IoU <= F1, equal only in the degenerate cases") {
    Rng rng(17);
    for (int rep = 0; rep < 1000; ++rep) {
        const int64_t tp = rng.randint(0, 50);
        const int64_t fp = rng.randint(0, 50);
        const int64_t fn = rng.randint(0, 50);
        const Metrics m = metrics_from_counts(tp, fp, fn);
        CHECK(m.iou <= m.f1 + 1e-15);
        const bool degenerate = (fp + fn == 0) || tp == 0;
        if (degenerate)
            CHECK(m.iou == m.f1);
        else
            CHECK(m.iou < m.f1);
    }
}

TEST_CASE("metrics: aggregate counts first (micro), not per-image means") {
    // Image A: tp=1 fp=1 fn=0; image B: tp=0 fp=0 fn=2.
    ConfusionCounts total;
    total += ConfusionCounts{1, 1, 0, 0};
    total += ConfusionCounts{0, 0, 2, 0};
    const Metrics micro = metrics_from_counts(total.tp, total.fp, total.fn);
    CHECK(micro.f1 == doctest::Approx(0.4).epsilon(1e-15));
    const double macro =
        (metrics_from_counts(1, 1, 0).f1 + metrics_from_counts(0, 0, 2).f1) / 2.0;
    CHECK(macro == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(micro.f1 != macro);
}

TEST_CASE("metrics report: one key per line") {
    MetricsReport r;
    r.metrics = metrics_from_counts(2, 1, 1);
    r.counts = ConfusionCounts{2, 1, 1, 12};
    r.threshold = 0.5;
    const std::string s = r.str();
    for (const char* key : {"precision ", "recall ", "f1 ", "iou ", "threshold ",
                            "tp ", "fp ", "fn ", "tn "})
        CHECK_MESSAGE(s.find(key) != std::string::npos, "missing key: ", key);
    CHECK(s.find("tn 12") != std::string::npos);
}

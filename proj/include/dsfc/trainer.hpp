#pragma once

#include <string>
#include <vector>

#include "dsfc/config.hpp"
#include "dsfc/data.hpp"
#include "dsfc/metrics.hpp"
#include "dsfc/network.hpp"

namespace dsfc {

/// Adam with decoupled weight decay over every entry of a parameter store:
///   p <- p - lr*wd*p - lr*m_hat/(sqrt(v_hat)+eps).
/// The moment buffers parallel the store's entry order; serialize/restore
/// round-trips them bit-exactly for resumable training.
class AdamW {
public:
    AdamW(ParamStore& ps, double lr, double weight_decay, double beta1 = 0.9,
          double beta2 = 0.999, double eps = 1e-8);

    /// One update from the gradients currently on the parameters.
    void step();

    int64_t t() const { return t_; }
    double lr() const { return lr_; }

    std::string serialize() const;
    void restore(const std::string& blob);

private:
    ParamStore* ps_;
    double lr_, wd_, b1_, b2_, eps_;
    int64_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

struct TrainOptions {
    std::string out_dir;    // checkpoints + append-only log; empty: keep no artifacts
    std::string resume;     // checkpoint to continue from; empty: fresh start
    int64_t max_steps = -1; // optimizer-step budget; -1: epochs govern
};

struct TrainResult {
    int64_t steps = 0;  // total optimizer steps taken (including resumed-over ones)
    int64_t epochs = 0; // completed epochs
    double final_loss = 0.0;
    double best_iou = -1.0; // best validation IoU seen (-1: never evaluated)
    std::vector<double> losses; // per-step losses of this run
    std::string latest_checkpoint;
    std::string best_checkpoint;
};

/// Optimize bce_dice_loss over shuffled mini-batches with random flips,
/// evaluating on the validation set every eval_interval epochs and keeping
/// `latest` plus best-IoU `best` checkpoints. Aborts with a diagnostic if
/// the loss leaves the finite range. Deterministic in cfg.seed, including
/// across a checkpoint resume.
TrainResult train(DSFCNet& net, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& cfg,
                  const TrainOptions& opts = {});

/// Micro-aggregated confusion counts over the whole dataset, then ratio
/// metrics: every pixel of every sample pools into one count vector.
MetricsReport evaluate(const DSFCNet& net, const std::vector<Sample>& dataset,
                       double threshold);

} // namespace dsfc

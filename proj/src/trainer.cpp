#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dsfc/checkpoint.hpp"
#include "dsfc/rng.hpp"
#include "dsfc/trainer.hpp"

namespace fs = std::filesystem;

namespace dsfc {

AdamW::AdamW(ParamStore& ps, double lr, double weight_decay, double beta1, double beta2,
             double eps)
    : ps_(&ps), lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
    DSFC_CHECK(lr >= 0.0, "AdamW: lr must be >= 0");
    DSFC_CHECK(weight_decay >= 0.0, "AdamW: weight_decay must be >= 0");
    DSFC_CHECK(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
               "AdamW: betas must be in [0,1)");
    DSFC_CHECK(eps > 0.0, "AdamW: eps must be positive");
    for (const auto& e : ps.entries()) {
        m_.emplace_back(e.var.shape());
        v_.emplace_back(e.var.shape());
    }
}

void AdamW::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    auto& entries = ps_->entries();
    for (size_t k = 0; k < entries.size(); ++k) {
        Tensor& p = entries[k].var.value();
        const Tensor& g = entries[k].var.grad();
        Tensor& m = m_[k];
        Tensor& v = v_[k];
        for (int64_t i = 0; i < p.numel(); ++i) {
            m[i] = b1_ * m[i] + (1.0 - b1_) * g[i];
            v[i] = b2_ * v[i] + (1.0 - b2_) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            p[i] -= lr_ * wd_ * p[i] + lr_ * m_hat / (std::sqrt(v_hat) + eps_);
        }
    }
}

namespace {

template <typename T>
void put(std::string& out, const T& v) {
    out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(const std::string& in, size_t& pos) {
    DSFC_REQUIRE(pos + sizeof(T) <= in.size(), "optimizer state blob truncated");
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

void put_tensor(std::string& out, const Tensor& t) {
    for (int64_t i = 0; i < t.numel(); ++i) put(out, t[i]);
}

void take_tensor(const std::string& in, size_t& pos, Tensor& t) {
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = take<double>(in, pos);
}

} // namespace

std::string AdamW::serialize() const {
    std::string out;
    put(out, t_);
    put(out, static_cast<uint64_t>(m_.size()));
    for (size_t k = 0; k < m_.size(); ++k) {
        put_tensor(out, m_[k]);
        put_tensor(out, v_[k]);
    }
    return out;
}

void AdamW::restore(const std::string& blob) {
    size_t pos = 0;
    t_ = take<int64_t>(blob, pos);
    const uint64_t n = take<uint64_t>(blob, pos);
    DSFC_REQUIRE(n == m_.size(), "optimizer state has ", n, " buffers, store has ",
                 m_.size());
    for (size_t k = 0; k < m_.size(); ++k) {
        take_tensor(blob, pos, m_[k]);
        take_tensor(blob, pos, v_[k]);
    }
    DSFC_REQUIRE(pos == blob.size(), "optimizer state blob has trailing bytes");
}

MetricsReport evaluate(const DSFCNet& net, const std::vector<Sample>& dataset,
                       double threshold) {
    DSFC_CHECK(!dataset.empty(), "evaluate: empty dataset");
    NoGradGuard guard;
    ConfusionCounts total;
    for (const auto& s : dataset) {
        const SegmentationOutput out = net.forward(Var::leaf(s.image));
        total += confusion_counts(out.probabilities(), s.mask, threshold);
    }
    MetricsReport report;
    report.counts = total;
    report.metrics = metrics_from_counts(total.tp, total.fp, total.fn);
    report.threshold = threshold;
    return report;
}

namespace {

/// Mutable training position, serialized into checkpoint extras so a resumed
/// run continues the exact sample order and augmentation stream.
struct TrainState {
    int64_t step = 0;
    int64_t epoch = 0;
    int64_t cursor = 0; // next unread index into perm
    double best_iou = -1.0;
    std::vector<int64_t> perm;
    std::string data_rng; // serialized engine

    std::string serialize() const {
        std::ostringstream os;
        os << step << ' ' << epoch << ' ' << cursor << ' ';
        os.precision(17);
        os << best_iou << ' ' << perm.size();
        for (int64_t i : perm) os << ' ' << i;
        os << '\n' << data_rng;
        return os.str();
    }

    static TrainState parse(const std::string& text) {
        std::istringstream is(text);
        TrainState st;
        size_t n = 0;
        is >> st.step >> st.epoch >> st.cursor >> st.best_iou >> n;
        st.perm.resize(n);
        for (size_t i = 0; i < n; ++i) is >> st.perm[i];
        DSFC_REQUIRE(is.good(), "corrupt training state in checkpoint");
        is.get(); // newline
        std::ostringstream rest;
        rest << is.rdbuf();
        st.data_rng = rest.str();
        return st;
    }
};

Sample random_flips(const Sample& s, double p, Rng& rng) {
    // Fixed draw order so the stream is stable: horizontal, vertical,
    // diagonal (diagonal only on square samples).
    Sample out = s;
    if (rng.bernoulli(p)) out = augment_flip(out, FlipMode::Horizontal);
    if (rng.bernoulli(p)) out = augment_flip(out, FlipMode::Vertical);
    if (s.image.shape().h == s.image.shape().w && rng.bernoulli(p))
        out = augment_flip(out, FlipMode::Diagonal);
    return out;
}

void stack_batch(const std::vector<Sample>& samples, const std::vector<int64_t>& idx,
                 int64_t lo, int64_t hi, double flip_prob, Rng& rng, Tensor& images,
                 Tensor& masks) {
    const Shape s0 = samples[static_cast<size_t>(idx[static_cast<size_t>(lo)])].image.shape();
    const int64_t b = hi - lo;
    images = Tensor(Shape{b, s0.h, s0.w, 3});
    masks = Tensor(Shape{b, s0.h, s0.w, 1});
    for (int64_t k = 0; k < b; ++k) {
        const Sample& src = samples[static_cast<size_t>(idx[static_cast<size_t>(lo + k)])];
        const Sample aug = flip_prob > 0.0 ? random_flips(src, flip_prob, rng) : src;
        std::memcpy(images.data() + k * aug.image.numel(), aug.image.data(),
                    static_cast<size_t>(aug.image.numel()) * sizeof(double));
        std::memcpy(masks.data() + k * aug.mask.numel(), aug.mask.data(),
                    static_cast<size_t>(aug.mask.numel()) * sizeof(double));
    }
}

void shuffle_in_place(std::vector<int64_t>& perm, Rng& rng) {
    for (int64_t i = static_cast<int64_t>(perm.size()) - 1; i > 0; --i)
        std::swap(perm[static_cast<size_t>(i)],
                  perm[static_cast<size_t>(rng.randint(0, i))]);
}

class TrainLog {
public:
    TrainLog(const std::string& out_dir) {
        if (out_dir.empty()) return;
        fs::create_directories(out_dir);
        path_ = (fs::path(out_dir) / "train.log").string();
        os_.open(path_, std::ios::app);
        DSFC_REQUIRE(os_.good(), "cannot open training log: ", path_);
    }

    void step_line(int64_t step, int64_t epoch, double loss, double lr) {
        if (!os_.is_open()) return;
        os_.precision(17);
        os_ << "step " << step << " epoch " << epoch << " loss " << loss << " lr " << lr
            << '\n';
        os_.flush();
    }

    void eval_line(int64_t step, int64_t epoch, const MetricsReport& r, bool best) {
        if (!os_.is_open()) return;
        os_.precision(17);
        os_ << "step " << step << " epoch " << epoch << " eval_precision "
            << r.metrics.precision << " eval_recall " << r.metrics.recall << " eval_f1 "
            << r.metrics.f1 << " eval_iou " << r.metrics.iou << (best ? " best 1" : "")
            << '\n';
        os_.flush();
    }

private:
    std::string path_;
    std::ofstream os_;
};

} // namespace

TrainResult train(DSFCNet& net, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& cfg,
                  const TrainOptions& opts) {
    cfg.validate();
    DSFC_CHECK(!train_set.empty(), "train: empty training set");
    const Shape s0 = train_set[0].image.shape();
    for (const auto& s : train_set) {
        s.validate();
        DSFC_CHECK(s.image.shape() == s0, "train: mixed sample sizes: ", s0.str(), " vs ",
                   s.image.shape().str());
    }
    for (const auto& s : val_set) s.validate();

    AdamW opt(net.params(), cfg.lr, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.eps);
    TrainState st;
    st.perm.resize(train_set.size());
    std::iota(st.perm.begin(), st.perm.end(), 0);
    Rng data_rng(Rng::mix(cfg.seed, 0x64617461)); // distinct from init stream

    if (!opts.resume.empty()) {
        const LoadedCheckpoint ck = load_checkpoint(opts.resume);
        apply_params(net.params(), ck.params);
        const auto adam_it = ck.extras.find("adamw");
        const auto state_it = ck.extras.find("train_state");
        DSFC_REQUIRE(adam_it != ck.extras.end() && state_it != ck.extras.end(),
                     "checkpoint has no training state (inference-only?): ", opts.resume);
        opt.restore(adam_it->second);
        st = TrainState::parse(state_it->second);
        DSFC_REQUIRE(st.perm.size() == train_set.size(),
                     "checkpoint was trained on ", st.perm.size(), " samples, got ",
                     train_set.size());
        std::istringstream is(st.data_rng);
        data_rng.load(is);
    }

    TrainLog log(opts.out_dir);
    TrainResult result;
    result.best_iou = st.best_iou;

    const auto save = [&](const std::string& name) {
        if (opts.out_dir.empty()) return std::string();
        std::ostringstream rs;
        data_rng.save(rs);
        st.data_rng = rs.str();
        st.best_iou = result.best_iou;
        const std::map<std::string, std::string> extras{
            {"adamw", opt.serialize()},
            {"train_state", st.serialize()},
            {"train_config", cfg.to_json()},
        };
        const std::string path = (fs::path(opts.out_dir) / name).string();
        save_checkpoint(path, net.config(), net.params(), extras);
        return path;
    };

    const int64_t n = static_cast<int64_t>(train_set.size());
    const auto out_of_budget = [&] {
        return opts.max_steps >= 0 && st.step >= opts.max_steps;
    };

    bool budget_hit = out_of_budget();
    while (!budget_hit && st.epoch < cfg.epochs) {
        if (st.cursor == 0) shuffle_in_place(st.perm, data_rng);
        while (st.cursor < n) {
            const int64_t hi = std::min<int64_t>(st.cursor + cfg.batch_size, n);
            Tensor images, masks;
            stack_batch(train_set, st.perm, st.cursor, hi, cfg.flip_prob, data_rng, images,
                        masks);
            net.params().zero_grads();
            const Var loss =
                bce_dice_loss(net.forward(Var::leaf(images)).logits, masks, cfg.dice_eps);
            const double loss_v = loss.value()[0];
            if (!std::isfinite(loss_v)) {
                save("diverged.ckpt");
                throw runtime_error(format_msg("training diverged: loss ", loss_v,
                                               " at step ", st.step + 1));
            }
            backward(loss);
            opt.step();
            st.cursor = hi;
            ++st.step;
            result.losses.push_back(loss_v);
            result.final_loss = loss_v;
            log.step_line(st.step, st.epoch, loss_v, cfg.lr);
            if (out_of_budget()) {
                budget_hit = true;
                break;
            }
        }
        if (st.cursor >= n) {
            st.cursor = 0;
            ++st.epoch;
            result.epochs = st.epoch;
            const bool eval_due = !val_set.empty() && (st.epoch % cfg.eval_interval == 0 ||
                                                       st.epoch == cfg.epochs);
            if (eval_due) {
                const MetricsReport r = evaluate(net, val_set, cfg.threshold);
                const bool best = r.metrics.iou > result.best_iou;
                if (best) {
                    result.best_iou = r.metrics.iou;
                    result.best_checkpoint = save("best.ckpt");
                    std::ostringstream name;
                    name << "step_" << st.step << ".ckpt";
                    save(name.str());
                }
                log.eval_line(st.step, st.epoch, r, best);
            }
            result.latest_checkpoint = save("latest.ckpt");
        }
    }
    if (budget_hit) result.latest_checkpoint = save("latest.ckpt");
    result.steps = st.step;
    return result;
}

} // namespace dsfc

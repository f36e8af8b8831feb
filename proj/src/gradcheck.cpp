#include <algorithm>
#include <cmath>

#include "dsfc/gradcheck.hpp"
#include "dsfc/ops.hpp"
#include "dsfc/rng.hpp"

namespace dsfc {

namespace {

double project(const Tensor& out, const Tensor& weights) {
    double total = 0.0;
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) total += out[i] * weights[i];
    return total;
}

std::vector<int64_t> pick_coords(int64_t numel, int64_t max_coords, Rng& rng) {
    std::vector<int64_t> coords;
    if (max_coords < 0 || max_coords >= numel) {
        coords.resize(static_cast<size_t>(numel));
        for (int64_t i = 0; i < numel; ++i) coords[static_cast<size_t>(i)] = i;
        return coords;
    }
    // Sample without replacement; numel stays desk-scale so a sort is fine.
    std::vector<int64_t> all(static_cast<size_t>(numel));
    for (int64_t i = 0; i < numel; ++i) all[static_cast<size_t>(i)] = i;
    for (int64_t i = 0; i < max_coords; ++i) {
        int64_t j = rng.randint(i, numel - 1);
        std::swap(all[static_cast<size_t>(i)], all[static_cast<size_t>(j)]);
    }
    coords.assign(all.begin(), all.begin() + static_cast<long>(max_coords));
    std::sort(coords.begin(), coords.end());
    return coords;
}

} // namespace

std::string GradCheckReport::str() const {
    std::string s = format_msg("max_rel_err=", max_rel_err, "\n");
    for (const auto& e : entries)
        s += format_msg("  ", e.name, ": max_rel_err=", e.max_rel_err, " coords=",
                        e.coords_checked, " worst=", e.worst_coord, "\n");
    return s;
}

GradCheckReport grad_check(const std::function<Var(std::vector<Var>&)>& fn,
                           const std::vector<std::pair<std::string, Tensor>>& inputs,
                           const GradCheckOpts& opts) {
    DSFC_CHECK(!inputs.empty(), "grad_check: no inputs");
    DSFC_CHECK(opts.step > 0.0, "grad_check: step must be positive");
    Rng rng(opts.seed);

    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const auto& [name, t] : inputs) vars.push_back(Var::leaf(t, true));

    // Analytic pass under a fixed random projection of the output.
    Var out = fn(vars);
    Tensor weights(out.shape());
    for (int64_t i = 0; i < weights.numel(); ++i) weights[i] = rng.uniform(-1.0, 1.0);
    Var loss = ops::sum_all(ops::mul(out, Var::leaf(weights)));
    backward(loss);

    std::vector<Tensor> analytic;
    analytic.reserve(vars.size());
    for (auto& v : vars)
        analytic.push_back(v.has_grad() ? v.grad() : Tensor(v.shape()));

    auto eval = [&]() {
        NoGradGuard ng;
        return project(fn(vars).value(), weights);
    };

    GradCheckReport report;
    for (size_t vi = 0; vi < vars.size(); ++vi) {
        GradCheckEntry entry;
        entry.name = inputs[vi].first;
        Tensor& x = vars[vi].value();
        const auto coords = pick_coords(x.numel(), opts.max_coords_per_input, rng);
        for (int64_t i : coords) {
            const double orig = x[i];
            x[i] = orig + opts.step;
            const double lp = eval();
            x[i] = orig - opts.step;
            const double lm = eval();
            x[i] = orig;
            const double numeric = (lp - lm) / (2.0 * opts.step);
            const double a = analytic[vi][i];
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
            if (rel > entry.max_rel_err) {
                entry.max_rel_err = rel;
                entry.worst_coord = i;
            }
            ++entry.coords_checked;
        }
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.entries.push_back(std::move(entry));
    }
    return report;
}

} // namespace dsfc

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "fedsim/aggregators.hpp"
#include "fedsim/client.hpp"
#include "fedsim/error.hpp"
#include "fedsim/mlp.hpp"

namespace fedsim {

enum class StabilizeMode { renormalize, softmax };

// Per-client importance weights on the probability simplex. In softmax mode
// the weights are parametrized by logits and stay strictly inside (0,1).
struct ImportanceWeights {
    std::vector<double> k;
    std::vector<double> logits;  // softmax mode only
    StabilizeMode mode = StabilizeMode::renormalize;
    double tau = 1.0;    // softmax temperature
    double alpha = 0.0;  // exponential smoothing, 0 = off
    double floor = 0.0;  // clip lower bound, 0 = off

    static ImportanceWeights uniform(std::size_t n, StabilizeMode mode,
                                     double tau = 1.0, double alpha = 0.0,
                                     double floor = 0.0) {
        ImportanceWeights w;
        w.mode = mode;
        w.tau = tau;
        w.alpha = alpha;
        w.floor = floor;
        w.k.assign(n, 1.0 / double(n));
        if (mode == StabilizeMode::softmax) w.logits.assign(n, 0.0);
        return w;
    }

    double sum() const {
        double s = 0.0;
        for (double v : k) s += v;
        return s;
    }
};

struct MetaConfig {
    double eta = 1e-4;  // meta learning rate, kept below the client lr
    int meta_steps = 1;
    bool re_aggregate_after_update = false;
};

struct MetaGradient {
    std::vector<double> g;  // dL/dk_i per client
};

// W = sum_i k_i * params_i. Callers must pass stabilized weights.
inline ParamVector aggregate_weighted(const std::vector<ClientUpdate>& updates,
                                      const ImportanceWeights& weights) {
    if (weights.k.size() != updates.size())
        throw InvariantError("aggregate_weighted: " + std::to_string(weights.k.size()) +
                             " weights vs " + std::to_string(updates.size()) +
                             " updates");
    const double s = weights.sum();
    if (std::abs(s - 1.0) > 1e-6)
        throw InvariantError("aggregate_weighted: weights sum to " +
                             std::to_string(s) + ", expected 1 (unstabilized?)");
    return weighted_sum(updates, weights.k);
}

// Meta-validation loss of the aggregated model plus its gradient with respect
// to each importance weight. Aggregation is linear in k, so dL/dk_i is the
// inner product of dL/dW with client i's update: one forward and one backward
// pass total, then one inner product per client.
inline std::pair<double, MetaGradient> meta_gradient(
    const std::vector<ClientUpdate>& updates, const ParamVector& aggregated,
    const MlpArchitecture& arch, const LabeledDataset& metaval) {
    if (metaval.size() == 0)
        throw ConfigError("meta_gradient: empty meta-validation set");
    check_round(updates, "meta_gradient");

    auto [loss, model_grad] = backward(aggregated, arch, metaval.features, metaval.labels);

    MetaGradient meta;
    meta.g.resize(updates.size());
    for (std::size_t i = 0; i < updates.size(); ++i) {
        const double* p = updates[i].params.data();
        double dot = 0.0;
        for (std::size_t j = 0; j < model_grad.size(); ++j) dot += model_grad[j] * p[j];
        meta.g[i] = dot;
    }
    return {loss, std::move(meta)};
}

// One meta step on the importance weights; the result is raw and must go
// through stabilize(). Renormalize mode steps k directly and clamps at zero;
// softmax mode steps the logits with the gradient pulled back through the
// softmax Jacobian.
inline ImportanceWeights update_weights(const ImportanceWeights& weights,
                                        const MetaGradient& grad,
                                        const MetaConfig& config) {
    if (grad.g.size() != weights.k.size())
        throw InvariantError("update_weights: gradient length mismatch");
    for (double g : grad.g)
        if (!std::isfinite(g))
            throw NumericError("update_weights: non-finite meta-gradient");

    ImportanceWeights out = weights;
    if (weights.mode == StabilizeMode::renormalize) {
        for (std::size_t i = 0; i < out.k.size(); ++i)
            out.k[i] = std::max(0.0, weights.k[i] - config.eta * grad.g[i]);
    } else {
        // dL/ds_i = k_i * (g_i - sum_j k_j g_j) / tau; a common shift in g
        // cancels exactly because the k sum to 1.
        double mean = 0.0;
        for (std::size_t j = 0; j < weights.k.size(); ++j)
            mean += weights.k[j] * grad.g[j];
        for (std::size_t i = 0; i < out.logits.size(); ++i) {
            const double pullback = weights.k[i] * (grad.g[i] - mean) / weights.tau;
            out.logits[i] = weights.logits[i] - config.eta * pullback;
        }
    }
    return out;
}

// Projects raw weights back onto the simplex. Renormalize mode divides by the
// sum; if every weight was clamped to zero the vector resets to uniform and
// `degenerate`, when given, is set so the caller can log the recovery.
// Softmax mode computes a max-subtracted softmax of logits/tau, then mixes in
// a vanishing uniform component so no weight is ever exactly 0 or 1.
inline ImportanceWeights stabilize(const ImportanceWeights& raw,
                                   bool* degenerate = nullptr) {
    if (degenerate) *degenerate = false;
    ImportanceWeights out = raw;
    const std::size_t n = raw.k.size();
    if (n == 0) throw InvariantError("stabilize: empty weight vector");

    if (raw.mode == StabilizeMode::renormalize) {
        const double s = raw.sum();
        if (s <= 0.0) {
            out.k.assign(n, 1.0 / double(n));
            if (degenerate) *degenerate = true;
            return out;
        }
        if (s != 1.0)
            for (double& v : out.k) v /= s;
        return out;
    }

    if (raw.logits.size() != n)
        throw InvariantError("stabilize: softmax mode without logits");
    if (raw.tau <= 0.0) throw ConfigError("stabilize: tau must be > 0");
    double mx = raw.logits[0];
    for (double s : raw.logits) mx = std::max(mx, s);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out.k[i] = std::exp((raw.logits[i] - mx) / raw.tau);
        sum += out.k[i];
    }
    constexpr double mix = 1e-12;
    for (double& v : out.k) v = (v / sum + mix / double(n)) / (1.0 + mix);
    return out;
}

// Exponential smoothing between the previous and the freshly stabilized
// weights, followed by clipping to [floor, 1] and renormalization.
inline ImportanceWeights smooth_and_clip(const ImportanceWeights& previous,
                                         const ImportanceWeights& next,
                                         double alpha, double floor) {
    const std::size_t n = next.k.size();
    if (previous.k.size() != n)
        throw InvariantError("smooth_and_clip: weight count mismatch");
    if (alpha < 0.0 || alpha > 1.0)
        throw ConfigError("smooth_and_clip: alpha must lie in [0,1]");
    if (floor < 0.0 || floor >= 1.0 / double(n))
        throw ConfigError("smooth_and_clip: floor must lie in [0, 1/N); got " +
                          std::to_string(floor) + " for N = " + std::to_string(n));

    ImportanceWeights out = next;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double blended = alpha * previous.k[i] + (1.0 - alpha) * next.k[i];
        out.k[i] = std::clamp(blended, floor, 1.0);
        sum += out.k[i];
    }
    if (sum != 1.0)
        for (double& v : out.k) v /= sum;
    return out;
}

}  // namespace fedsim

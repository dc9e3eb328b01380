#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include "fedsim/attack.hpp"
#include "fedsim/data.hpp"
#include "fedsim/error.hpp"
#include "fedsim/mlp.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;

    void reset(std::size_t param_count) {
        m.assign(param_count, 0.0);
        v.assign(param_count, 0.0);
        step = 0;
    }
};

struct ClientState {
    int client_id = 0;
    LabeledDataset shard;  // already label-flipped for label_flip attackers
    bool is_malicious = false;
    AttackSpec attack;
    AdamState optimizer;
};

struct ClientUpdate {
    int client_id = 0;
    ParamVector params;
    std::size_t num_samples = 0;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

// Local training for one round: Adam from fresh moments on the client shard,
// starting at the broadcast global parameters. Gaussian-noise attackers
// perturb the trained vector before returning it; label-flip attackers train
// normally on their pre-flipped shard. The output is fully determined by
// (seed, shard, start params). `epoch_losses`, when given, receives the mean
// training loss of each epoch.
inline ClientUpdate local_train(const ParamVector& global_params,
                                const MlpArchitecture& arch, ClientState& state,
                                int epochs, std::size_t batch_size, double lr,
                                std::uint64_t seed,
                                std::vector<double>* epoch_losses = nullptr) {
    if (batch_size == 0) throw ConfigError("local_train: batch size must be >= 1");
    check_params(global_params, arch, "local_train");
    const std::size_t n = state.shard.size();

    ClientUpdate update;
    update.client_id = state.client_id;
    update.num_samples = n;
    update.params = global_params;
    if (epochs <= 0 || n == 0) return update;

    AdamState& opt = state.optimizer;
    opt.reset(global_params.size());

    auto shuffle_rng = make_rng({seed, stream::client_train});
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    ParamVector& params = update.params;
    Matrix batch;
    std::vector<int> batch_labels;
    const std::size_t dim = state.shard.feature_dim();

    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += batch_size) {
            const std::size_t end = std::min(n, start + batch_size);
            const std::size_t bs = end - start;
            batch.rows = bs;
            batch.cols = dim;
            batch.data.resize(bs * dim);
            batch_labels.resize(bs);
            for (std::size_t i = 0; i < bs; ++i) {
                const double* src = state.shard.features.row(order[start + i]);
                std::copy(src, src + dim, batch.data.data() + i * dim);
                batch_labels[i] = state.shard.labels[order[start + i]];
            }

            double loss = 0.0;
            GradientVector grad;
            try {
                std::tie(loss, grad) = backward(params, arch, batch, batch_labels);
            } catch (const NumericError& e) {
                throw NumericError("client " + std::to_string(state.client_id) +
                                   " epoch " + std::to_string(epoch) + ": " + e.what());
            }
            epoch_loss += loss;
            ++batches;

            opt.step += 1;
            const double bc1 = 1.0 - std::pow(kAdamBeta1, double(opt.step));
            const double bc2 = 1.0 - std::pow(kAdamBeta2, double(opt.step));
            for (std::size_t i = 0; i < params.size(); ++i) {
                opt.m[i] = kAdamBeta1 * opt.m[i] + (1.0 - kAdamBeta1) * grad[i];
                opt.v[i] = kAdamBeta2 * opt.v[i] + (1.0 - kAdamBeta2) * grad[i] * grad[i];
                const double mhat = opt.m[i] / bc1;
                const double vhat = opt.v[i] / bc2;
                params[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
            }
        }
        if (epoch_losses) epoch_losses->push_back(epoch_loss / double(batches));
    }

    if (state.is_malicious && state.attack.kind == AttackKind::gaussian_noise) {
        auto noise_rng = make_rng({seed, stream::client_noise});
        update.params = noise_update(update.params, state.attack.sigma, noise_rng);
    }
    return update;
}

}  // namespace fedsim

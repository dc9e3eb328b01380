#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fedsim/aggregators.hpp"
#include "fedsim/attack.hpp"
#include "fedsim/client.hpp"
#include "fedsim/data.hpp"
#include "fedsim/error.hpp"
#include "fedsim/fedaot.hpp"
#include "fedsim/mlp.hpp"
#include "fedsim/parallel.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

struct DatasetSpec {
    enum class Kind { idx, blobs };
    Kind kind = Kind::blobs;

    // idx: paths to image/label pairs; train_limit caps the training pool,
    // samples past the cap feed the meta-validation holdout.
    std::string train_images, train_labels;
    std::string test_images, test_labels;
    std::size_t train_limit = 0;  // 0 = whole file

    // blobs: one generated set, sliced into pool / holdout / test. Samples
    // are class-interleaved so contiguous slices stay stratified.
    int blob_classes = 10;
    int blob_per_class = 120;
    int blob_dim = 32;
    double blob_test_fraction = 0.2;
};

struct LocalTrainConfig {
    int epochs = 1;
    std::size_t batch_size = 32;
    double lr = 1e-3;
};

struct MetaSettings {
    double eta = 1e-4;
    int meta_steps = 1;
    bool re_aggregate_after_update = false;
    StabilizeMode mode = StabilizeMode::renormalize;
    double tau = 1.0;
    double alpha = 0.0;  // smoothing toward the previous weights, 0 = off
    double floor = 0.0;  // lower clip after smoothing, 0 = off

    MetaConfig step_config() const { return {eta, meta_steps, re_aggregate_after_update}; }
};

struct FederationConfig {
    std::string name = "experiment";
    int num_clients = 20;
    int rounds = 30;
    double clients_per_round = 1.0;
    std::vector<std::size_t> hidden_layers = {128, 64};
    DatasetSpec dataset;
    PartitionScheme scheme = PartitionScheme::iid;
    double beta = 0.5;
    AttackSpec attack;
    AggregatorChoice aggregator;
    LocalTrainConfig local;
    MetaSettings meta;
    std::size_t metaval_size = 500;
    bool metaval_resample = false;
    std::uint64_t seed = 42;
    unsigned threads = 1;

    void validate() const {
        if (num_clients < 1)
            throw ConfigError("num_clients: must be >= 1; got " +
                              std::to_string(num_clients));
        if (rounds < 0)
            throw ConfigError("rounds: must be >= 0; got " + std::to_string(rounds));
        if (!(clients_per_round > 0.0) || clients_per_round > 1.0)
            throw ConfigError("clients_per_round: must lie in (0, 1]; got " +
                              std::to_string(clients_per_round));
        if (hidden_layers.empty())
            throw ConfigError("hidden_layers: need at least one hidden layer");
        for (std::size_t h : hidden_layers)
            if (h == 0) throw ConfigError("hidden_layers: layer width must be >= 1");
        attack.validate();
        if (local.epochs < 0)
            throw ConfigError("local.epochs: must be >= 0; got " +
                              std::to_string(local.epochs));
        if (local.batch_size == 0)
            throw ConfigError("local.batch_size: must be >= 1");
        if (!(local.lr > 0.0))
            throw ConfigError("local.lr: must be > 0; got " + std::to_string(local.lr));
        if (meta.eta < 0.0)
            throw ConfigError("meta.eta: must be >= 0; got " + std::to_string(meta.eta));
        if (meta.meta_steps < 1)
            throw ConfigError("meta.meta_steps: must be >= 1; got " +
                              std::to_string(meta.meta_steps));
        if (!(meta.tau > 0.0))
            throw ConfigError("meta.tau: must be > 0; got " + std::to_string(meta.tau));
        if (meta.alpha < 0.0 || meta.alpha > 1.0)
            throw ConfigError("meta.alpha: must lie in [0,1]; got " +
                              std::to_string(meta.alpha));
        if (meta.floor < 0.0 || meta.floor >= 1.0 / double(num_clients))
            throw ConfigError("meta.floor: must lie in [0, 1/num_clients); got " +
                              std::to_string(meta.floor));
        if (metaval_size == 0)
            throw ConfigError("metaval.size: must be >= 1");
        if (aggregator.trim_count < 0)
            throw ConfigError("aggregator.trim_count: must be >= 0");
        if (aggregator.assumed_attackers < 0)
            throw ConfigError("aggregator.assumed_attackers: must be >= 0");
        if (dataset.kind == DatasetSpec::Kind::blobs) {
            if (dataset.blob_classes < 2)
                throw ConfigError("dataset.classes: must be >= 2");
            if (dataset.blob_per_class < 1)
                throw ConfigError("dataset.samples_per_class: must be >= 1");
            if (dataset.blob_dim < 1)
                throw ConfigError("dataset.feature_dim: must be >= 1");
            if (!(dataset.blob_test_fraction > 0.0) || dataset.blob_test_fraction >= 1.0)
                throw ConfigError("dataset.test_fraction: must lie in (0, 1)");
        } else {
            if (dataset.train_images.empty() || dataset.train_labels.empty() ||
                dataset.test_images.empty() || dataset.test_labels.empty())
                throw ConfigError("dataset: idx source needs all four file paths");
        }
        if (scheme == PartitionScheme::dirichlet && !(beta > 0.0))
            throw ConfigError("partition.beta: must be > 0; got " + std::to_string(beta));
    }
};

struct RoundRecord {
    int round = 0;  // 1-based
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    double meta_loss = 0.0;
    std::vector<double> k;        // per client, sums to 1
    std::vector<char> malicious;  // per client
    double wall_seconds = 0.0;
    bool degenerate_reset = false;
};

struct ExperimentResult {
    FederationConfig config;
    std::vector<RoundRecord> records;
    double final_accuracy = 0.0;
    double final_macro_f1 = 0.0;
    std::vector<double> mean_k_honest;     // per round
    std::vector<double> mean_k_malicious;  // per round, 0 when no attackers
    ParamVector final_params;
    std::vector<int> attacker_ids;
};

// Called once per round with the model the round produced.
using RoundObserver = std::function<void(int round, const ParamVector& model)>;

namespace detail {

struct PreparedData {
    LabeledDataset test;
    LabeledDataset metaval;
    LabeledDataset holdout;  // resample source; empty when resample is off
    LabeledDataset pool;     // training samples handed to clients
};

// Stratified pick scanning a shuffled order; used for per-round metaval
// resampling.
inline std::vector<std::size_t> stratified_shuffled(const LabeledDataset& ds,
                                                    std::size_t count,
                                                    std::mt19937_64& rng) {
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const int c = ds.num_classes;
    std::vector<std::size_t> want(c, count / c);
    for (std::size_t r = 0; r < count % c; ++r) want[r] += 1;
    std::vector<std::size_t> taken(c, 0);
    std::vector<std::size_t> out;
    out.reserve(count);
    for (std::size_t i : order) {
        if (out.size() == count) break;
        const int y = ds.labels[i];
        if (taken[y] < want[y]) {
            taken[y] += 1;
            out.push_back(i);
        }
    }
    if (out.size() < count)
        throw ConfigError("metaval resample: holdout cannot supply " +
                          std::to_string(count) + " stratified samples");
    return out;
}

inline PreparedData prepare_data(const FederationConfig& cfg) {
    LabeledDataset train, test;
    std::size_t pool_end = 0;
    if (cfg.dataset.kind == DatasetSpec::Kind::idx) {
        train = load_idx(cfg.dataset.train_images, cfg.dataset.train_labels);
        test = load_idx(cfg.dataset.test_images, cfg.dataset.test_labels);
        const int classes = std::max(train.num_classes, test.num_classes);
        train.num_classes = classes;
        test.num_classes = classes;
        pool_end = cfg.dataset.train_limit == 0
                       ? train.size()
                       : std::min(cfg.dataset.train_limit, train.size());
    } else {
        LabeledDataset all =
            synth_blobs(cfg.dataset.blob_classes, cfg.dataset.blob_per_class,
                        cfg.dataset.blob_dim, mix_seed({cfg.seed, stream::dataset}));
        const std::size_t total = all.size();
        std::size_t test_count = static_cast<std::size_t>(
            std::llround(cfg.dataset.blob_test_fraction * double(total)));
        // keep the tail slice stratified: round down to a class multiple
        test_count -= test_count % std::size_t(cfg.dataset.blob_classes);
        test_count = std::max<std::size_t>(test_count, std::size_t(cfg.dataset.blob_classes));
        if (test_count >= total)
            throw ConfigError("dataset.test_fraction: leaves no training data");
        std::vector<std::size_t> idx(total);
        std::iota(idx.begin(), idx.end(), 0);
        test = subset(all, {idx.begin() + std::ptrdiff_t(total - test_count), idx.end()});
        train = subset(all, {idx.begin(), idx.begin() + std::ptrdiff_t(total - test_count)});
        pool_end = train.size();
    }
    train.validate();
    test.validate();

    // Meta-validation comes from the holdout tail past the pool when one
    // exists, otherwise it is carved out of the pool itself.
    std::vector<std::size_t> mv_idx;
    bool from_tail = false;
    if (pool_end < train.size()) {
        try {
            mv_idx = stratified_indices(train, pool_end, cfg.metaval_size);
            from_tail = true;
        } catch (const ConfigError&) {
        }
    }
    if (!from_tail) mv_idx = stratified_indices(train, 0, cfg.metaval_size);

    PreparedData out;
    out.test = std::move(test);
    out.metaval = subset(train, mv_idx);
    if (cfg.metaval_resample) {
        if (from_tail) {
            std::vector<std::size_t> tail(train.size() - pool_end);
            std::iota(tail.begin(), tail.end(), pool_end);
            out.holdout = subset(train, tail);
        } else {
            out.holdout = out.metaval;
        }
    }

    std::vector<char> in_metaval(train.size(), 0);
    if (!from_tail)
        for (std::size_t i : mv_idx) in_metaval[i] = 1;
    std::vector<std::size_t> pool_idx;
    pool_idx.reserve(pool_end);
    for (std::size_t i = 0; i < pool_end; ++i)
        if (!in_metaval[i]) pool_idx.push_back(i);
    out.pool = subset(train, pool_idx);
    return out;
}

inline std::vector<int> pick_participants(const FederationConfig& cfg, int round) {
    const int n = cfg.num_clients;
    std::vector<int> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    if (cfg.clients_per_round >= 1.0) return ids;
    int count = static_cast<int>(std::llround(cfg.clients_per_round * n));
    count = std::clamp(count, 1, n);
    auto rng = make_rng({cfg.seed, stream::participation, std::uint64_t(round)});
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(count);
    std::sort(ids.begin(), ids.end());
    return ids;
}

}  // namespace detail

inline ExperimentResult run_experiment(const FederationConfig& cfg,
                                       const RoundObserver& observer = {}) {
    cfg.validate();
    detail::PreparedData data = detail::prepare_data(cfg);

    const int n = cfg.num_clients;
    PartitionPlan plan = partition(data.pool, n, cfg.scheme, cfg.beta, cfg.seed);
    std::set<int> attackers =
        cfg.attack.kind == AttackKind::none
            ? std::set<int>{}
            : select_attackers(n, cfg.attack.fraction, cfg.seed);

    std::vector<ClientState> clients(n);
    for (int c = 0; c < n; ++c) {
        clients[c].client_id = c;
        clients[c].is_malicious = attackers.count(c) > 0;
        clients[c].attack = clients[c].is_malicious ? cfg.attack : AttackSpec{};
        clients[c].shard = subset(data.pool, plan.assignments[c]);
        if (clients[c].is_malicious && cfg.attack.kind == AttackKind::label_flip)
            clients[c].shard = flip_labels(clients[c].shard);
    }

    MlpArchitecture arch;
    arch.layer_sizes.push_back(data.pool.feature_dim());
    for (std::size_t h : cfg.hidden_layers) arch.layer_sizes.push_back(h);
    arch.layer_sizes.push_back(std::size_t(data.pool.num_classes));

    ParamVector global = init_params(arch, cfg.seed);
    ImportanceWeights weights = ImportanceWeights::uniform(
        std::size_t(n), cfg.meta.mode, cfg.meta.tau, cfg.meta.alpha, cfg.meta.floor);
    FoolsGoldState fg_state;

    ExperimentResult result;
    result.config = cfg;
    result.attacker_ids.assign(attackers.begin(), attackers.end());

    for (int t = 1; t <= cfg.rounds; ++t) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const std::vector<int> parts = detail::pick_participants(cfg, t);
            const std::size_t p = parts.size();

            std::vector<ClientUpdate> updates(p);
            parallel_for(p, cfg.threads, [&](std::size_t j) {
                const int c = parts[j];
                updates[j] = local_train(
                    global, arch, clients[c], cfg.local.epochs, cfg.local.batch_size,
                    cfg.local.lr,
                    mix_seed({cfg.seed, std::uint64_t(t), std::uint64_t(c)}));
            });

            const LabeledDataset* mv = &data.metaval;
            LabeledDataset mv_round;
            if (cfg.metaval_resample) {
                auto rng = make_rng({cfg.seed, stream::metaval, std::uint64_t(t)});
                mv_round = subset(data.holdout, detail::stratified_shuffled(
                                                    data.holdout, cfg.metaval_size, rng));
                mv = &mv_round;
            }

            RoundRecord rec;
            rec.round = t;
            rec.k.assign(std::size_t(n), 0.0);
            rec.malicious.resize(std::size_t(n));
            for (int c = 0; c < n; ++c) rec.malicious[c] = clients[c].is_malicious;

            switch (cfg.aggregator.kind) {
                case AggregatorKind::fedavg: {
                    global = fedavg(updates);
                    std::size_t total = 0;
                    for (const auto& u : updates) total += u.num_samples;
                    for (std::size_t j = 0; j < p; ++j)
                        rec.k[parts[j]] = total == 0 ? 1.0 / double(p)
                                                     : double(updates[j].num_samples) /
                                                           double(total);
                    break;
                }
                case AggregatorKind::geomed: {
                    global = geomed(updates);
                    for (int c : parts) rec.k[c] = 1.0 / double(p);
                    break;
                }
                case AggregatorKind::trimmed_mean: {
                    global = trimmed_mean(updates, cfg.aggregator.trim_count);
                    for (int c : parts) rec.k[c] = 1.0 / double(p);
                    break;
                }
                case AggregatorKind::krum: {
                    int sel = 0;
                    global = krum(updates, cfg.aggregator.assumed_attackers, &sel);
                    rec.k[parts[std::size_t(sel)]] = 1.0;
                    break;
                }
                case AggregatorKind::foolsgold: {
                    FoolsGoldResult fg = foolsgold(updates, fg_state);
                    global = std::move(fg.params);
                    for (std::size_t j = 0; j < p; ++j) rec.k[parts[j]] = fg.weights[j];
                    break;
                }
                case AggregatorKind::fedaot: {
                    // Round weights live on the participating subset; absent
                    // clients keep their value and the subset is renormalized.
                    ImportanceWeights kr = weights;
                    double mass = 1.0;
                    bool degenerate_subset = false;
                    if (cfg.meta.mode == StabilizeMode::softmax) {
                        kr.k.resize(p);
                        kr.logits.resize(p);
                        for (std::size_t j = 0; j < p; ++j)
                            kr.logits[j] = weights.logits[std::size_t(parts[j])];
                        kr = stabilize(kr);
                    } else {
                        kr.k.resize(p);
                        mass = 0.0;
                        for (std::size_t j = 0; j < p; ++j) {
                            kr.k[j] = weights.k[std::size_t(parts[j])];
                            mass += kr.k[j];
                        }
                        if (mass <= 0.0) {
                            kr.k.assign(p, 1.0 / double(p));
                            degenerate_subset = true;
                        } else if (mass != 1.0) {
                            for (double& v : kr.k) v /= mass;
                        }
                    }

                    ParamVector agg = aggregate_weighted(updates, kr);
                    for (int s = 0; s < cfg.meta.meta_steps; ++s) {
                        auto [loss, grad] = meta_gradient(updates, agg, arch, *mv);
                        if (s == 0) rec.meta_loss = loss;
                        const ImportanceWeights prev = kr;
                        bool degen = false;
                        kr = stabilize(update_weights(kr, grad, cfg.meta.step_config()),
                                       &degen);
                        rec.degenerate_reset |= degen;
                        kr = smooth_and_clip(prev, kr, cfg.meta.alpha, cfg.meta.floor);
                        if (cfg.meta.re_aggregate_after_update)
                            agg = aggregate_weighted(updates, kr);
                    }
                    global = std::move(agg);

                    if (cfg.meta.mode == StabilizeMode::softmax) {
                        for (std::size_t j = 0; j < p; ++j)
                            weights.logits[std::size_t(parts[j])] = kr.logits[j];
                        ImportanceWeights full = stabilize(weights);
                        rec.k = full.k;
                    } else if (!degenerate_subset) {
                        // Scale back by the subset mass so the full vector
                        // keeps summing to 1.
                        for (std::size_t j = 0; j < p; ++j)
                            weights.k[std::size_t(parts[j])] = kr.k[j] * mass;
                        rec.k = weights.k;
                    } else {
                        // All participants had weight 0: the round used a
                        // uniform combination; persistent weights unchanged.
                        rec.degenerate_reset = true;
                        rec.k = weights.k;
                    }
                    break;
                }
            }

            if (cfg.aggregator.kind != AggregatorKind::fedaot) {
                Matrix probs = forward(global, arch, mv->features);
                rec.meta_loss = cross_entropy_loss(probs, mv->labels);
            }

            auto [acc, f1] = evaluate(global, arch, data.test);
            rec.accuracy = acc;
            rec.macro_f1 = f1;
            rec.wall_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                    .count();
            result.records.push_back(std::move(rec));
            if (observer) observer(t, global);
        } catch (const Error& e) {
            throw Error("round " + std::to_string(t) + ": " + e.what());
        }
    }

    if (result.records.empty()) {
        auto [acc, f1] = evaluate(global, arch, data.test);
        result.final_accuracy = acc;
        result.final_macro_f1 = f1;
    } else {
        result.final_accuracy = result.records.back().accuracy;
        result.final_macro_f1 = result.records.back().macro_f1;
    }
    result.final_params = std::move(global);

    for (const RoundRecord& rec : result.records) {
        double hs = 0.0, ms = 0.0;
        std::size_t hc = 0, mc = 0;
        for (int c = 0; c < n; ++c) {
            if (rec.malicious[c]) {
                ms += rec.k[c];
                mc += 1;
            } else {
                hs += rec.k[c];
                hc += 1;
            }
        }
        result.mean_k_honest.push_back(hc ? hs / double(hc) : 0.0);
        result.mean_k_malicious.push_back(mc ? ms / double(mc) : 0.0);
    }
    return result;
}

struct SweepEntry {
    double fraction = 0.0;
    bool failed = false;
    std::string error;
    ExperimentResult result;  // valid only when !failed
};

// One experiment per attack fraction, each with a seed derived from the base
// seed and the fraction's position. Failures are collected, not fatal.
inline std::vector<SweepEntry> run_sweep(const FederationConfig& base,
                                         const std::vector<double>& fractions,
                                         const RoundObserver& observer = {}) {
    std::vector<SweepEntry> out;
    out.reserve(fractions.size());
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        SweepEntry entry;
        entry.fraction = fractions[i];
        FederationConfig cfg = base;
        cfg.attack.fraction = fractions[i];
        cfg.seed = mix_seed({base.seed, stream::sweep, std::uint64_t(i)});
        try {
            entry.result = run_experiment(cfg, observer);
        } catch (const std::exception& e) {
            entry.failed = true;
            entry.error = e.what();
        }
        out.push_back(std::move(entry));
    }
    return out;
}

}  // namespace fedsim

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "fedsim/client.hpp"
#include "fedsim/error.hpp"
#include "fedsim/mlp.hpp"

namespace fedsim {

enum class AggregatorKind { fedavg, geomed, trimmed_mean, krum, foolsgold, fedaot };

struct AggregatorChoice {
    AggregatorKind kind = AggregatorKind::fedavg;
    int trim_count = 1;          // trimmed_mean
    int assumed_attackers = 1;   // krum's f
};

inline void check_round(const std::vector<ClientUpdate>& updates, const char* what) {
    if (updates.empty())
        throw ProtocolError(std::string(what) + ": empty round");
    const std::size_t dim = updates.front().params.size();
    for (const auto& u : updates)
        if (u.params.size() != dim)
            throw ProtocolError(std::string(what) + ": update length mismatch (" +
                                std::to_string(u.params.size()) + " vs " +
                                std::to_string(dim) + ")");
}

// Shared convex-combination kernel: sum_i weights[i] * updates[i].params,
// accumulated client by client in index order.
inline ParamVector weighted_sum(const std::vector<ClientUpdate>& updates,
                                const std::vector<double>& weights) {
    check_round(updates, "weighted_sum");
    if (weights.size() != updates.size())
        throw InvariantError("weighted_sum: weight count mismatch");
    ParamVector out(updates.front().params.size(), 0.0);
    for (std::size_t i = 0; i < updates.size(); ++i) {
        const double w = weights[i];
        if (w == 0.0) continue;
        const double* p = updates[i].params.data();
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += w * p[j];
    }
    return out;
}

// Sample-count weighted mean: sum_i (n_i / sum_j n_j) * params_i.
inline ParamVector fedavg(const std::vector<ClientUpdate>& updates) {
    check_round(updates, "fedavg");
    double total = 0.0;
    for (const auto& u : updates) total += double(u.num_samples);
    std::vector<double> weights(updates.size());
    if (total <= 0.0) {
        std::fill(weights.begin(), weights.end(), 1.0 / double(updates.size()));
    } else {
        for (std::size_t i = 0; i < updates.size(); ++i)
            weights[i] = double(updates[i].num_samples) / total;
    }
    return weighted_sum(updates, weights);
}

inline double geomed_objective(const std::vector<ClientUpdate>& updates,
                               const ParamVector& z) {
    double obj = 0.0;
    for (const auto& u : updates) {
        double sq = 0.0;
        for (std::size_t j = 0; j < z.size(); ++j) {
            const double d = z[j] - u.params[j];
            sq += d * d;
        }
        obj += std::sqrt(sq);
    }
    return obj;
}

// Unweighted geometric median via Weiszfeld iteration, starting from the
// mean. Each distance gets +1e-10 so iterates that land on a data point
// stay well defined. `trace`, when given, records the objective value of
// every iterate including the start. The cap is generous because the
// iteration slows to a crawl when the median coincides with an input;
// the step-norm stop ends typical rounds in well under 100 iterations.
inline ParamVector geomed(const std::vector<ClientUpdate>& updates,
                          int max_iters = 1000, double tol = 1e-8,
                          std::vector<double>* trace = nullptr) {
    check_round(updates, "geomed");
    const std::size_t dim = updates.front().params.size();
    const std::size_t n = updates.size();

    ParamVector z(dim, 0.0);
    for (const auto& u : updates)
        for (std::size_t j = 0; j < dim; ++j) z[j] += u.params[j] / double(n);
    if (trace) trace->push_back(geomed_objective(updates, z));

    ParamVector next(dim);
    for (int iter = 0; iter < max_iters; ++iter) {
        std::fill(next.begin(), next.end(), 0.0);
        double weight_sum = 0.0;
        for (const auto& u : updates) {
            double sq = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                const double d = z[j] - u.params[j];
                sq += d * d;
            }
            const double w = 1.0 / (std::sqrt(sq) + 1e-10);
            weight_sum += w;
            for (std::size_t j = 0; j < dim; ++j) next[j] += w * u.params[j];
        }
        double step_sq = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            next[j] /= weight_sum;
            const double d = next[j] - z[j];
            step_sq += d * d;
        }
        z.swap(next);
        if (trace) trace->push_back(geomed_objective(updates, z));
        if (std::sqrt(step_sq) < tol) break;
    }
    return z;
}

// Coordinate-wise trimmed mean: drop the trim_count smallest and largest
// values per coordinate, average the rest.
inline ParamVector trimmed_mean(const std::vector<ClientUpdate>& updates,
                                int trim_count) {
    check_round(updates, "trimmed_mean");
    const std::size_t n = updates.size();
    if (trim_count < 0 || 2 * static_cast<std::size_t>(trim_count) >= n)
        throw ConfigError("trimmed_mean: trim count " + std::to_string(trim_count) +
                          " too large for " + std::to_string(n) + " updates");
    const std::size_t dim = updates.front().params.size();
    ParamVector out(dim, 0.0);
    std::vector<double> column(n);
    const std::size_t keep = n - 2 * std::size_t(trim_count);
    for (std::size_t j = 0; j < dim; ++j) {
        for (std::size_t i = 0; i < n; ++i) column[i] = updates[i].params[j];
        std::sort(column.begin(), column.end());
        double sum = 0.0;
        for (std::size_t i = trim_count; i < trim_count + keep; ++i) sum += column[i];
        out[j] = sum / double(keep);
    }
    return out;
}

// Krum score of update i: sum of squared distances to its n-f-2 nearest
// neighbours. Returns the minimal-score update; ties break to the lowest
// client index.
inline ParamVector krum(const std::vector<ClientUpdate>& updates,
                        int assumed_attackers, int* selected = nullptr) {
    check_round(updates, "krum");
    const int n = static_cast<int>(updates.size());
    const int f = assumed_attackers;
    if (f < 0 || n < 2 * f + 3)
        throw ConfigError("krum: need at least 2f+3 = " + std::to_string(2 * f + 3) +
                          " updates for f = " + std::to_string(f) + ", got " +
                          std::to_string(n));
    const std::size_t dim = updates.front().params.size();
    const int neighbors = n - f - 2;

    std::vector<double> sq(std::size_t(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < dim; ++k) {
                const double d = updates[i].params[k] - updates[j].params[k];
                s += d * d;
            }
            sq[std::size_t(i) * n + j] = s;
            sq[std::size_t(j) * n + i] = s;
        }

    int best = 0;
    double best_score = 0.0;
    std::vector<double> dists;
    for (int i = 0; i < n; ++i) {
        dists.clear();
        for (int j = 0; j < n; ++j)
            if (j != i) dists.push_back(sq[std::size_t(i) * n + j]);
        std::sort(dists.begin(), dists.end());
        double score = 0.0;
        for (int k = 0; k < neighbors; ++k) score += dists[k];
        if (i == 0 || score < best_score) {
            best = i;
            best_score = score;
        }
    }
    if (selected) *selected = best;
    return updates[best].params;
}

// ---------------------------------------------------------------------------
// FoolsGold

struct FoolsGoldState {
    // Running sum of each client's updates across rounds, keyed by client id.
    std::map<int, ParamVector> history;
};

struct FoolsGoldResult {
    ParamVector params;
    std::vector<double> weights;  // normalized aggregation weights actually used
};

// History-similarity reweighting: accumulate updates, compute pairwise cosine
// similarity of the accumulated histories, pardon by max-similarity ratio,
// then map w = 1 - maxsim through a logit rescale (0.5 * ln(w/(1-w)), clipped
// to [0,1]). All-zero weights fall back to the unweighted mean.
inline FoolsGoldResult foolsgold(const std::vector<ClientUpdate>& updates,
                                 FoolsGoldState& state) {
    check_round(updates, "foolsgold");
    const std::size_t n = updates.size();
    const std::size_t dim = updates.front().params.size();

    for (const auto& u : updates) {
        auto& hist = state.history[u.client_id];
        if (hist.empty()) hist.assign(dim, 0.0);
        if (hist.size() != dim)
            throw ProtocolError("foolsgold: history length changed for client " +
                                std::to_string(u.client_id));
        for (std::size_t j = 0; j < dim; ++j) hist[j] += u.params[j];
    }

    std::vector<const ParamVector*> hists(n);
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        hists[i] = &state.history[updates[i].client_id];
        double sq = 0.0;
        for (double v : *hists[i]) sq += v * v;
        norms[i] = std::sqrt(sq);
    }

    // Cosine similarities; zero-norm histories are treated as dissimilar.
    std::vector<double> cs(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double dot = 0.0;
            if (norms[i] > 0.0 && norms[j] > 0.0) {
                const double* a = hists[i]->data();
                const double* b = hists[j]->data();
                for (std::size_t k = 0; k < dim; ++k) dot += a[k] * b[k];
                dot /= norms[i] * norms[j];
            }
            cs[i * n + j] = dot;
            cs[j * n + i] = dot;
        }

    std::vector<double> maxsim(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) maxsim[i] = std::max(maxsim[i], cs[i * n + j]);

    // Pardoning: clients that already look suspicious pull down the
    // similarity charged to less suspicious ones.
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        double m = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            double sim = cs[i * n + j];
            if (maxsim[j] > maxsim[i] && maxsim[j] > 0.0)
                sim *= maxsim[i] / maxsim[j];
            m = std::max(m, sim);
        }
        w[i] = std::clamp(1.0 - m, 0.0, 1.0);
    }

    for (std::size_t i = 0; i < n; ++i) {
        if (w[i] >= 1.0 - 1e-12) {
            w[i] = 1.0;
        } else if (w[i] <= 1e-12) {
            w[i] = 0.0;
        } else {
            w[i] = std::clamp(0.5 * std::log(w[i] / (1.0 - w[i])), 0.0, 1.0);
        }
    }

    double wsum = 0.0;
    for (double v : w) wsum += v;
    FoolsGoldResult result;
    if (wsum <= 0.0) {
        result.weights.assign(n, 1.0 / double(n));
    } else {
        result.weights.resize(n);
        for (std::size_t i = 0; i < n; ++i) result.weights[i] = w[i] / wsum;
    }
    result.params = weighted_sum(updates, result.weights);
    return result;
}

}  // namespace fedsim

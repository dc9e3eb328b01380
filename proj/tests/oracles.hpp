#pragma once

// Independent reference implementations the tests cross-check the library
// against. Each recomputes its target by a deliberately different route:
// finite differences instead of analytic gradients, grid search instead of
// Weiszfeld, explicit sort instead of the production trim, exhaustive
// scoring instead of the production Krum loop.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "fedsim/client.hpp"
#include "fedsim/data.hpp"
#include "fedsim/mlp.hpp"

namespace oracle {

using fedsim::ClientUpdate;
using fedsim::LabeledDataset;
using fedsim::Matrix;
using fedsim::MlpArchitecture;
using fedsim::ParamVector;

// Validation loss as a plain function of the aggregation weights, with its
// own aggregation loop.
inline double loss_at_weights(const std::vector<ClientUpdate>& updates,
                              const std::vector<double>& k,
                              const MlpArchitecture& arch,
                              const LabeledDataset& val) {
    ParamVector w(updates.front().params.size(), 0.0);
    for (std::size_t i = 0; i < updates.size(); ++i)
        for (std::size_t j = 0; j < w.size(); ++j)
            w[j] += k[i] * updates[i].params[j];
    Matrix probs = fedsim::forward(w, arch, val.features);
    return fedsim::cross_entropy_loss(probs, val.labels);
}

// Central finite differences of the validation loss in each aggregation
// weight, re-aggregating and re-evaluating per probe.
inline std::vector<double> fd_weight_gradient(
    const std::vector<ClientUpdate>& updates, const std::vector<double>& k,
    const MlpArchitecture& arch, const LabeledDataset& val, double h = 1e-6) {
    std::vector<double> g(updates.size());
    for (std::size_t i = 0; i < updates.size(); ++i) {
        std::vector<double> kp = k, km = k;
        kp[i] += h;
        km[i] -= h;
        g[i] = (loss_at_weights(updates, kp, arch, val) -
                loss_at_weights(updates, km, arch, val)) /
               (2.0 * h);
    }
    return g;
}

// Central finite differences of the training loss in every model parameter.
inline std::vector<double> fd_param_gradient(const ParamVector& params,
                                             const MlpArchitecture& arch,
                                             const Matrix& x,
                                             const std::vector<int>& y,
                                             double h = 1e-5) {
    std::vector<double> g(params.size());
    for (std::size_t j = 0; j < params.size(); ++j) {
        ParamVector pp = params, pm = params;
        pp[j] += h;
        pm[j] -= h;
        const double lp = fedsim::cross_entropy_loss(fedsim::forward(pp, arch, x), y);
        const double lm = fedsim::cross_entropy_loss(fedsim::forward(pm, arch, x), y);
        g[j] = (lp - lm) / (2.0 * h);
    }
    return g;
}

// Minimum of sum ||z - p_i|| over the plane by multi-resolution grid search;
// final grid step well below 1e-3.
inline double geomed_grid_objective(const std::vector<std::array<double, 2>>& pts) {
    auto objective = [&](double x, double y) {
        double s = 0.0;
        for (const auto& p : pts) s += std::hypot(x - p[0], y - p[1]);
        return s;
    };
    double lo0 = pts[0][0], hi0 = pts[0][0], lo1 = pts[0][1], hi1 = pts[0][1];
    for (const auto& p : pts) {
        lo0 = std::min(lo0, p[0]);
        hi0 = std::max(hi0, p[0]);
        lo1 = std::min(lo1, p[1]);
        hi1 = std::max(hi1, p[1]);
    }
    double cx = (lo0 + hi0) / 2, cy = (lo1 + hi1) / 2;
    double half = std::max({hi0 - lo0, hi1 - lo1, 1e-3}) / 2 + 1e-6;
    double best = objective(cx, cy);
    const int g = 40;
    for (int level = 0; level < 14; ++level) {
        double bx = cx, by = cy;
        for (int i = 0; i <= g; ++i)
            for (int j = 0; j <= g; ++j) {
                const double x = cx - half + 2 * half * i / g;
                const double y = cy - half + 2 * half * j / g;
                const double v = objective(x, y);
                if (v < best) {
                    best = v;
                    bx = x;
                    by = y;
                }
            }
        cx = bx;
        cy = by;
        half *= 0.2;
    }
    return best;
}

// Per-coordinate trim by explicit sort, middle averaged in ascending order.
inline ParamVector trimmed_mean_sorted(const std::vector<ClientUpdate>& updates,
                                       int trim) {
    const std::size_t n = updates.size();
    const std::size_t dim = updates.front().params.size();
    ParamVector out(dim);
    std::vector<double> vals(n);
    for (std::size_t j = 0; j < dim; ++j) {
        for (std::size_t i = 0; i < n; ++i) vals[i] = updates[i].params[j];
        std::sort(vals.begin(), vals.end());
        double s = 0.0;
        for (std::size_t i = std::size_t(trim); i < n - std::size_t(trim); ++i)
            s += vals[i];
        out[j] = s / double(n - 2 * std::size_t(trim));
    }
    return out;
}

// Exhaustive Krum scoring: every pairwise distance recomputed, every
// candidate scored, ties to the lowest index.
inline int krum_brute_index(const std::vector<ClientUpdate>& updates, int f) {
    const int n = static_cast<int>(updates.size());
    const int keep = n - f - 2;
    int best = 0;
    double best_score = 0.0;
    for (int i = 0; i < n; ++i) {
        std::vector<double> d;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            double s = 0.0;
            for (std::size_t c = 0; c < updates[i].params.size(); ++c) {
                const double diff = updates[i].params[c] - updates[j].params[c];
                s += diff * diff;
            }
            d.push_back(s);
        }
        std::sort(d.begin(), d.end());
        double score = 0.0;
        for (int k = 0; k < keep; ++k) score += d[std::size_t(k)];
        if (i == 0 || score < best_score) {
            best = i;
            best_score = score;
        }
    }
    return best;
}

}  // namespace oracle

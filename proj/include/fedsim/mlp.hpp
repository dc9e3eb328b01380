#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/error.hpp"
#include "fedsim/matrix.hpp"

namespace fedsim {

// Flat parameter vector of one model instance: for each layer, the weight
// matrix (row-major, fan_in x fan_out) followed by the bias vector.
using ParamVector = std::vector<double>;
// Same layout as ParamVector.
using GradientVector = std::vector<double>;

// Multilayer perceptron: ReLU hidden layers, softmax output.
struct MlpArchitecture {
    std::vector<std::size_t> layer_sizes;  // input, hidden..., output

    MlpArchitecture() = default;
    explicit MlpArchitecture(std::vector<std::size_t> sizes)
        : layer_sizes(std::move(sizes)) {
        if (layer_sizes.size() < 2)
            throw ConfigError("architecture: need at least input and output layers");
        for (std::size_t s : layer_sizes)
            if (s == 0) throw ConfigError("architecture: zero-width layer");
    }

    std::size_t num_layers() const { return layer_sizes.size() - 1; }
    std::size_t input_size() const { return layer_sizes.front(); }
    std::size_t output_size() const { return layer_sizes.back(); }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
            n += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
        return n;
    }

    // Offset of layer l's weight block; biases follow immediately after.
    std::size_t weight_offset(std::size_t l) const {
        std::size_t off = 0;
        for (std::size_t i = 0; i < l; ++i)
            off += layer_sizes[i] * layer_sizes[i + 1] + layer_sizes[i + 1];
        return off;
    }
    std::size_t bias_offset(std::size_t l) const {
        return weight_offset(l) + layer_sizes[l] * layer_sizes[l + 1];
    }
};

inline void check_params(const ParamVector& params, const MlpArchitecture& arch,
                         const char* what) {
    if (params.size() != arch.param_count())
        throw ConfigError(std::string(what) + ": parameter vector length " +
                          std::to_string(params.size()) + " vs architecture count " +
                          std::to_string(arch.param_count()));
}

// Scaled-uniform init (U[-a, a] with a = sqrt(6 / (fan_in + fan_out))),
// biases zero; fully determined by the seed.
inline ParamVector init_params(const MlpArchitecture& arch, std::uint64_t seed) {
    ParamVector params(arch.param_count(), 0.0);
    auto rng = make_rng({seed, stream::init});
    for (std::size_t l = 0; l < arch.num_layers(); ++l) {
        const std::size_t fan_in = arch.layer_sizes[l];
        const std::size_t fan_out = arch.layer_sizes[l + 1];
        const double a = std::sqrt(6.0 / double(fan_in + fan_out));
        std::uniform_real_distribution<double> u(-a, a);
        double* w = params.data() + arch.weight_offset(l);
        for (std::size_t i = 0; i < fan_in * fan_out; ++i) w[i] = u(rng);
    }
    return params;
}

namespace detail {

// Z = A * W + b for one layer; W is fan_in x fan_out row-major.
inline void affine_forward(const Matrix& a, const double* w, const double* b,
                           std::size_t fan_in, std::size_t fan_out, Matrix& z) {
    z.rows = a.rows;
    z.cols = fan_out;
    z.data.assign(a.rows * fan_out, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* zrow = z.row(i);
        for (std::size_t j = 0; j < fan_out; ++j) zrow[j] = b[j];
        for (std::size_t k = 0; k < fan_in; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* wrow = w + k * fan_out;
            for (std::size_t j = 0; j < fan_out; ++j) zrow[j] += aik * wrow[j];
        }
    }
}

inline void relu_inplace(Matrix& z) {
    for (double& v : z.data) v = v > 0.0 ? v : 0.0;
}

// Row-wise softmax with max subtraction; entries end up strictly positive.
inline void softmax_rows_inplace(Matrix& z) {
    for (std::size_t i = 0; i < z.rows; ++i) {
        double* row = z.row(i);
        double mx = row[0];
        for (std::size_t j = 1; j < z.cols; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < z.cols; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (std::size_t j = 0; j < z.cols; ++j) row[j] /= sum;
    }
}

// Runs the full forward pass; when `activations` is non-null it receives
// the input batch plus every layer's post-activation output.
inline Matrix forward_impl(const ParamVector& params, const MlpArchitecture& arch,
                           const Matrix& batch, std::vector<Matrix>* activations) {
    if (batch.cols != arch.input_size())
        throw ConfigError("forward: batch has " + std::to_string(batch.cols) +
                          " features but the input layer expects " +
                          std::to_string(arch.input_size()));
    check_params(params, arch, "forward");

    if (activations) {
        activations->clear();
        activations->push_back(batch);
    }
    Matrix cur = batch;
    Matrix next;
    for (std::size_t l = 0; l < arch.num_layers(); ++l) {
        const std::size_t fan_in = arch.layer_sizes[l];
        const std::size_t fan_out = arch.layer_sizes[l + 1];
        affine_forward(cur, params.data() + arch.weight_offset(l),
                       params.data() + arch.bias_offset(l), fan_in, fan_out, next);
        if (l + 1 < arch.num_layers())
            relu_inplace(next);
        else
            softmax_rows_inplace(next);
        cur = std::move(next);
        if (activations) activations->push_back(cur);
    }
    return cur;
}

}  // namespace detail

// Class probabilities for a batch; each output row sums to 1.
inline Matrix forward(const ParamVector& params, const MlpArchitecture& arch,
                      const Matrix& batch) {
    return detail::forward_impl(params, arch, batch, nullptr);
}

// Mean negative log-probability of the true classes. Log-probabilities are
// clamped below at -50 so the loss stays finite.
inline double cross_entropy_loss(const Matrix& probs, const std::vector<int>& labels) {
    if (probs.rows != labels.size())
        throw ConfigError("cross_entropy_loss: " + std::to_string(probs.rows) +
                          " probability rows vs " + std::to_string(labels.size()) +
                          " labels");
    double total = 0.0;
    for (std::size_t i = 0; i < probs.rows; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= probs.cols)
            throw InputError("cross_entropy_loss: label " + std::to_string(y) +
                             " outside [0, " + std::to_string(probs.cols) + ")");
        const double logp = std::log(probs.at(i, y));
        total += std::max(logp, -50.0);
    }
    return -total / double(probs.rows);
}

// Loss plus the exact analytic gradient of cross_entropy_loss(forward(.)).
inline std::pair<double, GradientVector> backward(const ParamVector& params,
                                                  const MlpArchitecture& arch,
                                                  const Matrix& batch,
                                                  const std::vector<int>& labels) {
    std::vector<Matrix> acts;
    const Matrix probs = detail::forward_impl(params, arch, batch, &acts);
    const double loss = cross_entropy_loss(probs, labels);
    if (!std::isfinite(loss))
        throw NumericError("backward: non-finite loss on a batch of " +
                           std::to_string(batch.rows));

    GradientVector grad(params.size(), 0.0);
    const std::size_t n = batch.rows;

    // delta = (probs - onehot(labels)) / n at the softmax layer.
    Matrix delta = probs;
    for (std::size_t i = 0; i < n; ++i) {
        double* row = delta.row(i);
        row[labels[i]] -= 1.0;
        for (std::size_t j = 0; j < delta.cols; ++j) row[j] /= double(n);
    }

    Matrix grad_w, prev_delta;
    for (std::size_t l = arch.num_layers(); l-- > 0;) {
        const std::size_t fan_in = arch.layer_sizes[l];
        const std::size_t fan_out = arch.layer_sizes[l + 1];
        const Matrix& input = acts[l];

        matmul_tn(input, delta, grad_w);
        std::copy(grad_w.data.begin(), grad_w.data.end(),
                  grad.begin() + arch.weight_offset(l));
        double* gb = grad.data() + arch.bias_offset(l);
        for (std::size_t i = 0; i < n; ++i) {
            const double* drow = delta.row(i);
            for (std::size_t j = 0; j < fan_out; ++j) gb[j] += drow[j];
        }

        if (l == 0) break;
        // Push delta through W and the ReLU mask of the previous activation.
        Matrix w(fan_in, fan_out);
        std::copy(params.begin() + arch.weight_offset(l),
                  params.begin() + arch.weight_offset(l) + fan_in * fan_out,
                  w.data.begin());
        matmul_nt(delta, w, prev_delta);
        const Matrix& prev_act = acts[l];
        for (std::size_t i = 0; i < prev_delta.size(); ++i)
            if (prev_act.data[i] <= 0.0) prev_delta.data[i] = 0.0;
        delta = std::move(prev_delta);
    }

    for (double g : grad)
        if (!std::isfinite(g))
            throw NumericError("backward: non-finite gradient on a batch of " +
                               std::to_string(batch.rows));
    return {loss, std::move(grad)};
}

inline int argmax_row(const Matrix& m, std::size_t row) {
    const double* r = m.row(row);
    int best = 0;
    for (std::size_t j = 1; j < m.cols; ++j)
        if (r[j] > r[best]) best = static_cast<int>(j);
    return best;
}

// Accuracy and macro-F1 (unweighted mean of per-class F1; classes absent from
// both prediction and truth contribute 0). Evaluates in fixed-size chunks.
inline std::pair<double, double> evaluate(const ParamVector& params,
                                          const MlpArchitecture& arch,
                                          const LabeledDataset& ds) {
    if (ds.size() == 0) throw ConfigError("evaluate: empty dataset");
    const int classes = ds.num_classes;
    std::vector<std::size_t> tp(classes, 0), fp(classes, 0), fn(classes, 0);
    std::size_t correct = 0;

    const std::size_t chunk = 256;
    Matrix buf;
    for (std::size_t start = 0; start < ds.size(); start += chunk) {
        const std::size_t end = std::min(ds.size(), start + chunk);
        buf.rows = end - start;
        buf.cols = ds.feature_dim();
        buf.data.assign(ds.features.row(start), ds.features.row(start) + (end - start) * ds.feature_dim());
        const Matrix probs = forward(params, arch, buf);
        for (std::size_t i = 0; i < probs.rows; ++i) {
            const int pred = argmax_row(probs, i);
            const int truth = ds.labels[start + i];
            if (pred == truth) {
                ++correct;
                ++tp[truth];
            } else {
                ++fp[pred];
                ++fn[truth];
            }
        }
    }

    double f1_sum = 0.0;
    for (int c = 0; c < classes; ++c) {
        const double denom_p = double(tp[c] + fp[c]);
        const double denom_r = double(tp[c] + fn[c]);
        const double precision = denom_p > 0.0 ? tp[c] / denom_p : 0.0;
        const double recall = denom_r > 0.0 ? tp[c] / denom_r : 0.0;
        const double pr = precision + recall;
        f1_sum += pr > 0.0 ? 2.0 * precision * recall / pr : 0.0;
    }
    return {double(correct) / double(ds.size()), f1_sum / double(classes)};
}

}  // namespace fedsim

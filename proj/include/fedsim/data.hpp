#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "fedsim/error.hpp"
#include "fedsim/matrix.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

// Features live in [0,1]; one row per sample.
struct LabeledDataset {
    Matrix features;
    std::vector<int> labels;
    int num_classes = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t feature_dim() const { return features.cols; }

    void validate() const {
        if (features.rows != labels.size())
            throw ConfigError("dataset: " + std::to_string(features.rows) +
                              " feature rows vs " + std::to_string(labels.size()) +
                              " labels");
        for (int y : labels)
            if (y < 0 || y >= num_classes)
                throw InputError("dataset: label " + std::to_string(y) +
                                 " outside [0, " + std::to_string(num_classes) + ")");
    }
};

enum class PartitionScheme { iid, dirichlet };

struct PartitionPlan {
    std::vector<std::vector<std::size_t>> assignments;  // per client, sample indices
    PartitionScheme scheme = PartitionScheme::iid;
    double beta = 0.5;  // dirichlet concentration
};

// ---------------------------------------------------------------------------
// IDX binary format (big-endian magic + dims, then raw unsigned bytes)

namespace detail {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

inline std::uint32_t read_be32(std::istream& in, const std::string& path,
                               std::size_t offset) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    if (!in)
        throw IoError(path + ": truncated at byte " + std::to_string(offset));
    return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
           (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

inline void write_be32(std::ostream& out, std::uint32_t v) {
    unsigned char buf[4] = {static_cast<unsigned char>(v >> 24),
                            static_cast<unsigned char>(v >> 16),
                            static_cast<unsigned char>(v >> 8),
                            static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(buf), 4);
}

}  // namespace detail

// Loads an MNIST-style image/label file pair. Pixels are scaled by 1/255.
inline LabeledDataset load_idx(const std::string& images_path,
                               const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw IoError(images_path + ": cannot open");
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw IoError(labels_path + ": cannot open");

    const std::uint32_t img_magic = detail::read_be32(img, images_path, 0);
    if (img_magic != detail::kIdxImagesMagic)
        throw FormatError(images_path + ": expected image magic 0x00000803, found 0x" +
                          [&] {
                              char buf[9];
                              std::snprintf(buf, sizeof buf, "%08x", img_magic);
                              return std::string(buf);
                          }());
    const std::uint32_t count = detail::read_be32(img, images_path, 4);
    const std::uint32_t rows = detail::read_be32(img, images_path, 8);
    const std::uint32_t cols = detail::read_be32(img, images_path, 12);

    const std::uint32_t lab_magic = detail::read_be32(lab, labels_path, 0);
    if (lab_magic != detail::kIdxLabelsMagic)
        throw FormatError(labels_path + ": expected label magic 0x00000801, found 0x" +
                          [&] {
                              char buf[9];
                              std::snprintf(buf, sizeof buf, "%08x", lab_magic);
                              return std::string(buf);
                          }());
    const std::uint32_t lab_count = detail::read_be32(lab, labels_path, 4);
    if (count != lab_count)
        throw FormatError(images_path + ": " + std::to_string(count) +
                          " images vs " + std::to_string(lab_count) + " labels");

    const std::size_t dim = std::size_t(rows) * cols;
    LabeledDataset ds;
    ds.features = Matrix(count, dim);
    ds.labels.resize(count);

    std::vector<unsigned char> pixel_row(dim);
    for (std::uint32_t i = 0; i < count; ++i) {
        img.read(reinterpret_cast<char*>(pixel_row.data()), std::streamsize(dim));
        if (!img)
            throw IoError(images_path + ": truncated at byte " +
                          std::to_string(16 + std::size_t(i) * dim));
        double* out = ds.features.row(i);
        for (std::size_t j = 0; j < dim; ++j) out[j] = pixel_row[j] / 255.0;
    }
    std::vector<unsigned char> raw_labels(count);
    lab.read(reinterpret_cast<char*>(raw_labels.data()), std::streamsize(count));
    if (!lab)
        throw IoError(labels_path + ": truncated at byte 8");
    int max_label = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        ds.labels[i] = raw_labels[i];
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.num_classes = max_label + 1;
    return ds;
}

// Writes a dataset as an IDX image/label file pair (1 x dim "images").
// Feature values are rounded back to bytes; lossless for byte-scaled data.
inline void save_idx(const LabeledDataset& ds, const std::string& images_path,
                     const std::string& labels_path) {
    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw IoError(images_path + ": cannot open for writing");
    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw IoError(labels_path + ": cannot open for writing");

    const auto count = static_cast<std::uint32_t>(ds.size());
    const auto dim = static_cast<std::uint32_t>(ds.feature_dim());
    detail::write_be32(img, detail::kIdxImagesMagic);
    detail::write_be32(img, count);
    detail::write_be32(img, 1);
    detail::write_be32(img, dim);
    std::vector<unsigned char> pixel_row(dim);
    for (std::uint32_t i = 0; i < count; ++i) {
        const double* row = ds.features.row(i);
        for (std::uint32_t j = 0; j < dim; ++j) {
            const double v = std::clamp(row[j], 0.0, 1.0);
            pixel_row[j] = static_cast<unsigned char>(std::lround(v * 255.0));
        }
        img.write(reinterpret_cast<const char*>(pixel_row.data()), dim);
    }

    detail::write_be32(lab, detail::kIdxLabelsMagic);
    detail::write_be32(lab, count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto y = static_cast<unsigned char>(ds.labels[i]);
        lab.write(reinterpret_cast<const char*>(&y), 1);
    }
    if (!img || !lab) throw IoError("save_idx: write failed");
}

// ---------------------------------------------------------------------------
// Synthetic data

// Gaussian blobs with class-dependent means, unit variance, mapped into [0,1]
// by a fixed affine rescale and clamped. Class means are laid out on disjoint
// coordinate stripes (dimension j is "hot" for class c when j % C == c) with
// the amplitude normalized so that any two class means are ~6 sigma apart,
// which keeps the classes well separated at every feature dimension.
// Samples are interleaved by class: sample i has class i % num_classes.
inline LabeledDataset synth_blobs(int num_classes, int samples_per_class,
                                  int feature_dim, std::uint64_t seed) {
    if (num_classes < 1 || samples_per_class < 1 || feature_dim < 1)
        throw ConfigError("synth_blobs: all counts must be >= 1");

    const int hot_per_class = std::max(1, feature_dim / num_classes);
    const double amplitude = 6.0 / std::sqrt(2.0 * hot_per_class);

    std::vector<double> means(std::size_t(num_classes) * feature_dim, 0.0);
    if (feature_dim >= num_classes) {
        for (int c = 0; c < num_classes; ++c)
            for (int j = c; j < feature_dim; j += num_classes)
                means[std::size_t(c) * feature_dim + j] = amplitude;
    } else {
        // Too few dimensions for stripes; draw means at +-amplitude at random.
        auto mean_rng = make_rng({seed, stream::dataset, 0xFEED});
        std::uniform_int_distribution<int> coin(0, 1);
        for (double& m : means) m = coin(mean_rng) ? amplitude : 0.0;
    }

    // Fixed affine: x -> (x + 4.5) / (amplitude + 9), then clamp to [0,1].
    const double shift = 4.5;
    const double scale = 1.0 / (amplitude + 9.0);

    const std::size_t total = std::size_t(num_classes) * samples_per_class;
    LabeledDataset ds;
    ds.num_classes = num_classes;
    ds.features = Matrix(total, feature_dim);
    ds.labels.resize(total);

    auto rng = make_rng({seed, stream::dataset});
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t i = 0; i < total; ++i) {
        const int c = static_cast<int>(i % num_classes);
        ds.labels[i] = c;
        const double* mean = &means[std::size_t(c) * feature_dim];
        double* row = ds.features.row(i);
        for (int j = 0; j < feature_dim; ++j) {
            const double raw = mean[j] + noise(rng);
            row[j] = std::clamp((raw + shift) * scale, 0.0, 1.0);
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Partitioning

inline PartitionPlan partition(const LabeledDataset& ds, int num_clients,
                               PartitionScheme scheme, double beta,
                               std::uint64_t seed) {
    const std::size_t n = ds.size();
    if (num_clients < 1)
        throw ConfigError("partition: need at least one client");
    if (static_cast<std::size_t>(num_clients) > n)
        throw ConfigError("partition: " + std::to_string(num_clients) +
                          " clients but only " + std::to_string(n) + " samples");

    PartitionPlan plan;
    plan.scheme = scheme;
    plan.beta = beta;
    plan.assignments.assign(num_clients, {});
    auto rng = make_rng({seed, stream::partition});

    if (scheme == PartitionScheme::iid) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        const std::size_t base = n / num_clients;
        const std::size_t extra = n % num_clients;
        std::size_t pos = 0;
        for (int c = 0; c < num_clients; ++c) {
            const std::size_t take = base + (static_cast<std::size_t>(c) < extra ? 1 : 0);
            auto& shard = plan.assignments[c];
            shard.assign(order.begin() + pos, order.begin() + pos + take);
            pos += take;
        }
        return plan;
    }

    if (beta <= 0.0) throw ConfigError("partition: dirichlet beta must be > 0");

    // Per-class proportions drawn from Dirichlet(beta,...,beta) per client.
    // Draws that leave any client empty are rejected and resampled.
    std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
    for (std::size_t i = 0; i < n; ++i) by_class[ds.labels[i]].push_back(i);
    for (auto& idx : by_class) std::shuffle(idx.begin(), idx.end(), rng);

    std::gamma_distribution<double> gamma(beta, 1.0);
    for (int attempt = 0; attempt < 100; ++attempt) {
        for (auto& shard : plan.assignments) shard.clear();
        for (int c = 0; c < ds.num_classes; ++c) {
            const auto& idx = by_class[c];
            if (idx.empty()) continue;
            std::vector<double> prop(num_clients);
            double sum = 0.0;
            for (double& p : prop) {
                p = gamma(rng);
                sum += p;
            }
            if (sum <= 0.0) {
                std::fill(prop.begin(), prop.end(), 1.0);
                sum = num_clients;
            }
            // Convert proportions into contiguous slices of this class's pool.
            std::size_t start = 0;
            double acc = 0.0;
            for (int k = 0; k < num_clients; ++k) {
                acc += prop[k] / sum;
                const std::size_t end =
                    (k + 1 == num_clients)
                        ? idx.size()
                        : std::min<std::size_t>(idx.size(),
                                                static_cast<std::size_t>(acc * idx.size()));
                for (std::size_t i = start; i < end; ++i)
                    plan.assignments[k].push_back(idx[i]);
                start = end;
            }
        }
        const bool ok = std::all_of(plan.assignments.begin(), plan.assignments.end(),
                                    [](const auto& s) { return !s.empty(); });
        if (ok) {
            for (auto& shard : plan.assignments) std::sort(shard.begin(), shard.end());
            return plan;
        }
    }
    throw ConfigError("partition: dirichlet draws kept leaving clients empty; "
                      "raise beta or reduce the client count");
}

inline LabeledDataset subset(const LabeledDataset& ds,
                             const std::vector<std::size_t>& indices) {
    LabeledDataset out;
    out.num_classes = ds.num_classes;
    out.features = Matrix(indices.size(), ds.feature_dim());
    out.labels.resize(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const double* src = ds.features.row(indices[i]);
        std::copy(src, src + ds.feature_dim(), out.features.row(i));
        out.labels[i] = ds.labels[indices[i]];
    }
    return out;
}

// Advances every label by one modulo num_classes; features untouched.
inline LabeledDataset flip_labels(const LabeledDataset& ds) {
    LabeledDataset out = ds;
    for (int& y : out.labels) y = (y + 1) % ds.num_classes;
    return out;
}

// Takes `count` samples spread equally over classes (remainder goes to the
// lowest class ids), scanning [from, ds.size()) in index order. Returns the
// chosen indices; deterministic.
inline std::vector<std::size_t> stratified_indices(const LabeledDataset& ds,
                                                   std::size_t from,
                                                   std::size_t count) {
    if (count == 0) return {};
    const int c = ds.num_classes;
    std::vector<std::size_t> want(c, count / c);
    for (std::size_t r = 0; r < count % c; ++r) want[r] += 1;
    std::vector<std::size_t> taken(c, 0);
    std::vector<std::size_t> out;
    out.reserve(count);
    for (std::size_t i = from; i < ds.size() && out.size() < count; ++i) {
        const int y = ds.labels[i];
        if (taken[y] < want[y]) {
            taken[y] += 1;
            out.push_back(i);
        }
    }
    if (out.size() < count)
        throw ConfigError("stratified sample: need " + std::to_string(count) +
                          " samples balanced over " + std::to_string(c) +
                          " classes but only found " + std::to_string(out.size()));
    return out;
}

}  // namespace fedsim

#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <iterator>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fedsim/engine.hpp"
#include "fedsim/error.hpp"

namespace fedsim {

using ordered_json = nlohmann::ordered_json;

// Parsed experiment description. `sweep_kinds` lists every aggregator named
// in the config (the kind field accepts a string or an array of strings);
// `config.aggregator.kind` is the first of them.
struct ParsedConfig {
    FederationConfig config;
    std::vector<AggregatorKind> sweep_kinds;
};

namespace detail {

inline std::string json_path(const std::string& parent, const std::string& key) {
    return parent.empty() ? key : parent + "." + key;
}

inline void expect_keys(const ordered_json& obj, const std::string& parent,
                        std::initializer_list<const char*> allowed) {
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& item : obj.items())
        if (!ok.count(item.key())) {
            std::string accepted;
            for (const char* a : allowed) {
                if (!accepted.empty()) accepted += ", ";
                accepted += a;
            }
            throw ConfigError("unknown key: " + json_path(parent, item.key()) +
                              " (accepted here: " + accepted + ")");
        }
}

template <class T>
inline T get_or(const ordered_json& obj, const std::string& parent,
                const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("invalid value for " + json_path(parent, key) + ": " +
                          e.what());
    }
}

inline const ordered_json& get_object(const ordered_json& obj,
                                      const std::string& parent,
                                      const std::string& key, bool required) {
    static const ordered_json empty = ordered_json::object();
    if (!obj.contains(key)) {
        if (required)
            throw ConfigError("missing required key: " + json_path(parent, key));
        return empty;
    }
    const ordered_json& v = obj.at(key);
    if (!v.is_object())
        throw ConfigError(json_path(parent, key) + ": expected an object");
    return v;
}

template <class Enum>
struct EnumNames {
    std::vector<std::pair<const char*, Enum>> entries;

    Enum parse(const std::string& s, const std::string& path) const {
        for (const auto& [name, value] : entries)
            if (s == name) return value;
        std::string accepted;
        for (const auto& [name, value] : entries) {
            if (!accepted.empty()) accepted += ", ";
            accepted += name;
        }
        throw ConfigError(path + ": unknown value \"" + s + "\" (accepted: " +
                          accepted + ")");
    }
    const char* name(Enum v) const {
        for (const auto& [name, value] : entries)
            if (value == v) return name;
        throw InvariantError("enum value without a name");
    }
};

inline const EnumNames<DatasetSpec::Kind>& dataset_kinds() {
    static const EnumNames<DatasetSpec::Kind> n{{
        {"idx", DatasetSpec::Kind::idx},
        {"blobs", DatasetSpec::Kind::blobs},
    }};
    return n;
}
inline const EnumNames<PartitionScheme>& partition_schemes() {
    static const EnumNames<PartitionScheme> n{{
        {"iid", PartitionScheme::iid},
        {"dirichlet", PartitionScheme::dirichlet},
    }};
    return n;
}
inline const EnumNames<AttackKind>& attack_kinds() {
    static const EnumNames<AttackKind> n{{
        {"none", AttackKind::none},
        {"label_flip", AttackKind::label_flip},
        {"gaussian_noise", AttackKind::gaussian_noise},
    }};
    return n;
}
inline const EnumNames<AggregatorKind>& aggregator_kinds() {
    static const EnumNames<AggregatorKind> n{{
        {"fedavg", AggregatorKind::fedavg},
        {"geomed", AggregatorKind::geomed},
        {"trimmed_mean", AggregatorKind::trimmed_mean},
        {"krum", AggregatorKind::krum},
        {"foolsgold", AggregatorKind::foolsgold},
        {"fedaot", AggregatorKind::fedaot},
    }};
    return n;
}
inline const EnumNames<StabilizeMode>& stabilize_modes() {
    static const EnumNames<StabilizeMode> n{{
        {"renormalize", StabilizeMode::renormalize},
        {"softmax", StabilizeMode::softmax},
    }};
    return n;
}

}  // namespace detail

// Strict parse: unknown keys are errors, every omitted key takes the
// documented default (the `defaults` verb prints them all).
inline ParsedConfig parse_config_json(const ordered_json& root) {
    using namespace detail;
    if (!root.is_object()) throw ConfigError("config root must be an object");
    expect_keys(root, "",
                {"name", "seed", "num_clients", "rounds", "clients_per_round",
                 "hidden_layers", "dataset", "partition", "attack", "aggregator",
                 "local", "meta", "metaval", "threads"});

    ParsedConfig out;
    FederationConfig& cfg = out.config;
    cfg.name = get_or<std::string>(root, "", "name", cfg.name);
    cfg.seed = get_or<std::uint64_t>(root, "", "seed", cfg.seed);
    cfg.num_clients = get_or<int>(root, "", "num_clients", cfg.num_clients);
    cfg.rounds = get_or<int>(root, "", "rounds", cfg.rounds);
    cfg.clients_per_round =
        get_or<double>(root, "", "clients_per_round", cfg.clients_per_round);
    cfg.hidden_layers = get_or<std::vector<std::size_t>>(root, "", "hidden_layers",
                                                         cfg.hidden_layers);
    cfg.threads = get_or<unsigned>(root, "", "threads", cfg.threads);

    const ordered_json& ds = get_object(root, "", "dataset", true);
    cfg.dataset.kind = dataset_kinds().parse(
        get_or<std::string>(ds, "dataset", "kind", "blobs"), "dataset.kind");
    if (cfg.dataset.kind == DatasetSpec::Kind::idx) {
        expect_keys(ds, "dataset",
                    {"kind", "train_images", "train_labels", "test_images",
                     "test_labels", "train_limit"});
        cfg.dataset.train_images =
            get_or<std::string>(ds, "dataset", "train_images", "");
        cfg.dataset.train_labels =
            get_or<std::string>(ds, "dataset", "train_labels", "");
        cfg.dataset.test_images = get_or<std::string>(ds, "dataset", "test_images", "");
        cfg.dataset.test_labels = get_or<std::string>(ds, "dataset", "test_labels", "");
        cfg.dataset.train_limit =
            get_or<std::size_t>(ds, "dataset", "train_limit", cfg.dataset.train_limit);
    } else {
        expect_keys(ds, "dataset",
                    {"kind", "classes", "samples_per_class", "feature_dim",
                     "test_fraction"});
        cfg.dataset.blob_classes =
            get_or<int>(ds, "dataset", "classes", cfg.dataset.blob_classes);
        cfg.dataset.blob_per_class = get_or<int>(ds, "dataset", "samples_per_class",
                                                 cfg.dataset.blob_per_class);
        cfg.dataset.blob_dim =
            get_or<int>(ds, "dataset", "feature_dim", cfg.dataset.blob_dim);
        cfg.dataset.blob_test_fraction = get_or<double>(
            ds, "dataset", "test_fraction", cfg.dataset.blob_test_fraction);
    }

    const ordered_json& part = get_object(root, "", "partition", false);
    expect_keys(part, "partition", {"scheme", "beta"});
    cfg.scheme = partition_schemes().parse(
        get_or<std::string>(part, "partition", "scheme", "iid"), "partition.scheme");
    cfg.beta = get_or<double>(part, "partition", "beta", cfg.beta);

    const ordered_json& atk = get_object(root, "", "attack", false);
    cfg.attack.kind = attack_kinds().parse(
        get_or<std::string>(atk, "attack", "kind", "none"), "attack.kind");
    if (cfg.attack.kind == AttackKind::gaussian_noise) {
        expect_keys(atk, "attack", {"kind", "fraction", "sigma"});
        cfg.attack.sigma = get_or<double>(atk, "attack", "sigma", cfg.attack.sigma);
    } else {
        expect_keys(atk, "attack", {"kind", "fraction"});
    }
    cfg.attack.fraction = get_or<double>(atk, "attack", "fraction", cfg.attack.fraction);

    const ordered_json& agg = get_object(root, "", "aggregator", true);
    if (!agg.contains("kind"))
        throw ConfigError("missing required key: aggregator.kind");
    std::vector<std::string> kind_names;
    if (agg.at("kind").is_array())
        kind_names = get_or<std::vector<std::string>>(agg, "aggregator", "kind", {});
    else
        kind_names.push_back(get_or<std::string>(agg, "aggregator", "kind", ""));
    if (kind_names.empty())
        throw ConfigError("aggregator.kind: need at least one aggregator");
    for (const std::string& s : kind_names)
        out.sweep_kinds.push_back(aggregator_kinds().parse(s, "aggregator.kind"));
    cfg.aggregator.kind = out.sweep_kinds.front();

    bool wants_trim = false, wants_krum = false;
    for (AggregatorKind k : out.sweep_kinds) {
        wants_trim |= k == AggregatorKind::trimmed_mean;
        wants_krum |= k == AggregatorKind::krum;
    }
    if (wants_trim && wants_krum)
        expect_keys(agg, "aggregator", {"kind", "trim_count", "assumed_attackers"});
    else if (wants_trim)
        expect_keys(agg, "aggregator", {"kind", "trim_count"});
    else if (wants_krum)
        expect_keys(agg, "aggregator", {"kind", "assumed_attackers"});
    else
        expect_keys(agg, "aggregator", {"kind"});
    cfg.aggregator.trim_count =
        get_or<int>(agg, "aggregator", "trim_count", cfg.aggregator.trim_count);
    cfg.aggregator.assumed_attackers = get_or<int>(
        agg, "aggregator", "assumed_attackers", cfg.aggregator.assumed_attackers);

    const ordered_json& local = get_object(root, "", "local", false);
    expect_keys(local, "local", {"epochs", "batch_size", "lr"});
    cfg.local.epochs = get_or<int>(local, "local", "epochs", cfg.local.epochs);
    cfg.local.batch_size =
        get_or<std::size_t>(local, "local", "batch_size", cfg.local.batch_size);
    cfg.local.lr = get_or<double>(local, "local", "lr", cfg.local.lr);

    const ordered_json& meta = get_object(root, "", "meta", false);
    expect_keys(meta, "meta",
                {"eta", "meta_steps", "re_aggregate", "mode", "tau", "alpha", "floor"});
    cfg.meta.eta = get_or<double>(meta, "meta", "eta", cfg.meta.eta);
    cfg.meta.meta_steps = get_or<int>(meta, "meta", "meta_steps", cfg.meta.meta_steps);
    cfg.meta.re_aggregate_after_update = get_or<bool>(
        meta, "meta", "re_aggregate", cfg.meta.re_aggregate_after_update);
    cfg.meta.mode = stabilize_modes().parse(
        get_or<std::string>(meta, "meta", "mode", "renormalize"), "meta.mode");
    cfg.meta.tau = get_or<double>(meta, "meta", "tau", cfg.meta.tau);
    cfg.meta.alpha = get_or<double>(meta, "meta", "alpha", cfg.meta.alpha);
    cfg.meta.floor = get_or<double>(meta, "meta", "floor", cfg.meta.floor);

    const ordered_json& mv = get_object(root, "", "metaval", false);
    expect_keys(mv, "metaval", {"size", "resample"});
    cfg.metaval_size = get_or<std::size_t>(mv, "metaval", "size", cfg.metaval_size);
    cfg.metaval_resample =
        get_or<bool>(mv, "metaval", "resample", cfg.metaval_resample);

    cfg.validate();
    return out;
}

inline ParsedConfig parse_config_text(const std::string& text) {
    ordered_json root;
    try {
        root = ordered_json::parse(text, nullptr, true, /*ignore_comments=*/true);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config_json(root);
}

inline ParsedConfig parse_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config: " + path);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    try {
        return parse_config_text(text);
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

// Full canonical form: every key present, fixed order. Reparsing it yields
// the same configuration.
inline ordered_json canonical_json(const FederationConfig& cfg,
                                   const std::vector<AggregatorKind>& kinds = {}) {
    using namespace detail;
    ordered_json j;
    j["name"] = cfg.name;
    j["seed"] = cfg.seed;
    j["num_clients"] = cfg.num_clients;
    j["rounds"] = cfg.rounds;
    j["clients_per_round"] = cfg.clients_per_round;
    j["hidden_layers"] = cfg.hidden_layers;

    ordered_json ds;
    ds["kind"] = dataset_kinds().name(cfg.dataset.kind);
    if (cfg.dataset.kind == DatasetSpec::Kind::idx) {
        ds["train_images"] = cfg.dataset.train_images;
        ds["train_labels"] = cfg.dataset.train_labels;
        ds["test_images"] = cfg.dataset.test_images;
        ds["test_labels"] = cfg.dataset.test_labels;
        ds["train_limit"] = cfg.dataset.train_limit;
    } else {
        ds["classes"] = cfg.dataset.blob_classes;
        ds["samples_per_class"] = cfg.dataset.blob_per_class;
        ds["feature_dim"] = cfg.dataset.blob_dim;
        ds["test_fraction"] = cfg.dataset.blob_test_fraction;
    }
    j["dataset"] = ds;

    j["partition"] = {{"scheme", partition_schemes().name(cfg.scheme)},
                      {"beta", cfg.beta}};
    ordered_json atk;
    atk["kind"] = attack_kinds().name(cfg.attack.kind);
    atk["fraction"] = cfg.attack.fraction;
    if (cfg.attack.kind == AttackKind::gaussian_noise)
        atk["sigma"] = cfg.attack.sigma;
    j["attack"] = atk;

    ordered_json agg;
    std::vector<AggregatorKind> all = kinds.empty()
                                          ? std::vector<AggregatorKind>{cfg.aggregator.kind}
                                          : kinds;
    if (all.size() == 1) {
        agg["kind"] = aggregator_kinds().name(all.front());
    } else {
        ordered_json arr = ordered_json::array();
        for (AggregatorKind k : all) arr.push_back(aggregator_kinds().name(k));
        agg["kind"] = arr;
    }
    bool wants_trim = false, wants_krum = false;
    for (AggregatorKind k : all) {
        wants_trim |= k == AggregatorKind::trimmed_mean;
        wants_krum |= k == AggregatorKind::krum;
    }
    if (wants_trim) agg["trim_count"] = cfg.aggregator.trim_count;
    if (wants_krum) agg["assumed_attackers"] = cfg.aggregator.assumed_attackers;
    j["aggregator"] = agg;

    j["local"] = {{"epochs", cfg.local.epochs},
                  {"batch_size", cfg.local.batch_size},
                  {"lr", cfg.local.lr}};
    j["meta"] = {{"eta", cfg.meta.eta},
                 {"meta_steps", cfg.meta.meta_steps},
                 {"re_aggregate", cfg.meta.re_aggregate_after_update},
                 {"mode", stabilize_modes().name(cfg.meta.mode)},
                 {"tau", cfg.meta.tau},
                 {"alpha", cfg.meta.alpha},
                 {"floor", cfg.meta.floor}};
    j["metaval"] = {{"size", cfg.metaval_size}, {"resample", cfg.metaval_resample}};
    j["threads"] = cfg.threads;
    return j;
}

// FNV-1a over the canonical form minus fields that cannot change results
// (name, threads). Used to name run directories.
inline std::string config_hash(const FederationConfig& cfg,
                               const std::vector<AggregatorKind>& kinds = {}) {
    ordered_json j = canonical_json(cfg, kinds);
    j.erase("name");
    j.erase("threads");
    const std::string dump = j.dump();
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace fedsim

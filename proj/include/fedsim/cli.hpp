#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedsim/config.hpp"
#include "fedsim/engine.hpp"
#include "fedsim/error.hpp"
#include "fedsim/output.hpp"
#include "fedsim/svg.hpp"

namespace fedsim {

struct CliOptions {
    std::string config_path;
    std::string out_dir = "runs";
    std::vector<double> fractions;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
};

namespace cli_detail {

inline ParsedConfig load(const CliOptions& opt) {
    if (opt.config_path.empty()) throw ConfigError("--config is required");
    ParsedConfig pc = parse_config(opt.config_path);
    if (opt.seed) pc.config.seed = *opt.seed;
    if (opt.threads) pc.config.threads = *opt.threads;
    return pc;
}

inline std::string fraction_label(double f) {
    return "a" + std::to_string(std::llround(f * 100.0));
}

}  // namespace cli_detail

inline int cmd_run(const CliOptions& opt, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
    try {
        ParsedConfig pc = cli_detail::load(opt);
        if (pc.sweep_kinds.size() > 1)
            throw ConfigError("config lists " + std::to_string(pc.sweep_kinds.size()) +
                              " aggregators; `run` takes exactly one (use `sweep`)");
        const std::string hash = config_hash(pc.config);
        const std::string stamp = out_detail::utc_stamp();
        const std::string dir = make_run_dir(opt.out_dir, hash, stamp);
        ExperimentResult res = run_experiment(pc.config);
        OutputBundle bundle = write_run_outputs(res, dir, hash, stamp);
        out << "run dir: " << bundle.dir << "\n";
        out << "final accuracy: " << out_detail::g6(res.final_accuracy)
            << "  macro F1: " << out_detail::g6(res.final_macro_f1) << "\n";
        return 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

inline int cmd_sweep(const CliOptions& opt, std::ostream& out = std::cout,
                     std::ostream& err = std::cerr) {
    try {
        ParsedConfig pc = cli_detail::load(opt);
        if (opt.fractions.empty())
            throw ConfigError("--fractions is required for `sweep` (e.g. 0.2,0.5,0.9)");
        for (double f : opt.fractions)
            if (f < 0.0 || f > 1.0)
                throw ConfigError("--fractions: values must lie in [0,1]; got " +
                                  out_detail::g6(f));

        const std::string hash = config_hash(pc.config, pc.sweep_kinds);
        const std::string stamp = out_detail::utc_stamp();
        const std::string dir = make_run_dir(opt.out_dir, hash, stamp);
        std::filesystem::create_directories(dir);

        std::string combined = "fraction,aggregator,final_accuracy,final_f1,status\n";
        bool any_failed = false;
        for (AggregatorKind kind : pc.sweep_kinds) {
            FederationConfig base = pc.config;
            base.aggregator.kind = kind;
            const std::string kind_name = detail::aggregator_kinds().name(kind);
            std::vector<SweepEntry> entries = run_sweep(base, opt.fractions);
            for (const SweepEntry& e : entries) {
                combined += out_detail::g6(e.fraction) + "," + kind_name + ",";
                if (e.failed) {
                    combined += ",,failed\n";
                    any_failed = true;
                    err << "sweep " << cli_detail::fraction_label(e.fraction) << " "
                        << kind_name << " failed: " << e.error << "\n";
                    continue;
                }
                combined += out_detail::g6(e.result.final_accuracy) + "," +
                            out_detail::g6(e.result.final_macro_f1) + ",ok\n";
                const std::string sub =
                    (std::filesystem::path(dir) /
                     (cli_detail::fraction_label(e.fraction) + "-" + kind_name))
                        .string();
                write_run_outputs(e.result, sub, config_hash(e.result.config), stamp);
            }
        }
        out_detail::write_file(
            (std::filesystem::path(dir) / "accuracy_vs_attack.csv").string(), combined);
        out << "sweep dir: " << dir << "\n";
        return any_failed ? 1 : 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

inline int cmd_plot(const std::string& run_dir, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
    namespace fs = std::filesystem;
    try {
        std::vector<std::string> written;

        const std::string k_path = (fs::path(run_dir) / "k_history.csv").string();
        if (fs::exists(k_path)) {
            auto rows = read_csv(k_path);
            int last_round = 0;
            for (std::size_t i = 1; i < rows.size(); ++i)
                last_round = std::max(last_round, std::stoi(rows[i][0]));
            std::vector<double> k;
            std::vector<char> malicious;
            for (std::size_t i = 1; i < rows.size(); ++i) {
                if (std::stoi(rows[i][0]) != last_round) continue;
                k.push_back(std::stod(rows[i][2]));
                malicious.push_back(rows[i][3] == "1");
            }
            if (!k.empty()) {
                const std::string path = (fs::path(run_dir) / "k_weights.svg").string();
                out_detail::write_file(
                    path, svg::bar_chart(k, malicious,
                                         "aggregation weights, round " +
                                             std::to_string(last_round)));
                written.push_back(path);
            }
        }

        const std::string sweep_path =
            (fs::path(run_dir) / "accuracy_vs_attack.csv").string();
        if (fs::exists(sweep_path)) {
            auto rows = read_csv(sweep_path);
            std::vector<svg::LineSeries> series;
            std::map<std::string, std::size_t> index;
            for (std::size_t i = 1; i < rows.size(); ++i) {
                if (rows[i].size() < 5 || rows[i][4] != "ok") continue;
                const std::string& name = rows[i][1];
                if (!index.count(name)) {
                    index[name] = series.size();
                    series.push_back({name, {}});
                }
                series[index[name]].points.emplace_back(std::stod(rows[i][0]),
                                                        std::stod(rows[i][2]));
            }
            if (!series.empty()) {
                const std::string path =
                    (fs::path(run_dir) / "accuracy_vs_attack.svg").string();
                out_detail::write_file(
                    path, svg::line_chart(series, "final accuracy vs attack fraction",
                                          "attack fraction", "accuracy"));
                written.push_back(path);
            }
        }

        if (written.empty()) {
            err << "plot: nothing to plot in " << run_dir
                << " (expected k_history.csv from `run` or accuracy_vs_attack.csv "
                   "from `sweep`)\n";
            return 1;
        }
        for (const std::string& p : written) out << "wrote " << p << "\n";
        return 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

inline int cmd_validate(const CliOptions& opt, std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
    try {
        ParsedConfig pc = cli_detail::load(opt);
        out << "ok\n";
        out << "hash: " << config_hash(pc.config, pc.sweep_kinds) << "\n";
        out << "aggregators:";
        for (AggregatorKind k : pc.sweep_kinds)
            out << " " << detail::aggregator_kinds().name(k);
        out << "\n";
        return 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

inline int cmd_defaults(std::ostream& out = std::cout) {
    out << canonical_json(FederationConfig{}).dump(2) << "\n";
    return 0;
}

}  // namespace fedsim

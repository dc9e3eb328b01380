#pragma once

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fedsim/config.hpp"
#include "fedsim/engine.hpp"
#include "fedsim/error.hpp"

namespace fedsim {

struct OutputBundle {
    std::string dir;
    std::string metrics_path;
    std::string k_history_path;
    std::string summary_path;
    std::vector<std::string> plot_paths;
};

namespace out_detail {

// 6 significant digits, C locale regardless of environment.
inline std::string g6(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

inline std::string utc_stamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
    return buf;
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << content;
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace out_detail

inline std::string metrics_csv(const std::vector<RoundRecord>& records) {
    std::string s = "round,accuracy,macro_f1,meta_loss\n";
    for (const RoundRecord& r : records)
        s += std::to_string(r.round) + "," + out_detail::g6(r.accuracy) + "," +
             out_detail::g6(r.macro_f1) + "," + out_detail::g6(r.meta_loss) + "\n";
    return s;
}

inline std::string k_history_csv(const std::vector<RoundRecord>& records) {
    std::string s = "round,client,k,malicious\n";
    for (const RoundRecord& r : records)
        for (std::size_t c = 0; c < r.k.size(); ++c)
            s += std::to_string(r.round) + "," + std::to_string(c) + "," +
                 out_detail::g6(r.k[c]) + "," + (r.malicious[c] ? "1" : "0") + "\n";
    return s;
}

inline std::string summary_text(const ExperimentResult& res, const std::string& hash,
                                const std::string& stamp) {
    std::ostringstream s;
    s << "name: " << res.config.name << "\n";
    s << "config_hash: " << hash << "\n";
    s << "timestamp: " << stamp << "\n";
    s << "rounds_completed: " << res.records.size() << "\n";
    s << "final_accuracy: " << out_detail::g6(res.final_accuracy) << "\n";
    s << "final_macro_f1: " << out_detail::g6(res.final_macro_f1) << "\n";
    s << "attackers: " << res.attacker_ids.size() << "\n";
    s << "attacker_ids:";
    for (int id : res.attacker_ids) s << " " << id;
    s << "\n";
    if (!res.mean_k_honest.empty()) {
        s << "mean_k_honest_final: " << out_detail::g6(res.mean_k_honest.back())
          << "\n";
        s << "mean_k_malicious_final: " << out_detail::g6(res.mean_k_malicious.back())
          << "\n";
    }
    int resets = 0;
    double wall = 0.0;
    for (const RoundRecord& r : res.records) {
        resets += r.degenerate_reset ? 1 : 0;
        wall += r.wall_seconds;
    }
    s << "degenerate_resets: " << resets << "\n";
    s << "wall_seconds_total: " << out_detail::g6(wall) << "\n";
    return s.str();
}

// Creates `dir` (parents included) and fills it with the standard artifact
// set: config echo, per-round metrics, per-round per-client weights, summary.
inline OutputBundle write_run_outputs(const ExperimentResult& res,
                                      const std::string& dir,
                                      const std::string& hash,
                                      const std::string& stamp) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    OutputBundle bundle;
    bundle.dir = dir;
    bundle.metrics_path = (fs::path(dir) / "metrics.csv").string();
    bundle.k_history_path = (fs::path(dir) / "k_history.csv").string();
    bundle.summary_path = (fs::path(dir) / "summary.txt").string();
    out_detail::write_file((fs::path(dir) / "config.json").string(),
                           canonical_json(res.config).dump(2) + "\n");
    out_detail::write_file(bundle.metrics_path, metrics_csv(res.records));
    out_detail::write_file(bundle.k_history_path, k_history_csv(res.records));
    out_detail::write_file(bundle.summary_path, summary_text(res, hash, stamp));
    return bundle;
}

// Run directory named by config hash + timestamp; a numeric suffix keeps
// same-second reruns apart.
inline std::string make_run_dir(const std::string& out_root, const std::string& hash,
                                const std::string& stamp) {
    namespace fs = std::filesystem;
    fs::create_directories(out_root);
    std::string base = (fs::path(out_root) / (hash + "-" + stamp)).string();
    std::string dir = base;
    for (int i = 1; fs::exists(dir); ++i) dir = base + "-" + std::to_string(i);
    return dir;
}

// Minimal reader for the CSVs this module writes: comma split, no quoting.
inline std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            if (comma == std::string::npos) {
                cells.push_back(line.substr(start));
                break;
            }
            cells.push_back(line.substr(start, comma - start));
            start = comma + 1;
        }
        rows.push_back(std::move(cells));
    }
    return rows;
}

}  // namespace fedsim

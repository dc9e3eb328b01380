#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "fedsim/error.hpp"
#include "fedsim/mlp.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

enum class AttackKind { none, label_flip, gaussian_noise };

struct AttackSpec {
    AttackKind kind = AttackKind::none;
    double fraction = 0.0;  // rho, share of clients that are Byzantine
    double sigma = 1.0;     // noise scale for gaussian_noise

    void validate() const {
        if (fraction < 0.0 || fraction > 1.0)
            throw ConfigError("attack: fraction must lie in [0,1]");
        if (kind == AttackKind::gaussian_noise && sigma <= 0.0)
            throw ConfigError("attack: sigma must be > 0 for gaussian_noise");
    }
};

// Adds elementwise N(0, sigma^2) noise to an update.
inline ParamVector noise_update(const ParamVector& honest, double sigma,
                                std::mt19937_64& rng) {
    if (sigma <= 0.0) throw ConfigError("noise_update: sigma must be > 0");
    ParamVector out = honest;
    std::normal_distribution<double> noise(0.0, sigma);
    for (double& v : out) v += noise(rng);
    return out;
}

// Picks round(fraction * num_clients) distinct client indices uniformly.
inline std::set<int> select_attackers(int num_clients, double fraction,
                                      std::uint64_t seed) {
    if (fraction < 0.0 || fraction > 1.0)
        throw ConfigError("select_attackers: fraction must lie in [0,1]");
    const int count = static_cast<int>(std::llround(fraction * num_clients));
    std::vector<int> ids(num_clients);
    std::iota(ids.begin(), ids.end(), 0);
    auto rng = make_rng({seed, stream::attackers});
    std::shuffle(ids.begin(), ids.end(), rng);
    return {ids.begin(), ids.begin() + count};
}

}  // namespace fedsim

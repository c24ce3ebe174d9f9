#pragma once

#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "shfl/dataset.hpp"
#include "shfl/rng.hpp"

namespace shfl {

// Gaussian fake-noise poisoning with the two temporal policies from the
// attack grid: a one-shot hit at start_round or a sustained campaign from
// start_round onward. noise_var is a variance, not a standard deviation.
struct AttackPolicy {
    enum class Kind { SingleRound, Continuous };
    Kind kind = Kind::Continuous;
    int start_round = 10;
    double noise_mean = 0.0;
    double noise_var = 0.0;
};

inline bool attack_active(const AttackPolicy& p, int round) {
    if (p.kind == AttackPolicy::Kind::SingleRound) return round == p.start_round;
    return round >= p.start_round;
}

struct RoleMap {
    std::set<int> attackers;
    std::set<int> unreliable;
    double drop_prob = 0.0;

    bool is_attacker(int id) const { return attackers.count(id) > 0; }
    bool is_unreliable(int id) const { return unreliable.count(id) > 0; }
};

// floor(fraction * N) attackers and unreliable transmitters, drawn
// uniformly and disjointly.
inline RoleMap assign_roles(const std::vector<int>& vehicle_ids,
                            double attacker_fraction, double unreliable_fraction,
                            double drop_prob, std::uint64_t seed) {
    if (attacker_fraction < 0.0 || attacker_fraction > 1.0)
        throw ConfigError("attacker_fraction", "must be in [0, 1]");
    if (unreliable_fraction < 0.0 || unreliable_fraction > 1.0)
        throw ConfigError("unreliable_fraction", "must be in [0, 1]");
    if (attacker_fraction + unreliable_fraction > 1.0)
        throw ConfigError("attacker_fraction",
                          "attacker and unreliable fractions must sum to <= 1");
    if (drop_prob < 0.0 || drop_prob >= 1.0)
        throw ConfigError("drop_prob", "must be in [0, 1)");

    auto n = static_cast<double>(vehicle_ids.size());
    auto n_attack = static_cast<std::size_t>(std::floor(attacker_fraction * n));
    auto n_unrel = static_cast<std::size_t>(std::floor(unreliable_fraction * n));

    std::vector<int> pool = vehicle_ids;
    Rng rng(seed);
    rng.shuffle(pool);

    RoleMap roles;
    roles.drop_prob = drop_prob;
    for (std::size_t i = 0; i < n_attack; ++i) roles.attackers.insert(pool[i]);
    for (std::size_t i = 0; i < n_unrel; ++i) roles.unreliable.insert(pool[n_attack + i]);
    return roles;
}

// Adds i.i.d. Gaussian noise to the transmitted copy; the caller keeps the
// attacker's own local state untouched.
inline std::vector<double> poison(const std::vector<double>& values,
                                  const AttackPolicy& policy, Rng& rng) {
    std::vector<double> out = values;
    double sd = std::sqrt(policy.noise_var);
    if (sd == 0.0) {
        for (auto& x : out) x += policy.noise_mean;
    } else {
        for (auto& x : out) x += rng.normal(policy.noise_mean, sd);
    }
    return out;
}

}  // namespace shfl

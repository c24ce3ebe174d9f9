#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include "shfl/rng.hpp"

namespace shfl {

// Spawn-time speed bounds (m/s); jittered speeds are re-clipped to the same range.
inline constexpr double kMinSpeed = 10.0;
inline constexpr double kMaxSpeed = 35.0;
inline constexpr double kSpeedSpread = kMaxSpeed - kMinSpeed;

enum class ClusterRole { Head, Member, Free };

inline const char* role_name(ClusterRole r) {
    switch (r) {
        case ClusterRole::Head: return "CH";
        case ClusterRole::Member: return "CM";
        case ClusterRole::Free: return "free";
    }
    return "?";
}

struct VehicleState {
    int id = -1;
    double position = 0.0;  // meters along the closed track
    int lane = 0;           // lane 0 runs forward, lane 1 backward
    double speed = kMinSpeed;
    int arrival_round = 0;

    int heading() const { return lane == 0 ? +1 : -1; }
};

struct HelloPacket {
    int sender = -1;
    int direction = +1;
    double location = 0.0;
    double velocity = 0.0;
    ClusterRole clustering_state = ClusterRole::Free;
    int connector = -1;           // vehicle that links the sender to its cluster
    double model_similarity = 0;  // cos(current local params, previous local params)
    double avg_rel_speed = 0.0;   // mean |speed difference| over current neighbors
};

// Disk connectivity plus per-sender Bernoulli loss. Message outcomes depend
// only on (seed, sequence number), never on evaluation order.
struct ChannelModel {
    double comm_range = 100.0;
    std::map<int, double> drop_prob;  // absent id => reliable (0)
    std::uint64_t seed = 0;

    double drop_of(int vehicle) const {
        auto it = drop_prob.find(vehicle);
        return it == drop_prob.end() ? 0.0 : it->second;
    }
};

using Adjacency = std::map<int, std::vector<int>>;

inline double ring_distance(double a, double b, double track_length) {
    double d = std::fabs(a - b);
    d = std::fmin(d, track_length - d);
    return d;
}

inline double wrap_position(double pos, double track_length) {
    double p = std::fmod(pos, track_length);
    if (p < 0) p += track_length;
    return p;
}

// Poisson-many arrivals this round, truncated at the population cap.
// Ids are assigned sequentially after the existing population.
inline std::vector<VehicleState> spawn_arrivals(double rate, int round,
                                                std::size_t current_count,
                                                std::size_t cap, double track_length,
                                                Rng& rng,
                                                std::size_t* truncated = nullptr) {
    if (rate < 0.0) throw std::invalid_argument("spawn_arrivals: rate must be >= 0");
    int n = rng.poisson(rate);
    std::size_t room = cap > current_count ? cap - current_count : 0;
    if (truncated)
        *truncated = static_cast<std::size_t>(n) > room ? n - room : 0;
    std::size_t take = std::min<std::size_t>(n, room);
    std::vector<VehicleState> out;
    out.reserve(take);
    for (std::size_t k = 0; k < take; ++k) {
        VehicleState v;
        v.id = static_cast<int>(current_count + k);
        v.position = rng.uniform(0.0, track_length);
        v.lane = rng.uniform_int(0, 1);
        v.speed = rng.uniform(kMinSpeed, kMaxSpeed);
        v.arrival_round = round;
        out.push_back(v);
    }
    return out;
}

// Advance positions by one step; speeds get clipped Gaussian jitter and are
// re-clipped into [kMinSpeed, kMaxSpeed].
inline void step_mobility(std::vector<VehicleState>& states, double dt,
                          double track_length, double jitter_std, Rng& rng) {
    if (dt <= 0.0) throw std::invalid_argument("step_mobility: dt must be > 0");
    for (auto& v : states) {
        v.position = wrap_position(v.position + v.heading() * v.speed * dt, track_length);
        if (jitter_std > 0.0) {
            double j = rng.normal(0.0, jitter_std);
            j = std::clamp(j, -3.0 * jitter_std, 3.0 * jitter_std);
            v.speed = std::clamp(v.speed + j, kMinSpeed, kMaxSpeed);
        }
    }
}

// Symmetric, irreflexive disk adjacency on the ring.
inline Adjacency neighbors(const std::vector<VehicleState>& states,
                           const ChannelModel& channel, double track_length) {
    Adjacency adj;
    for (const auto& v : states) adj[v.id];
    for (std::size_t i = 0; i < states.size(); ++i) {
        for (std::size_t j = i + 1; j < states.size(); ++j) {
            double d = ring_distance(states[i].position, states[j].position, track_length);
            if (d <= channel.comm_range) {
                adj[states[i].id].push_back(states[j].id);
                adj[states[j].id].push_back(states[i].id);
            }
        }
    }
    for (auto& [id, list] : adj) std::sort(list.begin(), list.end());
    return adj;
}

inline bool are_neighbors(const Adjacency& adj, int a, int b) {
    auto it = adj.find(a);
    if (it == adj.end()) return false;
    return std::binary_search(it->second.begin(), it->second.end(), b);
}

namespace detail {

inline bool channel_delivers(const ChannelModel& channel, int sender, std::uint64_t seq) {
    double p = channel.drop_of(sender);
    if (p <= 0.0) return true;
    // outcome is a pure function of (channel seed, sequence number)
    std::uint64_t h = mix_seed(channel.seed, seq);
    double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    return u >= p;
}

}  // namespace detail

// Vehicle-to-vehicle delivery. Non-neighbor transmission is a caller bug.
inline bool transmit_v2v(const ChannelModel& channel, const Adjacency& adj, int sender,
                         int receiver, std::uint64_t seq) {
    if (sender == receiver)
        throw std::invalid_argument("transmit: sender equals receiver");
    if (!are_neighbors(adj, sender, receiver))
        throw std::invalid_argument("transmit: sender and receiver are not neighbors");
    return detail::channel_delivers(channel, sender, seq);
}

// Vehicle-to-EPC uplink; same per-sender loss model, no range constraint.
inline bool transmit_uplink(const ChannelModel& channel, int sender, std::uint64_t seq) {
    return detail::channel_delivers(channel, sender, seq);
}

inline double avg_relative_speed(const VehicleState& self,
                                 const std::vector<int>& neighbor_ids,
                                 const std::map<int, VehicleState>& by_id) {
    if (neighbor_ids.empty()) return 0.0;
    double s = 0.0;
    for (int n : neighbor_ids) s += std::fabs(self.speed - by_id.at(n).speed);
    return s / static_cast<double>(neighbor_ids.size());
}

inline HelloPacket make_hello(const VehicleState& self,
                              const std::vector<int>& neighbor_ids,
                              const std::map<int, VehicleState>& by_id,
                              ClusterRole state, int connector,
                              double model_similarity) {
    HelloPacket h;
    h.sender = self.id;
    h.direction = self.heading();
    h.location = self.position;
    h.velocity = self.speed;
    h.clustering_state = state;
    h.connector = connector;
    h.model_similarity = model_similarity;
    h.avg_rel_speed = avg_relative_speed(self, neighbor_ids, by_id);
    return h;
}

}  // namespace shfl

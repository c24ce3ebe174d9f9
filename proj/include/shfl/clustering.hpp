#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>
#include <vector>

#include "shfl/mobility.hpp"

namespace shfl {

struct SuitabilityScore {
    int vehicle = -1;
    double speed_term = 0.0;       // 1 = moves with its neighborhood
    double similarity_term = 0.0;  // mean neighbor model-similarity summary
    double combined = 0.0;         // alpha * speed + (1 - alpha) * similarity
};

struct ClusterAssignment {
    std::map<int, ClusterRole> role;
    std::map<int, int> head_of;               // member -> its CH
    std::map<int, std::vector<int>> members;  // CH -> sorted member ids

    ClusterRole role_of(int id) const {
        auto it = role.find(id);
        return it == role.end() ? ClusterRole::Free : it->second;
    }

    std::vector<int> heads() const {
        std::vector<int> out;
        for (const auto& [id, r] : role)
            if (r == ClusterRole::Head) out.push_back(id);
        return out;
    }
};

struct ChurnEvent {
    int round = 0;
    int vehicle = -1;
    ClusterRole from = ClusterRole::Free;
    ClusterRole to = ClusterRole::Free;
    int old_head = -1;
    int new_head = -1;
};

// Election metric from the CbHFL family: relative mobility plus model
// similarity as reported in HELLO packets. HELLO packets carry each
// vehicle's own current-vs-previous parameter similarity, so the
// similarity term here is the mean of the neighbors' summaries.
inline SuitabilityScore suitability(int vehicle, const std::vector<int>& neighbor_ids,
                                    const std::map<int, VehicleState>& by_id,
                                    const std::map<int, HelloPacket>& hellos,
                                    double alpha) {
    SuitabilityScore s;
    s.vehicle = vehicle;
    if (neighbor_ids.empty()) {
        s.speed_term = 1.0;
        s.similarity_term = 0.0;
    } else {
        double rel = avg_relative_speed(by_id.at(vehicle), neighbor_ids, by_id);
        s.speed_term = std::clamp(1.0 - rel / kSpeedSpread, 0.0, 1.0);
        double sim = 0.0;
        for (int n : neighbor_ids) sim += hellos.at(n).model_similarity;
        s.similarity_term = sim / static_cast<double>(neighbor_ids.size());
    }
    s.combined = alpha * s.speed_term + (1.0 - alpha) * s.similarity_term;
    return s;
}

namespace detail {

// Highest combined score wins; ties go to the lower vehicle id.
inline int best_candidate(const std::set<int>& pool,
                          const std::map<int, SuitabilityScore>& scores) {
    int best = -1;
    for (int id : pool) {
        if (best == -1 || scores.at(id).combined > scores.at(best).combined) best = id;
    }
    return best;
}

inline void add_member(ClusterAssignment& a, int head, int member) {
    a.role[member] = ClusterRole::Member;
    a.head_of[member] = head;
    auto& m = a.members[head];
    m.insert(std::upper_bound(m.begin(), m.end(), member), member);
}

}  // namespace detail

// Greedy one-hop election over the given candidate pool: repeatedly crown
// the best unassigned vehicle and absorb its unassigned neighbors.
inline void form_clusters_into(ClusterAssignment& a, std::set<int> pool,
                               const Adjacency& adj,
                               const std::map<int, SuitabilityScore>& scores) {
    while (!pool.empty()) {
        int head = detail::best_candidate(pool, scores);
        pool.erase(head);
        a.role[head] = ClusterRole::Head;
        a.members[head];  // singleton CH is valid
        for (int n : adj.at(head)) {
            if (pool.count(n)) {
                pool.erase(n);
                detail::add_member(a, head, n);
            }
        }
    }
}

inline ClusterAssignment form_clusters(const Adjacency& adj,
                                       const std::map<int, SuitabilityScore>& scores) {
    ClusterAssignment a;
    std::set<int> pool;
    for (const auto& [id, _] : adj) pool.insert(id);
    form_clusters_into(a, std::move(pool), adj, scores);
    return a;
}

// Stability-biased maintenance: in-range CH/CM links persist; members that
// lost their CH go free, rehome to the best in-range CH if any, and the
// rest re-run the greedy election among themselves. A CH that just lost
// its members stays a singleton CH; one that has been memberless since
// the previous round may dissolve into an in-range cluster, which keeps
// the CH role from becoming absorbing under churn. Vehicles in
// `hold_role` (currently blocked ones) are exempt from dissolution: they
// keep their singleton CH slot until their evaluator clears them.
inline std::pair<ClusterAssignment, std::vector<ChurnEvent>> maintain_clusters(
    const ClusterAssignment& prev, const Adjacency& adj,
    const std::map<int, SuitabilityScore>& scores, int round,
    const std::set<int>* hold_role = nullptr) {
    ClusterAssignment next;
    std::vector<ChurnEvent> churn;
    std::set<int> free_pool;

    for (const auto& [id, _] : adj) {
        ClusterRole was = prev.role_of(id);
        if (was == ClusterRole::Head) {
            next.role[id] = ClusterRole::Head;
            next.members[id];
        } else if (was == ClusterRole::Member) {
            int head = prev.head_of.at(id);
            if (adj.count(head) && are_neighbors(adj, id, head)) {
                detail::add_member(next, head, id);
                next.members[head];
            } else {
                free_pool.insert(id);
            }
        } else {
            free_pool.insert(id);
        }
    }

    // Rehome free vehicles to an existing in-range CH (best score, ties by id).
    std::set<int> still_free;
    for (int id : free_pool) {
        int best = -1;
        for (int n : adj.at(id)) {
            if (next.role_of(n) != ClusterRole::Head) continue;
            if (best == -1 || scores.at(n).combined > scores.at(best).combined) best = n;
        }
        if (best != -1)
            detail::add_member(next, best, id);
        else
            still_free.insert(id);
    }

    form_clusters_into(next, std::move(still_free), adj, scores);

    // Dissolve stale singletons: a CH memberless both last round and now
    // joins the best in-range CH. Weakest candidates dissolve first, so
    // when two stale singletons meet, the better-scored one ends up CH.
    std::vector<int> stale;
    for (const auto& [id, _] : adj) {
        if (next.role_of(id) != ClusterRole::Head) continue;
        if (!next.members.at(id).empty()) continue;
        if (hold_role && hold_role->count(id)) continue;
        auto prev_members = prev.members.find(id);
        bool was_stale = prev.role_of(id) == ClusterRole::Head &&
                         (prev_members == prev.members.end() || prev_members->second.empty());
        if (was_stale) stale.push_back(id);
    }
    std::sort(stale.begin(), stale.end(), [&](int a, int b) {
        if (scores.at(a).combined != scores.at(b).combined)
            return scores.at(a).combined < scores.at(b).combined;
        return a < b;
    });
    for (int id : stale) {
        if (!next.members.at(id).empty()) continue;  // someone joined meanwhile
        int best = -1;
        for (int n : adj.at(id)) {
            if (next.role_of(n) != ClusterRole::Head) continue;
            if (best == -1 || scores.at(n).combined > scores.at(best).combined) best = n;
        }
        if (best != -1) {
            next.role.erase(id);
            next.members.erase(id);
            detail::add_member(next, best, id);
        }
    }

    for (const auto& [id, r] : next.role) {
        ClusterRole was = prev.role_of(id);
        int old_head = was == ClusterRole::Member ? prev.head_of.at(id)
                       : was == ClusterRole::Head ? id
                                                  : -1;
        int new_head = r == ClusterRole::Member ? next.head_of.at(id)
                       : r == ClusterRole::Head ? id
                                                : -1;
        if (was != r || old_head != new_head)
            churn.push_back({round, id, was, r, old_head, new_head});
    }
    return {std::move(next), std::move(churn)};
}

// Sanity check used by tests: one-hop membership, consistent role maps.
inline bool assignment_consistent(const ClusterAssignment& a, const Adjacency& adj) {
    for (const auto& [cm, ch] : a.head_of) {
        if (a.role_of(cm) != ClusterRole::Member) return false;
        if (a.role_of(ch) != ClusterRole::Head) return false;
        if (!are_neighbors(adj, cm, ch)) return false;
        const auto& m = a.members.at(ch);
        if (!std::binary_search(m.begin(), m.end(), cm)) return false;
    }
    for (const auto& [ch, mem] : a.members) {
        if (a.role_of(ch) != ClusterRole::Head) return false;
        for (int cm : mem)
            if (!a.head_of.count(cm) || a.head_of.at(cm) != ch) return false;
    }
    return true;
}

}  // namespace shfl

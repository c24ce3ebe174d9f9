#pragma once

#include <map>
#include <utility>
#include <vector>

#include "shfl/clustering.hpp"
#include "shfl/model.hpp"
#include "shfl/vector_math.hpp"

namespace shfl {

// Pseudo-id for the EPC when it acts as the direct aggregator.
inline constexpr int kEpcId = -1;

struct CosDefenseConfig {
    double deviation_multiplier = 1.0;
};

// CosDefense baseline: score each client by the cosine similarity between
// the global model's last layer and the update's last-layer slice, then
// exclude clients whose score is significantly above the population mean.
// With fewer than two updates the statistics are meaningless and the
// filter keeps everything.
inline std::pair<std::vector<int>, std::vector<int>> cosdefense_filter(
    const ParamVector& global_model,
    const std::map<int, std::vector<double>>& updates, const CosDefenseConfig& cfg) {
    std::vector<int> kept, excluded;
    if (updates.size() < 2) {
        for (const auto& [id, _] : updates) kept.push_back(id);
        return {kept, excluded};
    }

    auto range = global_model.last_layer_range;
    auto global_slice = global_model.last_layer();
    std::vector<int> ids;
    std::vector<double> scores;
    for (const auto& [id, upd] : updates) {
        std::span<const double> upd_slice(upd.data() + range.begin, range.size());
        ids.push_back(id);
        scores.push_back(cosine_similarity(global_slice, upd_slice).value_or(0.0));
    }

    double threshold = mean(scores) + cfg.deviation_multiplier * stddev_population(scores);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (scores[i] > threshold)
            excluded.push_back(ids[i]);
        else
            kept.push_back(ids[i]);
    }
    return {kept, excluded};
}

// Flat topology: no CHs, every vehicle reports straight to the EPC.
inline ClusterAssignment no_clustering_topology(const std::vector<int>& vehicle_ids) {
    ClusterAssignment a;
    auto& m = a.members[kEpcId];
    for (int id : vehicle_ids) {
        a.role[id] = ClusterRole::Member;
        a.head_of[id] = kEpcId;
        m.push_back(id);
    }
    std::sort(m.begin(), m.end());
    return a;
}

}  // namespace shfl

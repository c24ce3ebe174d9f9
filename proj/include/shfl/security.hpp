#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "shfl/vector_math.hpp"

namespace shfl {

// Per-vehicle VIB bookkeeping. rounds_observed counts the rounds in which
// some evaluator (a CH or the EPC) had the vehicle in view; it is the
// denominator of the three reliability metrics. The record travels with
// the vehicle across cluster migrations and role changes, so update and
// model baselines are kept separately: updates are compared at the CH
// tier, full models at the EPC tier.
struct ReliabilityRecord {
    int vehicle_id = -1;
    double total_accuracy = 0.0;
    int total_contributions = 0;
    int total_anomalous = 0;
    bool block_flag = false;
    int block_duration = 0;
    int rounds_observed = 0;
    double reliability_score = 0.0;
    std::optional<std::vector<double>> last_update;  // previously accepted delta
    std::optional<std::vector<double>> last_model;   // previously accepted params
};

struct SecurityConfig {
    double accuracy_weight = 1.0;
    double frequency_weight = 1.0;
    double anomaly_weight = 1.0;
    double selected_client_percentage = 0.75;
    int unblock_time = 5;
    double similarity_threshold = 0.5;
};

inline double historical_accuracy(const ReliabilityRecord& r) {
    if (r.rounds_observed <= 0) return 0.0;
    return r.total_accuracy / static_cast<double>(r.rounds_observed);
}

inline double contribution_freq(const ReliabilityRecord& r) {
    if (r.rounds_observed <= 0) return 0.0;
    return static_cast<double>(r.total_contributions) /
           static_cast<double>(r.rounds_observed);
}

inline double anomaly_record(const ReliabilityRecord& r) {
    if (r.rounds_observed <= 0) return 0.0;
    return static_cast<double>(r.total_anomalous) /
           static_cast<double>(r.rounds_observed);
}

// Weighted sum of the three metrics; the result is cached on the record so
// the stored score never drifts from the raw counters.
inline double reliability_score(ReliabilityRecord& r, const SecurityConfig& cfg) {
    r.reliability_score = cfg.accuracy_weight * historical_accuracy(r) +
                          cfg.frequency_weight * contribution_freq(r) -
                          cfg.anomaly_weight * anomaly_record(r);
    return r.reliability_score;
}

// Top ceil(pct * N) ids by reliability score, score descending, ties by
// lower vehicle id; never fewer than one.
inline std::vector<int> select_clients(const std::vector<ReliabilityRecord>& records,
                                       const SecurityConfig& cfg) {
    if (records.empty()) return {};
    std::vector<const ReliabilityRecord*> sorted;
    sorted.reserve(records.size());
    for (const auto& r : records) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(),
              [](const ReliabilityRecord* a, const ReliabilityRecord* b) {
                  if (a->reliability_score != b->reliability_score)
                      return a->reliability_score > b->reliability_score;
                  return a->vehicle_id < b->vehicle_id;
              });
    auto take = static_cast<std::size_t>(std::ceil(
        cfg.selected_client_percentage * static_cast<double>(records.size())));
    take = std::clamp<std::size_t>(take, 1, records.size());
    std::vector<int> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) out.push_back(sorted[i]->vehicle_id);
    return out;
}

enum class BlockDecision { Participate, Skip };

// Block gate: a flagged vehicle is skipped until its block duration reaches
// the unblock time, then the flag clears and it participates again.
inline BlockDecision check_block(ReliabilityRecord& r, const SecurityConfig& cfg) {
    if (r.block_flag && r.block_duration < cfg.unblock_time) {
        ++r.block_duration;
        return BlockDecision::Skip;
    }
    r.block_flag = false;
    return BlockDecision::Participate;
}

enum class Verdict { Benign, Anomalous };

// Cosine test against the previously accepted vector. No baseline means a
// first contribution, which is taken at face value; an undefined similarity
// (zero vector) is treated as anomalous.
inline Verdict anomaly_test(const std::vector<double>& current,
                            const std::optional<std::vector<double>>& previous,
                            const SecurityConfig& cfg) {
    if (!previous.has_value()) return Verdict::Benign;
    auto sim = cosine_similarity(current, *previous);
    if (!sim.has_value()) return Verdict::Anomalous;
    return *sim < cfg.similarity_threshold ? Verdict::Anomalous : Verdict::Benign;
}

struct SecurityEvent {
    int round = 0;
    std::string tier;  // "ch" or "epc"
    int evaluator = -1;  // CH id, or -1 for the EPC
    int vehicle = -1;
    std::string kind;  // selected, skip, flag_set, flag_clear, accept, missed
    double value = 0.0;
};

struct SecurityRoundResult {
    std::vector<int> accepted;  // ids whose vectors go into aggregation, selection order
    std::vector<SecurityEvent> events;
};

using AccuracyFn = std::function<double(int vehicle, const std::vector<double>& vec)>;

namespace detail {

// Shared body of the two vetting rounds. Algorithm 1 selects the top
// fraction of members before the per-vehicle gate; Algorithm 2 examines
// every known CH. `baseline` picks which stored vector the cosine test
// runs against (deltas at the CH tier, model parameters at the EPC tier).
inline SecurityRoundResult vet_round(
    std::map<int, ReliabilityRecord>& records, const std::vector<int>& population,
    const std::map<int, std::vector<double>>& delivered, const AccuracyFn& accuracy_of,
    int round, const SecurityConfig& cfg, bool apply_selection,
    std::optional<std::vector<double>> ReliabilityRecord::* baseline,
    const std::string& tier, int evaluator) {
    SecurityRoundResult res;
    for (int id : population) {
        if (!records.count(id)) {
            ReliabilityRecord fresh;
            fresh.vehicle_id = id;
            records[id] = fresh;
        }
    }

    // Scores for the selection step reflect the state after the previous
    // round; this round's observation is counted afterwards.
    std::vector<ReliabilityRecord> snapshot;
    snapshot.reserve(population.size());
    for (int id : population) {
        reliability_score(records.at(id), cfg);
        snapshot.push_back(records.at(id));
    }

    std::vector<int> examined;
    if (apply_selection) {
        examined = select_clients(snapshot, cfg);
    } else {
        examined = population;
        std::sort(examined.begin(), examined.end());
    }

    for (int id : population) {
        auto& r = records.at(id);
        ++r.rounds_observed;
        reliability_score(r, cfg);
    }

    for (int id : examined) {
        auto& r = records.at(id);
        res.events.push_back({round, tier, evaluator, id, "selected", r.reliability_score});

        bool was_blocked = r.block_flag;
        if (check_block(r, cfg) == BlockDecision::Skip) {
            reliability_score(r, cfg);
            res.events.push_back({round, tier, evaluator, id, "skip",
                                  static_cast<double>(r.block_duration)});
            continue;
        }
        if (was_blocked)
            res.events.push_back({round, tier, evaluator, id, "flag_clear", 0.0});

        auto upd = delivered.find(id);
        if (upd == delivered.end()) {
            // nothing arrived: a missed round, not an anomaly
            res.events.push_back({round, tier, evaluator, id, "missed", 0.0});
            continue;
        }

        if (anomaly_test(upd->second, r.*baseline, cfg) == Verdict::Anomalous) {
            r.block_flag = true;
            r.block_duration = 0;
            ++r.total_anomalous;
            reliability_score(r, cfg);
            auto sim = cosine_similarity(upd->second, *(r.*baseline));
            res.events.push_back({round, tier, evaluator, id, "flag_set",
                                  sim.value_or(std::nan(""))});
        } else {
            ++r.total_contributions;
            double acc = accuracy_of(id, upd->second);
            r.total_accuracy += acc;
            reliability_score(r, cfg);
            r.*baseline = upd->second;
            res.accepted.push_back(id);
            res.events.push_back({round, tier, evaluator, id, "accept", acc});
        }
    }
    return res;
}

}  // namespace detail

// Algorithm 1: dynamic client selection and anomaly detection over one
// cluster's members. Accepted ids are the selected, unblocked, delivered
// updates that passed the cosine test, in selection order.
inline SecurityRoundResult ch_round(std::map<int, ReliabilityRecord>& records,
                                    const std::vector<int>& member_ids,
                                    const std::map<int, std::vector<double>>& updates,
                                    const AccuracyFn& accuracy_of, int round,
                                    const SecurityConfig& cfg, int evaluator) {
    return detail::vet_round(records, member_ids, updates, accuracy_of, round, cfg,
                             /*apply_selection=*/true, &ReliabilityRecord::last_update,
                             "ch", evaluator);
}

// Algorithm 2: anomaly detection for CHs at the EPC. No selection step;
// the cosine test runs on model parameters rather than update deltas.
// A CH facing the EPC for the first time is compared against the model its
// cluster inherited (the last broadcast global): that is the cluster's
// theta from the previous iteration, so a freshly elected attacker cannot
// smuggle a poisoned aggregate in as a trusted baseline.
inline SecurityRoundResult epc_round(std::map<int, ReliabilityRecord>& records,
                                     const std::vector<int>& ch_ids,
                                     const std::map<int, std::vector<double>>& models,
                                     const AccuracyFn& accuracy_of, int round,
                                     const SecurityConfig& cfg,
                                     const std::vector<double>* inherited_model = nullptr) {
    if (inherited_model != nullptr) {
        for (int id : ch_ids) {
            auto it = records.find(id);
            if (it == records.end()) {
                ReliabilityRecord fresh;
                fresh.vehicle_id = id;
                fresh.last_model = *inherited_model;
                records[id] = std::move(fresh);
            } else if (!it->second.last_model.has_value()) {
                it->second.last_model = *inherited_model;
            }
        }
    }
    return detail::vet_round(records, ch_ids, models, accuracy_of, round, cfg,
                             /*apply_selection=*/false, &ReliabilityRecord::last_model,
                             "epc", -1);
}

}  // namespace shfl

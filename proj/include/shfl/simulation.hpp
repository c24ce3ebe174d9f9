#pragma once

#include <array>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "shfl/adversary.hpp"
#include "shfl/baselines.hpp"
#include "shfl/clustering.hpp"
#include "shfl/config.hpp"
#include "shfl/dataset.hpp"
#include "shfl/mobility.hpp"
#include "shfl/model.hpp"
#include "shfl/rng.hpp"
#include "shfl/security.hpp"

namespace shfl {

struct RoundMetrics {
    int round = 0;
    double epc_accuracy = 0.0;
    std::map<int, double> cluster_accuracy;  // CH id -> cluster model test accuracy
    int selected = 0;
    int accepted = 0;
    int flagged = 0;  // new flags this round, both tiers
    int blocked = 0;  // vehicles currently in blocked state
    std::vector<ChurnEvent> churn;
    // evaluator id -> {selected, accepted, flagged}; kEpcId covers the EPC tier
    std::map<int, std::array<int, 3>> cluster_counts;
    std::vector<SecurityEvent> events;
};

// Optional per-round trace streams (enabled by the verbose flag).
struct TraceSinks {
    std::ostream* mobility = nullptr;
    std::ostream* clusters = nullptr;
    std::ostream* security = nullptr;
};

// One experiment instance. The whole state evolves only through run_round,
// and every random draw is keyed to (master seed, stream label, round,
// vehicle), so a config determines the run bit-for-bit.
class Simulation {
public:
    explicit Simulation(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
        validate(cfg_);
        if (cfg_.dataset.file.empty()) {
            dataset_ = gen_dataset(cfg_.dataset.n_classes, cfg_.dataset.n_features,
                                   cfg_.dataset.n_samples, cfg_.dataset.class_separation,
                                   labeled_seed(cfg_.master_seed, "dataset"));
        } else {
            dataset_ = load_delimited_dataset(cfg_.dataset.file,
                                              labeled_seed(cfg_.master_seed, "dataset"));
        }
        clients_ = partition_non_iid(dataset_, cfg_.mobility.n_vehicles,
                                     cfg_.training.shards_per_client,
                                     labeled_seed(cfg_.master_seed, "partition"));
        std::vector<int> ids;
        for (std::size_t i = 0; i < cfg_.mobility.n_vehicles; ++i)
            ids.push_back(static_cast<int>(i));
        // Roles are assigned the same way whether or not attacks are enabled,
        // so an attacked run and its no-attack counterpart share every
        // trajectory until the first poisoned round.
        roles_ = assign_roles(ids, cfg_.attack.attacker_fraction,
                              cfg_.channel.unreliable_fraction, cfg_.channel.drop_prob,
                              labeled_seed(cfg_.master_seed, "roles"));
        channel_.comm_range = cfg_.mobility.comm_range;
        channel_.seed = labeled_seed(cfg_.master_seed, "channel");
        for (int u : roles_.unreliable) channel_.drop_prob[u] = roles_.drop_prob;

        auto layout = make_mlp_layout(dataset_.n_features, cfg_.model.hidden_units,
                                      dataset_.n_classes);
        global_model_ = init_model(layout, labeled_seed(cfg_.master_seed, "model-init"));
    }

    void set_trace(TraceSinks sinks) { trace_ = sinks; }

    int current_round() const { return round_; }
    const Dataset& dataset() const { return dataset_; }
    const RoleMap& roles() const { return roles_; }
    const ParamVector& global_model() const { return global_model_; }
    const std::map<int, ReliabilityRecord>& records() const { return records_; }
    const std::vector<VehicleState>& vehicles() const { return vehicles_; }
    const ClusterAssignment& assignment() const { return assignment_; }
    const std::vector<double>& accuracy_series() const { return accuracy_series_; }
    const ClientData& client_data(int id) const { return clients_.at(id); }

    RoundMetrics run_round() {
        int r = ++round_;
        RoundMetrics m;
        m.round = r;

        advance_mobility(r);
        Adjacency adj = neighbors(vehicles_, channel_, cfg_.mobility.track_length);
        update_clusters(r, adj, m);

        if (cfg_.topology == TopologyArm::Cbhfl)
            cbhfl_round(r, adj, m);
        else
            no_clustering_round(r, m);

        m.epc_accuracy = evaluate(global_model_, dataset_, Split::Test);
        accuracy_series_.push_back(m.epc_accuracy);
        if (cfg_.topology == TopologyArm::Cbhfl)
            for (const auto& [ch, model] : cluster_models_)
                m.cluster_accuracy[ch] = evaluate(model, dataset_, Split::Test);
        for (const auto& [id, rec] : records_)
            if (rec.block_flag) ++m.blocked;

        write_traces(r, m);
        return m;
    }

    std::vector<RoundMetrics> run_all() {
        std::vector<RoundMetrics> out;
        out.reserve(cfg_.max_rounds);
        for (int i = 0; i < cfg_.max_rounds; ++i) out.push_back(run_round());
        return out;
    }

private:
    std::map<int, VehicleState> states_by_id() const {
        std::map<int, VehicleState> by_id;
        for (const auto& v : vehicles_) by_id[v.id] = v;
        return by_id;
    }

    void advance_mobility(int r) {
        Rng arrival_rng(labeled_seed(cfg_.master_seed, "arrivals", r));
        std::size_t truncated = 0;
        auto fresh = spawn_arrivals(cfg_.mobility.arrival_rate, r, vehicles_.size(),
                                    cfg_.mobility.n_vehicles, cfg_.mobility.track_length,
                                    arrival_rng, &truncated);
        for (auto& v : fresh) vehicles_.push_back(v);
        (void)truncated;
        Rng step_rng(labeled_seed(cfg_.master_seed, "mobility", r));
        step_mobility(vehicles_, cfg_.mobility.dt, cfg_.mobility.track_length,
                      cfg_.mobility.speed_jitter_std, step_rng);
    }

    void update_clusters(int r, const Adjacency& adj, RoundMetrics& m) {
        if (cfg_.topology == TopologyArm::NoClustering) {
            std::vector<int> ids;
            for (const auto& v : vehicles_) ids.push_back(v.id);
            assignment_ = no_clustering_topology(ids);
            return;
        }
        auto by_id = states_by_id();
        std::map<int, HelloPacket> hellos;
        for (const auto& v : vehicles_) {
            ClusterRole state = assignment_.role_of(v.id);
            int connector = state == ClusterRole::Member ? assignment_.head_of.at(v.id)
                            : state == ClusterRole::Head ? v.id
                                                         : -1;
            hellos[v.id] = make_hello(v, adj.at(v.id), by_id, state, connector,
                                      hello_similarity(v.id));
        }
        std::map<int, SuitabilityScore> scores;
        for (const auto& v : vehicles_)
            scores[v.id] =
                suitability(v.id, adj.at(v.id), by_id, hellos, cfg_.clustering.alpha);
        std::set<int> blocked_now;
        for (const auto& [id, rec] : records_)
            if (rec.block_flag) blocked_now.insert(id);
        auto [next, churn] = maintain_clusters(assignment_, adj, scores, r, &blocked_now);
        assignment_ = std::move(next);
        m.churn = std::move(churn);
    }

    // cos(current local params, previous local params); 0 until a vehicle
    // has trained twice.
    double hello_similarity(int id) const {
        auto it = local_history_.find(id);
        if (it == local_history_.end() || !it->second.prev.has_value()) return 0.0;
        return cosine_similarity(it->second.curr, *it->second.prev).value_or(0.0);
    }

    ParamVector with_values(std::vector<double> vals) const {
        ParamVector p = global_model_;
        p.values = std::move(vals);
        return p;
    }

    // Mirrors the selection step inside the vetting round so the harness
    // trains exactly the clients that will be examined.
    std::vector<int> preview_selection(const std::vector<int>& population) const {
        std::vector<ReliabilityRecord> snapshot;
        snapshot.reserve(population.size());
        for (int id : population) {
            ReliabilityRecord rec;
            auto it = records_.find(id);
            if (it != records_.end())
                rec = it->second;
            else
                rec.vehicle_id = id;
            reliability_score(rec, cfg_.security);
            snapshot.push_back(std::move(rec));
        }
        return select_clients(snapshot, cfg_.security);
    }

    bool would_skip(int id) const {
        auto it = records_.find(id);
        if (it == records_.end()) return false;
        return it->second.block_flag && it->second.block_duration < cfg_.security.unblock_time;
    }

    std::uint64_t msg_seq(int round, int vehicle, int link) const {
        return static_cast<std::uint64_t>(round) * 1000003ULL +
               static_cast<std::uint64_t>(vehicle + 1) * 2ULL +
               static_cast<std::uint64_t>(link);
    }

    struct TrainOutcome {
        std::map<int, std::vector<double>> delivered;  // wire updates that arrived
        std::map<int, std::size_t> weights;            // sample counts per trainee
    };

    // Local SGD for each trainee, poisoning on the wire for active
    // attackers, then the lossy uplink.
    TrainOutcome train_and_transmit(int r, const std::vector<int>& trainees,
                                    const ParamVector& base, bool v2v,
                                    const Adjacency* adj, int receiver) {
        TrainOutcome out;
        std::vector<int> ordered = trainees;
        std::sort(ordered.begin(), ordered.end());
        for (int id : ordered) {
            const auto& data = clients_.at(id);
            auto res = local_train(base, dataset_, data, cfg_.training.lr,
                                   cfg_.training.epochs, cfg_.training.batch_size,
                                   labeled_seed(cfg_.master_seed, "train", r, id), r);
            if (!res.has_value()) continue;  // no data: a missed round
            auto& hist = local_history_[id];
            hist.prev = std::move(hist.curr_opt());
            hist.curr = res->new_params.values;
            hist.has_curr = true;

            std::vector<double> wire = res->update.values;
            if (cfg_.attack.enabled && roles_.is_attacker(id) &&
                attack_active(cfg_.attack.policy, r)) {
                Rng noise_rng(labeled_seed(cfg_.master_seed, "attack", r, id));
                wire = poison(wire, cfg_.attack.policy, noise_rng);
            }
            bool ok = v2v ? transmit_v2v(channel_, *adj, id, receiver, msg_seq(r, id, 0))
                          : transmit_uplink(channel_, id, msg_seq(r, id, 0));
            if (ok) {
                out.delivered[id] = std::move(wire);
                out.weights[id] = cfg_.training.uniform_weights ? 1 : data.indices.size();
            }
        }
        return out;
    }

    void tally(RoundMetrics& m, int evaluator, const SecurityRoundResult& res) {
        auto& c = m.cluster_counts[evaluator];
        for (const auto& e : res.events) {
            if (e.kind == "selected") ++c[0];
            if (e.kind == "flag_set") ++c[2];
        }
        c[1] += static_cast<int>(res.accepted.size());
        m.events.insert(m.events.end(), res.events.begin(), res.events.end());
    }

    void finish_counts(RoundMetrics& m) {
        m.selected = m.accepted = m.flagged = 0;
        for (const auto& [eval, c] : m.cluster_counts) {
            m.selected += c[0];
            m.accepted += c[1];
            m.flagged += c[2];
        }
    }

    void cbhfl_round(int r, const Adjacency& adj, RoundMetrics& m) {
        bool epc_round_now = (r % cfg_.training.epc_period) == 0;

        for (const auto& [ch, members] : assignment_.members) {
            if (!cluster_models_.count(ch)) cluster_models_[ch] = global_model_;
            const ParamVector base = cluster_models_.at(ch);

            std::vector<int> trainees;
            if (cfg_.defense == DefenseArm::Proposed) {
                for (int id : preview_selection(members))
                    if (!would_skip(id)) trainees.push_back(id);
            } else {
                trainees = members;
            }
            auto tx = train_and_transmit(r, trainees, base, /*v2v=*/true, &adj, ch);

            std::vector<int> accepted;
            if (cfg_.defense == DefenseArm::Proposed) {
                AccuracyFn acc = [&](int, const std::vector<double>& delta) {
                    ParamVector p = base;
                    for (std::size_t i = 0; i < p.values.size(); ++i)
                        p.values[i] += delta[i];
                    return evaluate(p, dataset_, Split::Validation);
                };
                auto res = ch_round(records_, members, tx.delivered, acc, r,
                                    cfg_.security, ch);
                accepted = res.accepted;
                tally(m, ch, res);
            } else {
                for (const auto& [id, _] : tx.delivered) accepted.push_back(id);
                auto& c = m.cluster_counts[ch];
                c[0] += static_cast<int>(members.size());
                c[1] += static_cast<int>(accepted.size());
            }

            std::vector<std::pair<ParamVector, double>> contribs;
            std::size_t wsum = 0;
            for (int id : accepted) {
                ParamVector p = base;
                const auto& delta = tx.delivered.at(id);
                for (std::size_t i = 0; i < p.values.size(); ++i)
                    p.values[i] += delta[i];
                contribs.emplace_back(std::move(p),
                                      static_cast<double>(tx.weights.at(id)));
                wsum += tx.weights.at(id);
            }
            // The CH is a vehicle with data of its own: it trains on the
            // cluster model and folds its update into the aggregate. There
            // is no wire between the CH and itself, so its own update is
            // never poisoned or dropped; the EPC vets the aggregate it
            // forwards.
            auto own = local_train(base, dataset_, clients_.at(ch), cfg_.training.lr,
                                   cfg_.training.epochs, cfg_.training.batch_size,
                                   labeled_seed(cfg_.master_seed, "train", r, ch), r);
            if (own.has_value()) {
                auto& hist = local_history_[ch];
                hist.prev = hist.curr_opt();
                hist.curr = own->new_params.values;
                hist.has_curr = true;
                double w = cfg_.training.uniform_weights
                               ? 1.0
                               : static_cast<double>(clients_.at(ch).indices.size());
                contribs.emplace_back(std::move(own->new_params), w);
                wsum += static_cast<std::size_t>(w);
            }

            if (!contribs.empty()) {
                cluster_models_[ch] = fedavg(contribs);
                cluster_pending_weight_[ch] += static_cast<double>(wsum);
            }
        }

        if (!epc_round_now) {
            finish_counts(m);
            return;
        }

        // CH -> EPC forwarding; only clusters holding fresh data report.
        std::vector<int> ch_ids = assignment_.heads();
        std::map<int, std::vector<double>> delivered_models;
        std::map<int, double> model_weights;
        for (int ch : ch_ids) {
            if (cluster_pending_weight_[ch] <= 0.0) continue;
            std::vector<double> wire = cluster_models_.at(ch).values;
            if (cfg_.attack.enabled && roles_.is_attacker(ch) &&
                attack_active(cfg_.attack.policy, r)) {
                Rng noise_rng(labeled_seed(cfg_.master_seed, "attack-ch", r, ch));
                wire = poison(wire, cfg_.attack.policy, noise_rng);
            }
            if (transmit_uplink(channel_, ch, msg_seq(r, ch, 1))) {
                delivered_models[ch] = std::move(wire);
                model_weights[ch] = cluster_pending_weight_[ch];
            }
        }

        std::vector<int> accepted_chs;
        if (cfg_.defense == DefenseArm::Proposed) {
            AccuracyFn acc = [&](int, const std::vector<double>& vals) {
                return evaluate(with_values(vals), dataset_, Split::Validation);
            };
            auto res = epc_round(records_, ch_ids, delivered_models, acc, r,
                                 cfg_.security, &global_model_.values);
            accepted_chs = res.accepted;
            tally(m, kEpcId, res);
        } else {
            for (const auto& [ch, _] : delivered_models) accepted_chs.push_back(ch);
            auto& c = m.cluster_counts[kEpcId];
            c[0] += static_cast<int>(ch_ids.size());
            c[1] += static_cast<int>(accepted_chs.size());
        }

        if (!accepted_chs.empty()) {
            std::vector<std::pair<ParamVector, double>> contribs;
            for (int ch : accepted_chs)
                contribs.emplace_back(with_values(delivered_models.at(ch)),
                                      model_weights.at(ch));
            global_model_ = fedavg(contribs);
        }

        // broadcast: every cluster restarts from the latest global model
        for (int ch : ch_ids) {
            cluster_models_[ch] = global_model_;
            cluster_pending_weight_[ch] = 0.0;
        }
        finish_counts(m);
    }

    void no_clustering_round(int r, RoundMetrics& m) {
        const auto& population = assignment_.members.at(kEpcId);
        std::vector<int> trainees;
        if (cfg_.defense == DefenseArm::Proposed) {
            for (int id : preview_selection(population))
                if (!would_skip(id)) trainees.push_back(id);
        } else {
            trainees = population;
        }
        auto tx = train_and_transmit(r, trainees, global_model_, /*v2v=*/false, nullptr,
                                     kEpcId);

        std::vector<int> accepted;
        if (cfg_.defense == DefenseArm::Proposed) {
            AccuracyFn acc = [&](int, const std::vector<double>& delta) {
                ParamVector p = global_model_;
                for (std::size_t i = 0; i < p.values.size(); ++i) p.values[i] += delta[i];
                return evaluate(p, dataset_, Split::Validation);
            };
            auto res = ch_round(records_, population, tx.delivered, acc, r, cfg_.security,
                                kEpcId);
            accepted = res.accepted;
            tally(m, kEpcId, res);
        } else if (cfg_.defense == DefenseArm::CosDefense) {
            auto [kept, excluded] =
                cosdefense_filter(global_model_, tx.delivered,
                                  CosDefenseConfig{cfg_.cosdefense.deviation_multiplier});
            accepted = kept;
            auto& c = m.cluster_counts[kEpcId];
            c[0] += static_cast<int>(tx.delivered.size());
            c[1] += static_cast<int>(kept.size());
            c[2] += static_cast<int>(excluded.size());
            for (int id : excluded)
                m.events.push_back({r, "cosdefense", kEpcId, id, "exclude", 0.0});
        } else {
            for (const auto& [id, _] : tx.delivered) accepted.push_back(id);
            auto& c = m.cluster_counts[kEpcId];
            c[0] += static_cast<int>(population.size());
            c[1] += static_cast<int>(accepted.size());
        }

        if (!accepted.empty()) {
            std::vector<std::pair<ParamVector, double>> contribs;
            for (int id : accepted) {
                ParamVector p = global_model_;
                const auto& delta = tx.delivered.at(id);
                for (std::size_t i = 0; i < p.values.size(); ++i)
                    p.values[i] += delta[i];
                contribs.emplace_back(std::move(p), static_cast<double>(tx.weights.at(id)));
            }
            global_model_ = fedavg(contribs);
        }
        finish_counts(m);
    }

    void write_traces(int r, const RoundMetrics& m) {
        if (trace_.mobility) {
            for (const auto& v : vehicles_)
                *trace_.mobility << r << "," << v.id << "," << fmt_double(v.position)
                                 << "," << v.lane << "," << fmt_double(v.speed) << "\n";
        }
        if (trace_.clusters) {
            for (const auto& [id, role] : assignment_.role) {
                int head = role == ClusterRole::Member ? assignment_.head_of.at(id)
                           : role == ClusterRole::Head ? id
                                                       : -1;
                *trace_.clusters << r << "," << id << "," << role_name(role) << ","
                                 << head << "\n";
            }
        }
        if (trace_.security) {
            for (const auto& e : m.events)
                *trace_.security << e.round << "," << e.tier << "," << e.evaluator << ","
                                 << e.vehicle << "," << e.kind << ","
                                 << fmt_double(e.value) << "\n";
        }
    }

    struct LocalHistory {
        std::optional<std::vector<double>> prev;
        std::vector<double> curr;
        bool has_curr = false;

        std::optional<std::vector<double>> curr_opt() const {
            if (!has_curr) return std::nullopt;
            return curr;
        }
    };

    ExperimentConfig cfg_;
    Dataset dataset_;
    std::vector<ClientData> clients_;
    RoleMap roles_;
    ChannelModel channel_;
    ParamVector global_model_;
    std::vector<VehicleState> vehicles_;
    ClusterAssignment assignment_;
    std::map<int, ReliabilityRecord> records_;
    std::map<int, ParamVector> cluster_models_;
    std::map<int, double> cluster_pending_weight_;
    std::map<int, LocalHistory> local_history_;
    std::vector<double> accuracy_series_;
    TraceSinks trace_;
    int round_ = 0;
};

}  // namespace shfl

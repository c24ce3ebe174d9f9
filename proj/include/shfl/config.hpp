#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "shfl/adversary.hpp"
#include "shfl/dataset.hpp"
#include "shfl/security.hpp"

namespace shfl {

enum class TopologyArm { Cbhfl, NoClustering };
enum class DefenseArm { Proposed, CosDefense, None };

inline const char* topology_name(TopologyArm t) {
    return t == TopologyArm::Cbhfl ? "cbhfl" : "no_clustering";
}

inline const char* defense_name(DefenseArm d) {
    switch (d) {
        case DefenseArm::Proposed: return "proposed";
        case DefenseArm::CosDefense: return "cosdefense";
        case DefenseArm::None: return "none";
    }
    return "?";
}

struct DatasetParams {
    std::size_t n_classes = 10;
    std::size_t n_features = 12;
    std::size_t n_samples = 2000;
    double class_separation = 5.0;
    std::string file;  // optional import; overrides the synthetic generator
};

struct ModelParams {
    std::size_t hidden_units = 16;
};

struct TrainingParams {
    double lr = 0.15;
    std::size_t epochs = 4;
    std::size_t batch_size = 16;
    std::size_t shards_per_client = 2;
    bool uniform_weights = false;  // default: weight by client sample count
    int epc_period = 1;            // EPC aggregation every round
};

struct MobilityParams {
    std::size_t n_vehicles = 25;   // population cap
    double arrival_rate = 8.0;     // vehicles per round
    double track_length = 1000.0;  // closed two-lane loop; at 25 vehicles and
                                   // 100 m range this keeps ~5 neighbors each
    double comm_range = 100.0;
    double speed_jitter_std = 0.5;
    double dt = 1.0;  // one round per step
};

struct ChannelParams {
    double unreliable_fraction = 0.5;
    double drop_prob = 0.4;
};

struct ClusteringParams {
    double alpha = 0.5;  // speed vs similarity mix
};

struct AttackParams {
    bool enabled = false;
    AttackPolicy policy;
    double attacker_fraction = 0.2;
};

struct CosDefenseParams {
    double deviation_multiplier = 1.0;
};

struct ExperimentConfig {
    TopologyArm topology = TopologyArm::Cbhfl;
    DefenseArm defense = DefenseArm::Proposed;
    int max_rounds = 100;
    std::uint64_t master_seed = 7;
    std::vector<double> epsilons = {0.1, 0.01};
    bool verbose = false;

    DatasetParams dataset;
    ModelParams model;
    TrainingParams training;
    MobilityParams mobility;
    ChannelParams channel;
    ClusteringParams clustering;
    SecurityConfig security;
    AttackParams attack;
    CosDefenseParams cosdefense;

    // grid sweep axes
    std::vector<double> grid_means = {0.0, 1.0, 2.0};
    std::vector<double> grid_vars = {0.1, 0.2, 0.3};
};

inline void validate(const ExperimentConfig& c) {
    if (c.max_rounds < 3) throw ConfigError("experiment.max_rounds", "must be >= 3");
    if (c.epsilons.empty()) throw ConfigError("experiment.epsilons", "need at least one value");
    for (double e : c.epsilons)
        if (e <= 0.0) throw ConfigError("experiment.epsilons", "must be > 0");
    if (c.topology == TopologyArm::Cbhfl && c.defense == DefenseArm::CosDefense)
        throw ConfigError("experiment.defense",
                          "cosdefense runs only with topology=no_clustering");
    if (c.security.selected_client_percentage <= 0.0 ||
        c.security.selected_client_percentage > 1.0)
        throw ConfigError("security.selected_client_percentage", "must be in (0, 1]");
    if (c.security.unblock_time < 0)
        throw ConfigError("security.unblock_time", "must be >= 0");
    if (c.security.accuracy_weight < 0 || c.security.frequency_weight < 0 ||
        c.security.anomaly_weight < 0)
        throw ConfigError("security.weights", "must be nonnegative");
    if (c.security.accuracy_weight == 0 && c.security.frequency_weight == 0 &&
        c.security.anomaly_weight == 0)
        throw ConfigError("security.weights", "at least one weight must be positive");
    if (c.mobility.n_vehicles < 1) throw ConfigError("mobility.n_vehicles", "must be >= 1");
    if (c.mobility.comm_range <= 0) throw ConfigError("mobility.comm_range", "must be > 0");
    if (c.mobility.track_length <= 0) throw ConfigError("mobility.track_length", "must be > 0");
    if (c.mobility.arrival_rate < 0) throw ConfigError("mobility.arrival_rate", "must be >= 0");
    if (c.channel.drop_prob < 0 || c.channel.drop_prob >= 1)
        throw ConfigError("channel.drop_prob", "must be in [0, 1)");
    if (c.clustering.alpha < 0 || c.clustering.alpha > 1)
        throw ConfigError("clustering.alpha", "must be in [0, 1]");
    if (c.attack.enabled && c.attack.policy.noise_var < 0)
        throw ConfigError("attack.noise_var", "must be >= 0");
    if (c.attack.enabled && c.attack.policy.start_round < 1)
        throw ConfigError("attack.start_round", "must be >= 1");
    if (c.training.lr <= 0) throw ConfigError("training.lr", "must be > 0");
    if (c.training.epochs < 1) throw ConfigError("training.epochs", "must be >= 1");
    if (c.training.batch_size < 1) throw ConfigError("training.batch_size", "must be >= 1");
    if (c.training.epc_period < 1) throw ConfigError("training.epc_period", "must be >= 1");
    if (c.cosdefense.deviation_multiplier < 0)
        throw ConfigError("baselines.cosdefense_deviation_multiplier", "must be >= 0");
}

namespace detail {

inline std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<double> parse_double_list(const std::string& raw,
                                             const std::string& field) {
    std::vector<double> out;
    std::string piece;
    std::istringstream ss(raw);
    while (std::getline(ss, piece, ',')) {
        piece = trim(piece);
        if (piece.empty()) continue;
        try {
            std::size_t used = 0;
            double v = std::stod(piece, &used);
            if (used != piece.size()) throw std::invalid_argument("");
            out.push_back(v);
        } catch (...) {
            throw ConfigError(field, "not a number: '" + piece + "'");
        }
    }
    return out;
}

inline double parse_double(const std::string& raw, const std::string& field) {
    auto v = parse_double_list(raw, field);
    if (v.size() != 1) throw ConfigError(field, "expected a single number");
    return v[0];
}

inline long parse_int(const std::string& raw, const std::string& field) {
    double d = parse_double(raw, field);
    long l = static_cast<long>(d);
    if (static_cast<double>(l) != d) throw ConfigError(field, "expected an integer");
    return l;
}

inline bool parse_bool(const std::string& raw, const std::string& field) {
    if (raw == "true" || raw == "1" || raw == "yes" || raw == "on") return true;
    if (raw == "false" || raw == "0" || raw == "no" || raw == "off") return false;
    throw ConfigError(field, "expected true/false");
}

}  // namespace detail

// Apply one "section.key = value" setting. Shared by the INI reader and
// CLI-style overrides.
inline void apply_setting(ExperimentConfig& c, const std::string& key,
                          const std::string& value) {
    using detail::parse_bool;
    using detail::parse_double;
    using detail::parse_double_list;
    using detail::parse_int;
    const std::string& k = key;
    const std::string& v = value;

    if (k == "experiment.topology") {
        if (v == "cbhfl") c.topology = TopologyArm::Cbhfl;
        else if (v == "no_clustering") c.topology = TopologyArm::NoClustering;
        else throw ConfigError(k, "expected cbhfl or no_clustering");
    } else if (k == "experiment.defense") {
        if (v == "proposed") c.defense = DefenseArm::Proposed;
        else if (v == "cosdefense") c.defense = DefenseArm::CosDefense;
        else if (v == "none") c.defense = DefenseArm::None;
        else throw ConfigError(k, "expected proposed, cosdefense or none");
    } else if (k == "experiment.max_rounds") {
        c.max_rounds = static_cast<int>(parse_int(v, k));
    } else if (k == "experiment.master_seed") {
        c.master_seed = static_cast<std::uint64_t>(parse_int(v, k));
    } else if (k == "experiment.epsilons") {
        c.epsilons = parse_double_list(v, k);
    } else if (k == "experiment.verbose") {
        c.verbose = parse_bool(v, k);
    } else if (k == "dataset.n_classes") {
        c.dataset.n_classes = static_cast<std::size_t>(parse_int(v, k));
    } else if (k == "dataset.n_features") {
        c.dataset.n_features = static_cast<std::size_t>(parse_int(v, k));
    } else if (k == "dataset.n_samples") {
        c.dataset.n_samples = static_cast<std::size_t>(parse_int(v, k));
    } else if (k == "dataset.class_separation") {
        c.dataset.class_separation = parse_double(v, k);
    } else if (k == "dataset.file") {
        c.dataset.file = v;
    } else if (k == "model.hidden_units") {
        c.model.hidden_units = static_cast<std::size_t>(parse_int(v, k));
    } else if (k == "training.lr") {
        c.training.lr = parse_double(v, k);
    } else if (k == "training.epochs") {
        c.training.epochs = static_cast<std::size_t>(parse_int(v, k));
    } else if (k == "training.batch_size") {
        c.training.batch_size = static_cast<std::size_t>(parse_int(v, k));
    } else if (k == "training.shards_per_client") {
        c.training.shards_per_client = static_cast<std::size_t>(parse_int(v, k));
    } else if (k == "training.uniform_weights") {
        c.training.uniform_weights = parse_bool(v, k);
    } else if (k == "training.epc_period") {
        c.training.epc_period = static_cast<int>(parse_int(v, k));
    } else if (k == "mobility.n_vehicles") {
        c.mobility.n_vehicles = static_cast<std::size_t>(parse_int(v, k));
    } else if (k == "mobility.arrival_rate") {
        c.mobility.arrival_rate = parse_double(v, k);
    } else if (k == "mobility.track_length") {
        c.mobility.track_length = parse_double(v, k);
    } else if (k == "mobility.comm_range") {
        c.mobility.comm_range = parse_double(v, k);
    } else if (k == "mobility.speed_jitter_std") {
        c.mobility.speed_jitter_std = parse_double(v, k);
    } else if (k == "mobility.dt") {
        c.mobility.dt = parse_double(v, k);
    } else if (k == "channel.unreliable_fraction") {
        c.channel.unreliable_fraction = parse_double(v, k);
    } else if (k == "channel.drop_prob") {
        c.channel.drop_prob = parse_double(v, k);
    } else if (k == "clustering.alpha") {
        c.clustering.alpha = parse_double(v, k);
    } else if (k == "security.accuracy_weight") {
        c.security.accuracy_weight = parse_double(v, k);
    } else if (k == "security.frequency_weight") {
        c.security.frequency_weight = parse_double(v, k);
    } else if (k == "security.anomaly_weight") {
        c.security.anomaly_weight = parse_double(v, k);
    } else if (k == "security.selected_client_percentage") {
        c.security.selected_client_percentage = parse_double(v, k);
    } else if (k == "security.unblock_time") {
        c.security.unblock_time = static_cast<int>(parse_int(v, k));
    } else if (k == "security.similarity_threshold") {
        c.security.similarity_threshold = parse_double(v, k);
    } else if (k == "attack.enabled") {
        c.attack.enabled = parse_bool(v, k);
    } else if (k == "attack.kind") {
        if (v == "single_round") c.attack.policy.kind = AttackPolicy::Kind::SingleRound;
        else if (v == "continuous") c.attack.policy.kind = AttackPolicy::Kind::Continuous;
        else throw ConfigError(k, "expected single_round or continuous");
    } else if (k == "attack.start_round") {
        c.attack.policy.start_round = static_cast<int>(parse_int(v, k));
    } else if (k == "attack.noise_mean") {
        c.attack.policy.noise_mean = parse_double(v, k);
    } else if (k == "attack.noise_var") {
        c.attack.policy.noise_var = parse_double(v, k);
    } else if (k == "attack.attacker_fraction") {
        c.attack.attacker_fraction = parse_double(v, k);
    } else if (k == "baselines.cosdefense_deviation_multiplier") {
        c.cosdefense.deviation_multiplier = parse_double(v, k);
    } else if (k == "grid.means") {
        c.grid_means = parse_double_list(v, k);
    } else if (k == "grid.vars") {
        c.grid_vars = parse_double_list(v, k);
    } else {
        throw ConfigError(k, "unknown configuration key");
    }
}

// INI-style text: [section] headers, key = value lines, '#' comments.
inline ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig c;
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config", "line " + std::to_string(lineno) +
                                                ": malformed section header");
            section = detail::trim(line.substr(1, line.size() - 2));
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config",
                              "line " + std::to_string(lineno) + ": expected key = value");
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (section.empty())
            throw ConfigError(key, "key appears before any [section] header");
        apply_setting(c, section + "." + key, value);
    }
    validate(c);
    return c;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config", "cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

// Deterministic number formatting for all emitted text (round-trippable).
inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

inline std::string fmt_list(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += fmt_double(v[i]);
    }
    return out;
}

// Full resolved configuration, re-parseable as a config file.
inline std::string config_to_ini(const ExperimentConfig& c) {
    std::ostringstream o;
    o << "[experiment]\n";
    o << "topology = " << topology_name(c.topology) << "\n";
    o << "defense = " << defense_name(c.defense) << "\n";
    o << "max_rounds = " << c.max_rounds << "\n";
    o << "master_seed = " << c.master_seed << "\n";
    o << "epsilons = " << fmt_list(c.epsilons) << "\n";
    o << "verbose = " << (c.verbose ? "true" : "false") << "\n";
    o << "\n[dataset]\n";
    o << "n_classes = " << c.dataset.n_classes << "\n";
    o << "n_features = " << c.dataset.n_features << "\n";
    o << "n_samples = " << c.dataset.n_samples << "\n";
    o << "class_separation = " << fmt_double(c.dataset.class_separation) << "\n";
    if (!c.dataset.file.empty()) o << "file = " << c.dataset.file << "\n";
    o << "\n[model]\n";
    o << "hidden_units = " << c.model.hidden_units << "\n";
    o << "\n[training]\n";
    o << "lr = " << fmt_double(c.training.lr) << "\n";
    o << "epochs = " << c.training.epochs << "\n";
    o << "batch_size = " << c.training.batch_size << "\n";
    o << "shards_per_client = " << c.training.shards_per_client << "\n";
    o << "uniform_weights = " << (c.training.uniform_weights ? "true" : "false") << "\n";
    o << "epc_period = " << c.training.epc_period << "\n";
    o << "\n[mobility]\n";
    o << "n_vehicles = " << c.mobility.n_vehicles << "\n";
    o << "arrival_rate = " << fmt_double(c.mobility.arrival_rate) << "\n";
    o << "track_length = " << fmt_double(c.mobility.track_length) << "\n";
    o << "comm_range = " << fmt_double(c.mobility.comm_range) << "\n";
    o << "speed_jitter_std = " << fmt_double(c.mobility.speed_jitter_std) << "\n";
    o << "dt = " << fmt_double(c.mobility.dt) << "\n";
    o << "\n[channel]\n";
    o << "unreliable_fraction = " << fmt_double(c.channel.unreliable_fraction) << "\n";
    o << "drop_prob = " << fmt_double(c.channel.drop_prob) << "\n";
    o << "\n[clustering]\n";
    o << "alpha = " << fmt_double(c.clustering.alpha) << "\n";
    o << "\n[security]\n";
    o << "accuracy_weight = " << fmt_double(c.security.accuracy_weight) << "\n";
    o << "frequency_weight = " << fmt_double(c.security.frequency_weight) << "\n";
    o << "anomaly_weight = " << fmt_double(c.security.anomaly_weight) << "\n";
    o << "selected_client_percentage = "
      << fmt_double(c.security.selected_client_percentage) << "\n";
    o << "unblock_time = " << c.security.unblock_time << "\n";
    o << "similarity_threshold = " << fmt_double(c.security.similarity_threshold) << "\n";
    o << "\n[attack]\n";
    o << "enabled = " << (c.attack.enabled ? "true" : "false") << "\n";
    o << "kind = "
      << (c.attack.policy.kind == AttackPolicy::Kind::SingleRound ? "single_round"
                                                                  : "continuous")
      << "\n";
    o << "start_round = " << c.attack.policy.start_round << "\n";
    o << "noise_mean = " << fmt_double(c.attack.policy.noise_mean) << "\n";
    o << "noise_var = " << fmt_double(c.attack.policy.noise_var) << "\n";
    o << "attacker_fraction = " << fmt_double(c.attack.attacker_fraction) << "\n";
    o << "\n[baselines]\n";
    o << "cosdefense_deviation_multiplier = "
      << fmt_double(c.cosdefense.deviation_multiplier) << "\n";
    o << "\n[grid]\n";
    o << "means = " << fmt_list(c.grid_means) << "\n";
    o << "vars = " << fmt_list(c.grid_vars) << "\n";
    return o.str();
}

}  // namespace shfl

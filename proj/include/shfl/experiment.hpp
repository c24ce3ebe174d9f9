#pragma once

#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "shfl/config.hpp"
#include "shfl/convergence.hpp"
#include "shfl/simulation.hpp"

namespace shfl {

// Canonical arm labels matching the four comparison columns.
inline std::string arm_name(const ExperimentConfig& c) {
    if (!c.attack.enabled) {
        return c.topology == TopologyArm::Cbhfl ? "cbhfl_no_attack"
                                                : "no_clustering_no_attack";
    }
    if (c.defense == DefenseArm::CosDefense) return "cosdefense";
    std::string t = topology_name(c.topology);
    return t + "_" + defense_name(c.defense);
}

struct SummaryRow {
    std::string arm;
    double noise_mean = 0.0;
    double noise_var = 0.0;
    double epsilon = 0.0;
    std::optional<int> converged_round;
};

struct RunOutput {
    std::string arm;
    double noise_mean = 0.0;
    double noise_var = 0.0;
    std::vector<RoundMetrics> rounds;
    std::vector<double> accuracy_series;
    std::vector<SummaryRow> summary;  // one row per configured epsilon
    std::string manifest;
};

inline std::string render_converged(const std::optional<int>& r) {
    return r.has_value() ? std::to_string(*r) : "inf";
}

inline std::string make_manifest(const ExperimentConfig& cfg, const RoleMap& roles) {
    std::ostringstream o;
    o << "# resolved configuration\n" << config_to_ini(cfg);
    o << "\n[roles]\n";
    o << "attackers =";
    for (int a : roles.attackers) o << " " << a;
    o << "\nunreliable =";
    for (int u : roles.unreliable) o << " " << u;
    o << "\ndrop_prob = " << fmt_double(roles.drop_prob) << "\n";
    o << "\n[seeds]\n";
    o << "dataset = " << labeled_seed(cfg.master_seed, "dataset") << "\n";
    o << "partition = " << labeled_seed(cfg.master_seed, "partition") << "\n";
    o << "model-init = " << labeled_seed(cfg.master_seed, "model-init") << "\n";
    o << "roles = " << labeled_seed(cfg.master_seed, "roles") << "\n";
    o << "channel = " << labeled_seed(cfg.master_seed, "channel") << "\n";
    return o.str();
}

// One full run: max_rounds rounds plus a convergence verdict per epsilon.
inline RunOutput run_experiment(const ExperimentConfig& cfg,
                                TraceSinks sinks = {}) {
    validate(cfg);
    Simulation sim(cfg);
    sim.set_trace(sinks);
    RunOutput out;
    out.arm = arm_name(cfg);
    out.noise_mean = cfg.attack.enabled ? cfg.attack.policy.noise_mean : 0.0;
    out.noise_var = cfg.attack.enabled ? cfg.attack.policy.noise_var : 0.0;
    out.rounds = sim.run_all();
    out.accuracy_series = sim.accuracy_series();
    for (double eps : cfg.epsilons) {
        auto conv = detect_convergence(out.accuracy_series, eps);
        out.summary.push_back(
            {out.arm, out.noise_mean, out.noise_var, eps, conv.converged_round});
    }
    out.manifest = make_manifest(cfg, sim.roles());
    return out;
}

// The four comparison arms for one attack-grid cell.
inline std::vector<ExperimentConfig> grid_cell_arms(const ExperimentConfig& base,
                                                    double noise_mean,
                                                    double noise_var) {
    std::vector<ExperimentConfig> arms;

    ExperimentConfig cos = base;
    cos.topology = TopologyArm::NoClustering;
    cos.defense = DefenseArm::CosDefense;
    cos.attack.enabled = true;
    cos.attack.policy.noise_mean = noise_mean;
    cos.attack.policy.noise_var = noise_var;
    arms.push_back(cos);

    ExperimentConfig ncp = cos;
    ncp.defense = DefenseArm::Proposed;
    arms.push_back(ncp);

    ExperimentConfig cbp = base;
    cbp.topology = TopologyArm::Cbhfl;
    cbp.defense = DefenseArm::Proposed;
    cbp.attack.enabled = true;
    cbp.attack.policy.noise_mean = noise_mean;
    cbp.attack.policy.noise_var = noise_var;
    arms.push_back(cbp);

    ExperimentConfig noatk = cbp;
    noatk.attack.enabled = false;
    arms.push_back(noatk);

    return arms;
}

struct GridOutput {
    std::vector<RunOutput> runs;         // cell-major: arms within mean x var
    std::vector<SummaryRow> summary;
    std::string manifest;                // base config + sweep axes
};

// Full sweep: every attack-grid cell crossed with the four comparison arms.
// The no-attack column is recomputed per cell so the output table is
// self-contained cell by cell.
inline GridOutput grid_run(const ExperimentConfig& base) {
    validate(base);
    GridOutput out;
    for (double mean : base.grid_means) {
        for (double var : base.grid_vars) {
            for (const auto& cfg : grid_cell_arms(base, mean, var)) {
                auto run = run_experiment(cfg);
                if (!cfg.attack.enabled) {
                    // keep the no-attack rows keyed to their table cell
                    run.noise_mean = mean;
                    run.noise_var = var;
                    for (auto& row : run.summary) {
                        row.noise_mean = mean;
                        row.noise_var = var;
                    }
                }
                out.summary.insert(out.summary.end(), run.summary.begin(),
                                   run.summary.end());
                out.runs.push_back(std::move(run));
            }
        }
    }
    out.manifest = "# grid sweep over means x vars, four arms per cell\n" +
                   config_to_ini(base);
    return out;
}

inline void write_rounds_header(std::ostream& o) {
    o << "arm,noise_mean,noise_var,round,epc_accuracy,selected,accepted,flagged,blocked\n";
}

inline void write_rounds_rows(std::ostream& o, const RunOutput& run) {
    for (const auto& m : run.rounds) {
        o << run.arm << "," << fmt_double(run.noise_mean) << ","
          << fmt_double(run.noise_var) << "," << m.round << ","
          << fmt_double(m.epc_accuracy) << "," << m.selected << "," << m.accepted << ","
          << m.flagged << "," << m.blocked << "\n";
    }
}

inline void write_summary_header(std::ostream& o) {
    o << "arm,noise_mean,noise_var,epsilon,converged_round\n";
}

inline void write_summary_rows(std::ostream& o, const std::vector<SummaryRow>& rows) {
    for (const auto& r : rows) {
        o << r.arm << "," << fmt_double(r.noise_mean) << "," << fmt_double(r.noise_var)
          << "," << fmt_double(r.epsilon) << "," << render_converged(r.converged_round)
          << "\n";
    }
}

inline std::vector<SummaryRow> parse_summary_csv(std::istream& in) {
    std::vector<SummaryRow> rows;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (first) {
            first = false;
            if (line.rfind("arm,", 0) == 0) continue;  // header
        }
        std::vector<std::string> f;
        std::string piece;
        std::istringstream ls(line);
        while (std::getline(ls, piece, ',')) f.push_back(piece);
        if (f.size() != 5) throw ConfigError("summary", "expected 5 columns: " + line);
        SummaryRow r;
        r.arm = f[0];
        r.noise_mean = std::stod(f[1]);
        r.noise_var = std::stod(f[2]);
        r.epsilon = std::stod(f[3]);
        if (f[4] != "inf") r.converged_round = std::stoi(f[4]);
        rows.push_back(r);
    }
    return rows;
}

// Per-cell arm ordering with unconverged cells treated as +infinity.
struct TrendCell {
    double noise_mean = 0.0;
    double noise_var = 0.0;
    double epsilon = 0.0;
    std::map<std::string, std::optional<int>> by_arm;
    bool comparable = false;  // proposed arm and at least one baseline present
    bool satisfied = false;   // cbhfl_proposed <= every baseline present
};

struct TrendReport {
    std::vector<TrendCell> cells;
    int violations = 0;
    int incomparable = 0;
    // per-arm mean over converged cells, plus unconverged count
    std::map<std::string, std::pair<double, int>> arm_means;
    std::map<std::string, int> arm_unconverged;
};

inline TrendReport compare_arms(const std::vector<SummaryRow>& rows) {
    TrendReport rep;
    std::map<std::tuple<double, double, double>, TrendCell> cells;
    for (const auto& r : rows) {
        auto key = std::make_tuple(r.noise_mean, r.noise_var, r.epsilon);
        auto& c = cells[key];
        c.noise_mean = r.noise_mean;
        c.noise_var = r.noise_var;
        c.epsilon = r.epsilon;
        c.by_arm[r.arm] = r.converged_round;
        if (r.converged_round.has_value()) {
            auto& [sum, n] = rep.arm_means[r.arm];
            sum += *r.converged_round;
            ++n;
        } else {
            rep.arm_unconverged[r.arm]++;
        }
    }
    auto as_inf = [](const std::optional<int>& v) {
        return v.has_value() ? static_cast<double>(*v)
                             : std::numeric_limits<double>::infinity();
    };
    for (auto& [key, c] : cells) {
        auto it = c.by_arm.find("cbhfl_proposed");
        std::vector<std::string> baselines = {"cosdefense", "no_clustering_proposed"};
        bool any_baseline = false;
        bool ok = true;
        if (it != c.by_arm.end()) {
            double mine = as_inf(it->second);
            for (const auto& b : baselines) {
                auto bit = c.by_arm.find(b);
                if (bit == c.by_arm.end()) continue;
                any_baseline = true;
                if (mine > as_inf(bit->second)) ok = false;
            }
        }
        c.comparable = it != c.by_arm.end() && any_baseline;
        c.satisfied = c.comparable && ok;
        if (c.comparable && !ok) ++rep.violations;
        if (!c.comparable) ++rep.incomparable;
        rep.cells.push_back(c);
    }
    return rep;
}

inline std::string render_trend_report(const TrendReport& rep) {
    std::ostringstream o;
    o << "cell (mean,var,epsilon) -> converged rounds per arm; '*' marks an "
         "ordering violation\n";
    for (const auto& c : rep.cells) {
        o << "mean=" << fmt_double(c.noise_mean) << " var=" << fmt_double(c.noise_var)
          << " eps=" << fmt_double(c.epsilon) << " :";
        for (const auto& [arm, v] : c.by_arm) o << " " << arm << "=" << render_converged(v);
        if (!c.comparable)
            o << "  [incomparable]";
        else if (!c.satisfied)
            o << "  *";
        o << "\n";
    }
    o << "violations: " << rep.violations << "\n";
    o << "incomparable cells: " << rep.incomparable << "\n";
    for (const auto& [arm, acc] : rep.arm_means) {
        double mean = acc.second > 0 ? acc.first / acc.second : 0.0;
        int unconv = rep.arm_unconverged.count(arm) ? rep.arm_unconverged.at(arm) : 0;
        o << arm << ": mean converged_round " << fmt_double(mean) << " over "
          << acc.second << " converged cells, " << unconv << " unconverged\n";
    }
    for (const auto& [arm, unconv] : rep.arm_unconverged) {
        if (!rep.arm_means.count(arm))
            o << arm << ": mean converged_round n/a over 0 converged cells, " << unconv
              << " unconverged\n";
    }
    return o.str();
}

}  // namespace shfl

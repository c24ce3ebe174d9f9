#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "shfl/rng.hpp"

namespace shfl {

// Raised for invalid user-facing parameters; carries the offending field name.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& msg)
        : std::runtime_error(field + ": " + msg), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

enum class Split { Train, Validation, Test };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Validation: return "validation";
        case Split::Test: return "test";
    }
    return "?";
}

struct Dataset {
    std::size_t n_features = 0;
    std::size_t n_classes = 0;
    std::vector<double> features;  // row-major, n_samples x n_features
    std::vector<int> labels;
    std::vector<Split> split;

    std::size_t n_samples() const { return labels.size(); }

    std::span<const double> sample(std::size_t i) const {
        return {features.data() + i * n_features, n_features};
    }

    std::vector<std::size_t> indices_of(Split s) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < split.size(); ++i)
            if (split[i] == s) out.push_back(i);
        return out;
    }
};

// Per-vehicle local data: indices into the owning dataset's train split.
struct ClientData {
    int vehicle_id = -1;
    std::vector<std::size_t> indices;
};

namespace detail {

// Stratified split with per-class minimums so that no split is empty.
inline void assign_splits(Dataset& ds, double train_frac, double val_frac, Rng& rng) {
    ds.split.assign(ds.n_samples(), Split::Train);
    for (std::size_t c = 0; c < ds.n_classes; ++c) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < ds.n_samples(); ++i)
            if (ds.labels[i] == static_cast<int>(c)) idx.push_back(i);
        rng.shuffle(idx);
        std::size_t m = idx.size();
        auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(val_frac * m)));
        auto n_test = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::floor((1.0 - train_frac - val_frac) * m)));
        if (n_val + n_test >= m)
            throw ConfigError("n_samples", "too few samples per class for a 3-way split");
        std::size_t n_train = m - n_val - n_test;
        for (std::size_t k = 0; k < m; ++k) {
            Split s = k < n_train              ? Split::Train
                      : k < n_train + n_val    ? Split::Validation
                                               : Split::Test;
            ds.split[idx[k]] = s;
        }
    }
}

// Zero-mean, unit-variance per feature; keeps gradients well-scaled
// regardless of where the class centers landed.
inline void standardize_features(Dataset& ds) {
    std::size_t n = ds.n_samples();
    for (std::size_t j = 0; j < ds.n_features; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) m += ds.features[i * ds.n_features + j];
        m /= static_cast<double>(n);
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double d = ds.features[i * ds.n_features + j] - m;
            v += d * d;
        }
        double sd = std::sqrt(v / static_cast<double>(n));
        if (sd == 0.0) sd = 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            double& x = ds.features[i * ds.n_features + j];
            x = (x - m) / sd;
        }
    }
}

}  // namespace detail

// Synthetic classification task: one isotropic Gaussian cluster per class,
// centers pairwise at least class_separation apart, balanced labels,
// stratified 70/15/15 split.
inline Dataset gen_dataset(std::size_t n_classes, std::size_t n_features,
                           std::size_t n_samples, double class_separation,
                           std::uint64_t seed) {
    if (n_classes < 2) throw ConfigError("n_classes", "must be >= 2");
    if (n_features < 1) throw ConfigError("n_features", "must be >= 1");
    if (n_samples < 10 * n_classes)
        throw ConfigError("n_samples", "must be >= 10 * n_classes");
    if (class_separation <= 0.0)
        throw ConfigError("class_separation", "must be > 0");

    Rng rng(seed);
    std::vector<std::vector<double>> centers(n_classes,
                                             std::vector<double>(n_features, 0.0));
    if (n_features >= n_classes) {
        // Regular simplex via scaled basis vectors: every pair of centers
        // sits at exactly class_separation, so the parameter is a sharp
        // hardness knob.
        double a = class_separation / std::sqrt(2.0);
        for (std::size_t c = 0; c < n_classes; ++c) centers[c][c] = a;
    } else {
        // Rejection-sample centers inside a box just big enough for quick
        // placement; pairwise distances stay >= class_separation.
        double side = class_separation *
                      std::max(1.5, 1.2 * std::pow(static_cast<double>(n_classes),
                                                   1.0 / static_cast<double>(n_features)));
        for (std::size_t c = 0; c < n_classes; ++c) {
            for (int attempt = 0;; ++attempt) {
                if (attempt > 10000)
                    throw ConfigError("class_separation",
                                      "cannot place centers this far apart");
                std::vector<double> cand(n_features);
                for (auto& x : cand) x = rng.uniform(0.0, side);
                bool ok = true;
                for (const auto& prev : centers) {
                    if (&prev == &centers[c]) break;
                    double d2 = 0.0;
                    for (std::size_t j = 0; j < n_features; ++j)
                        d2 += (cand[j] - prev[j]) * (cand[j] - prev[j]);
                    if (d2 < class_separation * class_separation) { ok = false; break; }
                }
                if (ok) { centers[c] = std::move(cand); break; }
            }
        }
    }

    Dataset ds;
    ds.n_features = n_features;
    ds.n_classes = n_classes;
    ds.features.resize(n_samples * n_features);
    ds.labels.resize(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        int label = static_cast<int>(i % n_classes);
        ds.labels[i] = label;
        for (std::size_t j = 0; j < n_features; ++j)
            ds.features[i * n_features + j] = centers[label][j] + rng.normal(0.0, 1.0);
    }
    detail::standardize_features(ds);
    detail::assign_splits(ds, 0.70, 0.15, rng);
    return ds;
}

// Label-shard partition: train samples sorted by label, cut into
// n_clients * shards_per_client contiguous shards, shards dealt out at
// random. Every train sample lands with exactly one client.
inline std::vector<ClientData> partition_non_iid(const Dataset& ds,
                                                 std::size_t n_clients,
                                                 std::size_t shards_per_client,
                                                 std::uint64_t seed) {
    if (n_clients < 1) throw ConfigError("n_clients", "must be >= 1");
    if (shards_per_client < 1) throw ConfigError("shards_per_client", "must be >= 1");
    std::vector<std::size_t> train = ds.indices_of(Split::Train);
    std::size_t n_shards = n_clients * shards_per_client;
    if (n_shards > train.size())
        throw ConfigError("shards_per_client",
                          "n_clients * shards_per_client exceeds train shard supply");

    std::stable_sort(train.begin(), train.end(), [&](std::size_t a, std::size_t b) {
        return ds.labels[a] < ds.labels[b];
    });

    std::size_t base = train.size() / n_shards;
    std::size_t rem = train.size() % n_shards;
    std::vector<std::vector<std::size_t>> shards(n_shards);
    std::size_t pos = 0;
    for (std::size_t s = 0; s < n_shards; ++s) {
        std::size_t len = base + (s < rem ? 1 : 0);
        shards[s].assign(train.begin() + pos, train.begin() + pos + len);
        pos += len;
    }

    std::vector<std::size_t> order(n_shards);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);

    std::vector<ClientData> clients(n_clients);
    for (std::size_t c = 0; c < n_clients; ++c) {
        clients[c].vehicle_id = static_cast<int>(c);
        for (std::size_t k = 0; k < shards_per_client; ++k) {
            const auto& sh = shards[order[c * shards_per_client + k]];
            clients[c].indices.insert(clients[c].indices.end(), sh.begin(), sh.end());
        }
        std::sort(clients[c].indices.begin(), clients[c].indices.end());
    }
    return clients;
}

// Delimited numeric text, one sample per line, label in the last column.
// Accepts spaces, commas, tabs or semicolons as delimiters.
inline Dataset load_delimited_dataset(std::istream& in, std::uint64_t split_seed) {
    Dataset ds;
    std::string line;
    std::size_t lineno = 0;
    int max_label = -1;
    while (std::getline(in, line)) {
        ++lineno;
        for (char& c : line)
            if (c == ',' || c == '\t' || c == ';') c = ' ';
        std::istringstream ls(line);
        std::vector<double> row;
        double x;
        while (ls >> x) row.push_back(x);
        if (row.empty()) continue;  // blank line
        if (row.size() < 2)
            throw ConfigError("dataset_file",
                              "line " + std::to_string(lineno) + ": need features plus a label");
        double lab = row.back();
        row.pop_back();
        if (lab < 0 || lab != std::floor(lab))
            throw ConfigError("dataset_file",
                              "line " + std::to_string(lineno) + ": label must be a nonnegative integer");
        if (ds.n_features == 0) ds.n_features = row.size();
        if (row.size() != ds.n_features)
            throw ConfigError("dataset_file",
                              "line " + std::to_string(lineno) + ": inconsistent feature count");
        ds.features.insert(ds.features.end(), row.begin(), row.end());
        ds.labels.push_back(static_cast<int>(lab));
        max_label = std::max(max_label, static_cast<int>(lab));
    }
    if (ds.labels.empty()) throw ConfigError("dataset_file", "no samples");
    ds.n_classes = static_cast<std::size_t>(max_label) + 1;
    if (ds.n_classes < 2) throw ConfigError("dataset_file", "need at least 2 classes");
    Rng rng(split_seed);
    detail::assign_splits(ds, 0.70, 0.15, rng);
    return ds;
}

inline Dataset load_delimited_dataset(const std::string& path, std::uint64_t split_seed) {
    std::ifstream f(path);
    if (!f) throw ConfigError("dataset_file", "cannot open " + path);
    return load_delimited_dataset(f, split_seed);
}

}  // namespace shfl

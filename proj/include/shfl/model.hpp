#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "shfl/dataset.hpp"
#include "shfl/rng.hpp"
#include "shfl/vector_math.hpp"

namespace shfl {

struct LayerSpec {
    std::string name;
    std::vector<std::size_t> shape;

    std::size_t size() const {
        std::size_t n = 1;
        for (auto d : shape) n *= d;
        return n;
    }
};

using LayerLayout = std::vector<LayerSpec>;

struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;  // half-open

    std::size_t size() const { return end - begin; }
};

// Flat parameter vector plus the layout that gives the entries meaning.
// last_layer_range identifies the classifier layer (weights + bias).
struct ParamVector {
    std::vector<double> values;
    LayerLayout layout;
    IndexRange last_layer_range;

    std::span<const double> last_layer() const {
        return {values.data() + last_layer_range.begin, last_layer_range.size()};
    }
};

// Local update transmitted from a client: parameter delta for one round.
struct UpdateVector {
    std::vector<double> values;
    int round = 0;
};

inline std::size_t layout_size(const LayerLayout& layout) {
    std::size_t n = 0;
    for (const auto& l : layout) n += l.size();
    return n;
}

// One hidden layer keeps the classifier layer a proper subset of the
// parameters, which the last-layer baseline filter needs.
inline LayerLayout make_mlp_layout(std::size_t n_features, std::size_t n_hidden,
                                   std::size_t n_classes) {
    return {
        {"hidden_w", {n_features, n_hidden}},
        {"hidden_b", {n_hidden}},
        {"output_w", {n_hidden, n_classes}},
        {"output_b", {n_classes}},
    };
}

inline ParamVector init_model(const LayerLayout& layout, std::uint64_t seed) {
    if (layout.empty()) throw ConfigError("layout", "must be nonempty");
    ParamVector p;
    p.layout = layout;
    p.values.resize(layout_size(layout));
    Rng rng(seed);
    for (auto& v : p.values) v = rng.normal(0.0, 0.1);
    std::size_t total = p.values.size();
    std::size_t tail = layout.back().size();
    if (layout.size() >= 2 && layout.back().shape.size() == 1)
        tail += layout[layout.size() - 2].size();  // final weights + bias
    p.last_layer_range = {total - tail, total};
    return p;
}

namespace detail {

struct MlpDims {
    std::size_t in, hidden, out;
    std::size_t w1, b1, w2, b2;  // offsets into the flat vector
};

inline MlpDims mlp_dims(const ParamVector& p) {
    if (p.layout.size() != 4)
        throw std::invalid_argument("mlp: expected 4-entry layout");
    MlpDims d{};
    d.in = p.layout[0].shape[0];
    d.hidden = p.layout[0].shape[1];
    d.out = p.layout[2].shape[1];
    d.w1 = 0;
    d.b1 = d.w1 + d.in * d.hidden;
    d.w2 = d.b1 + d.hidden;
    d.b2 = d.w2 + d.hidden * d.out;
    return d;
}

inline void mlp_forward(const ParamVector& p, const MlpDims& d,
                        std::span<const double> x, std::vector<double>& h,
                        std::vector<double>& logits) {
    const double* v = p.values.data();
    h.assign(d.hidden, 0.0);
    for (std::size_t j = 0; j < d.hidden; ++j) {
        double z = v[d.b1 + j];
        for (std::size_t i = 0; i < d.in; ++i) z += x[i] * v[d.w1 + i * d.hidden + j];
        h[j] = std::tanh(z);
    }
    logits.assign(d.out, 0.0);
    for (std::size_t k = 0; k < d.out; ++k) {
        double z = v[d.b2 + k];
        for (std::size_t j = 0; j < d.hidden; ++j) z += h[j] * v[d.w2 + j * d.out + k];
        logits[k] = z;
    }
}

inline void softmax_inplace(std::vector<double>& z) {
    double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (auto& x : z) {
        x = std::exp(x - m);
        s += x;
    }
    for (auto& x : z) x /= s;
}

}  // namespace detail

// Mean softmax cross-entropy over the given sample indices.
inline double cross_entropy_loss(const ParamVector& params, const Dataset& ds,
                                 const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw std::invalid_argument("cross_entropy_loss: empty index set");
    auto d = detail::mlp_dims(params);
    std::vector<double> h, logits;
    double total = 0.0;
    for (auto i : indices) {
        detail::mlp_forward(params, d, ds.sample(i), h, logits);
        detail::softmax_inplace(logits);
        double p = std::max(logits[ds.labels[i]], 1e-300);
        total -= std::log(p);
    }
    return total / static_cast<double>(indices.size());
}

inline int predict_class(const ParamVector& params, const Dataset& ds, std::size_t i) {
    auto d = detail::mlp_dims(params);
    std::vector<double> h, logits;
    detail::mlp_forward(params, d, ds.sample(i), h, logits);
    // ties break toward the lower class id
    int best = 0;
    for (std::size_t k = 1; k < logits.size(); ++k)
        if (logits[k] > logits[best]) best = static_cast<int>(k);
    return best;
}

inline double evaluate(const ParamVector& params, const Dataset& ds, Split split) {
    auto idx = ds.indices_of(split);
    if (idx.empty())
        throw ConfigError("split", std::string(split_name(split)) + " split is empty");
    std::size_t correct = 0;
    for (auto i : idx)
        if (predict_class(params, ds, i) == ds.labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(idx.size());
}

struct LocalTrainResult {
    ParamVector new_params;
    UpdateVector update;
};

// Mini-batch SGD on softmax cross-entropy. The returned update is the
// parameter delta (new - old), which is what the client transmits.
// Empty client data signals "no contribution" via nullopt.
inline std::optional<LocalTrainResult> local_train(const ParamVector& params,
                                                   const Dataset& ds,
                                                   const ClientData& data, double lr,
                                                   std::size_t epochs,
                                                   std::size_t batch_size,
                                                   std::uint64_t seed, int round = 0) {
    if (data.indices.empty()) return std::nullopt;
    if (lr < 0.0) throw ConfigError("lr", "must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");

    auto d = detail::mlp_dims(params);
    ParamVector cur = params;
    Rng rng(seed);
    std::vector<std::size_t> order = data.indices;
    std::vector<double> h, logits, grad(cur.values.size());

    for (std::size_t e = 0; e < epochs; ++e) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            std::size_t stop = std::min(start + batch_size, order.size());
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t bi = start; bi < stop; ++bi) {
                std::size_t i = order[bi];
                auto x = ds.sample(i);
                detail::mlp_forward(cur, d, x, h, logits);
                detail::softmax_inplace(logits);
                // dL/dz2 = softmax - onehot
                logits[ds.labels[i]] -= 1.0;
                const double* v = cur.values.data();
                for (std::size_t k = 0; k < d.out; ++k) {
                    double g2 = logits[k];
                    grad[d.b2 + k] += g2;
                    for (std::size_t j = 0; j < d.hidden; ++j)
                        grad[d.w2 + j * d.out + k] += h[j] * g2;
                }
                for (std::size_t j = 0; j < d.hidden; ++j) {
                    double dh = 0.0;
                    for (std::size_t k = 0; k < d.out; ++k)
                        dh += v[d.w2 + j * d.out + k] * logits[k];
                    double dz1 = dh * (1.0 - h[j] * h[j]);
                    grad[d.b1 + j] += dz1;
                    for (std::size_t i2 = 0; i2 < d.in; ++i2)
                        grad[d.w1 + i2 * d.hidden + j] += x[i2] * dz1;
                }
            }
            double scale = lr / static_cast<double>(stop - start);
            for (std::size_t g = 0; g < grad.size(); ++g) cur.values[g] -= scale * grad[g];
        }
    }

    LocalTrainResult res;
    res.update.round = round;
    res.update.values.resize(cur.values.size());
    for (std::size_t i = 0; i < cur.values.size(); ++i)
        res.update.values[i] = cur.values[i] - params.values[i];
    res.new_params = std::move(cur);
    return res;
}

// Entrywise weighted mean, weights normalized to sum 1.
inline ParamVector fedavg(const std::vector<std::pair<ParamVector, double>>& contributions) {
    if (contributions.empty())
        throw std::invalid_argument("fedavg: empty contribution list");
    const auto& first = contributions.front().first;
    double wsum = 0.0;
    for (const auto& [p, w] : contributions) {
        if (p.values.size() != first.values.size())
            throw std::invalid_argument("fedavg: contribution length mismatch");
        if (w <= 0.0) throw std::invalid_argument("fedavg: weights must be positive");
        wsum += w;
    }
    ParamVector out = first;
    std::fill(out.values.begin(), out.values.end(), 0.0);
    for (const auto& [p, w] : contributions) {
        double f = w / wsum;
        for (std::size_t i = 0; i < out.values.size(); ++i)
            out.values[i] += f * p.values[i];
    }
    return out;
}

}  // namespace shfl

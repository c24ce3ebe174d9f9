#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace shfl {

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(std::span<const double> a) {
    return std::sqrt(dot(a, a));
}

// Returns nullopt when either vector has zero norm (similarity undefined).
inline std::optional<double> cosine_similarity(std::span<const double> a,
                                               std::span<const double> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("cosine_similarity: length mismatch");
    double na = norm(a);
    double nb = norm(b);
    if (na == 0.0 || nb == 0.0) return std::nullopt;
    double c = dot(a, b) / (na * nb);
    if (c > 1.0) c = 1.0;
    if (c < -1.0) c = -1.0;
    return c;
}

inline std::optional<double> cosine_similarity(const std::vector<double>& a,
                                               const std::vector<double>& b) {
    return cosine_similarity(std::span<const double>(a), std::span<const double>(b));
}

inline double mean(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("mean: empty input");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Population standard deviation (divide by N).
inline double stddev_population(std::span<const double> v) {
    double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace shfl

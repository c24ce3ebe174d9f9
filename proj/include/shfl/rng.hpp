#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace shfl {

// Every random draw in the simulator comes from a stream derived from the
// master seed and a label, so adding a new consumer never shifts the draws
// of an existing one.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ splitmix64(b));
}

inline std::uint64_t labeled_seed(std::uint64_t master, std::string_view label) {
    return mix_seed(master, fnv1a64(label));
}

inline std::uint64_t labeled_seed(std::uint64_t master, std::string_view label,
                                  std::uint64_t a) {
    return mix_seed(labeled_seed(master, label), a);
}

inline std::uint64_t labeled_seed(std::uint64_t master, std::string_view label,
                                  std::uint64_t a, std::uint64_t b) {
    return mix_seed(labeled_seed(master, label, a), b);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    double uniform() {
        return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
    }

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }

    // [lo, hi] inclusive
    int uniform_int(int lo, int hi) {
        return std::uniform_int_distribution<int>(lo, hi)(engine_);
    }

    double normal(double mean, double stddev) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }

    int poisson(double mean) {
        if (mean <= 0.0) return 0;
        return std::poisson_distribution<int>(mean)(engine_);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        std::shuffle(v.begin(), v.end(), engine_);
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace shfl

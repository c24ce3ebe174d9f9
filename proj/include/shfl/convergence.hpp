#pragma once

#include <algorithm>
#include <optional>
#include <vector>

namespace shfl {

struct ConvergenceResult {
    double epsilon = 0.0;
    std::optional<int> converged_round;  // nullopt = unconverged
};

// First round r >= 3 (1-based) whose trailing three accuracies span less
// than epsilon; series[0] is round 1.
inline ConvergenceResult detect_convergence(const std::vector<double>& series,
                                            double epsilon) {
    ConvergenceResult res;
    res.epsilon = epsilon;
    for (std::size_t i = 2; i < series.size(); ++i) {
        double lo = std::min({series[i - 2], series[i - 1], series[i]});
        double hi = std::max({series[i - 2], series[i - 1], series[i]});
        if (hi - lo < epsilon) {
            res.converged_round = static_cast<int>(i) + 1;
            return res;
        }
    }
    return res;
}

}  // namespace shfl

#include "mhri/dist.hpp"

#include <cmath>
#include <string>

#include "mhri/errors.hpp"

namespace mhri {

Dist::Dist(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw ContractError("Dist must be non-empty");
    double sum = 0.0;
    for (double p : probs_) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw ContractError("Dist entry " + std::to_string(p) + " outside [0, 1]");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) {
        throw ContractError("Dist entries sum to " + std::to_string(sum) + ", expected 1");
    }
}

int Dist::argmax() const {
    int best = 0;
    for (size_t i = 1; i < probs_.size(); ++i) {
        if (probs_[i] > probs_[best]) best = static_cast<int>(i);
    }
    return best;
}

double kl_divergence(const Dist& p, const Dist& q, double floor) {
    if (p.size() != q.size()) {
        throw DimensionError("kl_divergence: length mismatch, " + std::to_string(p.size()) +
                             " vs " + std::to_string(q.size()));
    }
    double acc = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) acc += p[i] * std::log(p[i] / std::max(q[i], floor));
    }
    return acc < 0.0 ? 0.0 : acc;
}

}  // namespace mhri

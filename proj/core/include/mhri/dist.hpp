#pragma once

#include <vector>

namespace mhri {

/**
 * Finite probability vector. Construction validates that every entry lies
 * in [0, 1] and the entries sum to 1 within 1e-9.
 */
class Dist {
public:
    explicit Dist(std::vector<double> probs);

    const std::vector<double>& probs() const { return probs_; }
    double operator[](size_t i) const { return probs_[i]; }
    size_t size() const { return probs_.size(); }
    int argmax() const;

    static constexpr double kSumTolerance = 1e-9;

private:
    std::vector<double> probs_;
};

/// KL(p || q) between two plain probability vectors, with q floored at
/// `floor` and 0*ln(0/q) taken as 0. Negative rounding residue is clamped
/// to zero. Non-differentiable companion of the tensor op.
double kl_divergence(const Dist& p, const Dist& q, double floor = 1e-6);

}  // namespace mhri

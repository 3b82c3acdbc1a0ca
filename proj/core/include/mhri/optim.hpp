#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mhri/tensor.hpp"

namespace mhri {

/**
 * Named trainable parameters plus the optimizer's moment state. The map is
 * ordered by name, which fixes the update order across runs.
 */
class ParamSet {
public:
    /// Registers a parameter; the tensor is marked requires_grad.
    Tensor& add(const std::string& name, Tensor t);

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) > 0; }

    std::map<std::string, Tensor>& params() { return params_; }
    const std::map<std::string, Tensor>& params() const { return params_; }

    /// Allocates and zeroes every parameter's gradient buffer.
    void zero_grad();

    int64_t step_count() const { return step_count_; }

    friend void adamw_step(ParamSet& params, double lr, double beta1, double beta2, double eps,
                           double weight_decay);

private:
    std::map<std::string, Tensor> params_;
    std::map<std::string, std::vector<double>> m_;  // first moments
    std::map<std::string, std::vector<double>> v_;  // second moments
    int64_t step_count_ = 0;
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// One AdamW update: decoupled weight decay applied directly to the
/// weights, bias-corrected moment estimates, step_count incremented by one.
/// Every parameter must have a populated gradient buffer.
void adamw_step(ParamSet& params, double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8, double weight_decay = 0.0);

inline void adamw_step(ParamSet& params, const AdamConfig& cfg) {
    adamw_step(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
}

}  // namespace mhri

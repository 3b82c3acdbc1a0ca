#include "mhri/optim.hpp"

#include <cmath>

#include "mhri/errors.hpp"

namespace mhri {

Tensor& ParamSet::add(const std::string& name, Tensor t) {
    if (params_.count(name)) throw ContractError("parameter already registered: " + name);
    t.node()->requires_grad = true;
    auto [it, ok] = params_.emplace(name, std::move(t));
    (void)ok;
    const size_t n = static_cast<size_t>(it->second.numel());
    m_[name].assign(n, 0.0);
    v_[name].assign(n, 0.0);
    return it->second;
}

Tensor& ParamSet::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("no such parameter: " + name);
    return it->second;
}

const Tensor& ParamSet::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("no such parameter: " + name);
    return it->second;
}

void ParamSet::zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
}

void adamw_step(ParamSet& params, double lr, double beta1, double beta2, double eps,
                double weight_decay) {
    for (auto& [name, t] : params.params_) {
        if (!t.has_grad()) {
            throw TrainingStateError("adamw_step: parameter '" + name + "' has no gradient");
        }
    }
    params.step_count_ += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(params.step_count_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(params.step_count_));

    for (auto& [name, t] : params.params_) {
        double* w = t.data();
        const double* g = t.grad().data();
        double* m = params.m_[name].data();
        double* v = params.v_[name].data();
        const size_t n = static_cast<size_t>(t.numel());
        for (size_t i = 0; i < n; ++i) {
            w[i] *= 1.0 - lr * weight_decay;  // decoupled decay, not through moments
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

}  // namespace mhri

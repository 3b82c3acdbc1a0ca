#include "mhri/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "mhri/errors.hpp"

namespace mhri {

std::vector<double> grad_check_errors(const std::function<Tensor(std::vector<Tensor>&)>& f,
                                      std::vector<Tensor>& inputs, double h) {
    for (Tensor& x : inputs) x.node()->requires_grad = true;

    Tensor y = f(inputs);
    if (y.numel() != 1) {
        throw ContractError("grad_check: function output must be scalar, got " + y.shape_str());
    }
    for (Tensor& x : inputs) x.zero_grad();
    y.backward();

    std::vector<double> errors;
    for (Tensor& x : inputs) {
        const std::vector<double> analytic = x.grad();
        for (int i = 0; i < x.numel(); ++i) {
            const double orig = x.data()[i];
            x.data()[i] = orig + h;
            const double up = f(inputs).value();
            x.data()[i] = orig - h;
            const double down = f(inputs).value();
            x.data()[i] = orig;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[static_cast<size_t>(i)];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            errors.push_back(std::abs(a - numeric) / denom);
        }
    }
    return errors;
}

double grad_check(const std::function<Tensor(std::vector<Tensor>&)>& f, std::vector<Tensor> inputs,
                  double h) {
    const std::vector<double> errors = grad_check_errors(f, inputs, h);
    double max_rel = 0.0;
    for (double e : errors) max_rel = std::max(max_rel, e);
    return max_rel;
}

double grad_check(const std::function<Tensor(Tensor&)>& f, Tensor x, double h) {
    return grad_check(
        [&f](std::vector<Tensor>& xs) -> Tensor { return f(xs[0]); },
        std::vector<Tensor>{std::move(x)}, h);
}

}  // namespace mhri

#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "kept/autograd.hpp"

namespace kept {

// Central finite-difference check of reverse-mode gradients.
//
// `build_loss` must construct a fresh scalar loss graph from the given
// leaves each time it is called; the leaves' values are perturbed in place
// between calls. Returns the max over all coordinates of
//   |analytic - (f(x+h) - f(x-h)) / 2h| / (|analytic| + 1e-12).
// The caller is responsible for picking points where the op is
// differentiable (no softmax ties, no degenerate norm inputs).
template <typename T>
T finite_diff_check(const std::vector<NodePtr<T>>& inputs,
                    const std::function<NodePtr<T>(const std::vector<NodePtr<T>>&)>& build_loss,
                    T h) {
    if (!(h > T{0}) || h > static_cast<T>(1e-3))
        throw std::invalid_argument("finite_diff_check: h must be in (0, 1e-3]");
    for (const auto& in : inputs)
        if (!in->value.all_finite())
            throw std::invalid_argument("finite_diff_check: non-finite input");

    for (const auto& in : inputs) zero_grad(in);
    NodePtr<T> loss = build_loss(inputs);
    backward(loss);
    std::vector<Tensor<T>> analytic;
    analytic.reserve(inputs.size());
    for (const auto& in : inputs) analytic.push_back(grad_or_zero(in));

    T max_rel_err{0};
    for (std::size_t which = 0; which < inputs.size(); ++which) {
        if (!inputs[which]->requires_grad) continue;
        Tensor<T>& x = inputs[which]->value;
        for (std::size_t i = 0; i < x.numel(); ++i) {
            const T saved = x[i];
            x[i] = saved + h;
            const T f_plus = scalar_value(build_loss(inputs));
            x[i] = saved - h;
            const T f_minus = scalar_value(build_loss(inputs));
            x[i] = saved;
            const T fd = (f_plus - f_minus) / (T{2} * h);
            const T a = analytic[which][i];
            const T rel = std::abs(a - fd) / (std::abs(a) + static_cast<T>(1e-12));
            max_rel_err = std::max(max_rel_err, rel);
        }
    }
    return max_rel_err;
}

}  // namespace kept

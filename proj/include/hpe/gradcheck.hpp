#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "hpe/tensor.hpp"

namespace hpe {

// Relative error with a unit floor: |a - b| / max(1, |a|, |b|). The floor
// turns the measure into absolute error where both gradients vanish, which is
// what finite differences can actually resolve there.
inline double gradcheck_rel_err(double analytic, double numeric) {
    const double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
    return std::fabs(analytic - numeric) / denom;
}

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst;  // "<leaf-name>[i]" of the worst element

    bool ok(double tol) const { return max_rel_err < tol; }
};

template <typename T>
struct GradCheckLeaf {
    std::string name;
    Tensor<T>* tensor = nullptr;
};

// Central-difference gradient check. `loss` must recompute the scalar from
// the current leaf values on every call; `analytic` must zero the leaf grads
// and repopulate them via the backward path under test. Deterministic layers
// only (batchnorm in eval mode or disabled).
template <typename T>
GradCheckResult gradcheck(const std::vector<GradCheckLeaf<T>>& leaves, const std::function<double()>& loss,
                          const std::function<void()>& analytic, double epsilon) {
    for (const auto& leaf : leaves) {
        leaf.tensor->alloc_grad();
    }
    analytic();
    std::vector<std::vector<T>> saved_grads;
    saved_grads.reserve(leaves.size());
    for (const auto& leaf : leaves) {
        saved_grads.push_back(leaf.tensor->grad);
    }

    GradCheckResult result;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        Tensor<T>& t = *leaves[li].tensor;
        for (i64 i = 0; i < t.size(); ++i) {
            const T original = t.values[i];
            t.values[i] = original + static_cast<T>(epsilon);
            const double f_plus = loss();
            t.values[i] = original - static_cast<T>(epsilon);
            const double f_minus = loss();
            t.values[i] = original;

            const double numeric = (f_plus - f_minus) / (2.0 * epsilon);
            const double a = static_cast<double>(saved_grads[li][static_cast<std::size_t>(i)]);
            const double err = gradcheck_rel_err(a, numeric);
            if (err > result.max_rel_err) {
                result.max_rel_err = err;
                result.worst = leaves[li].name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return result;
}

}  // namespace hpe

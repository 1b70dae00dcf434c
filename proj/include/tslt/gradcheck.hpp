#pragma once

#include "tslt/matrix.hpp"
#include "tslt/random.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>

namespace tslt {

/// A named, mutable view of one stored tensor.
struct TensorRef {
    std::string name;
    std::uint8_t layer_id = 0;
    Matrix* value = nullptr;
};

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::string worst_tensor;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t checked = 0;
    /// Entries left out because a probe crossed a non-differentiable point.
    std::size_t skipped = 0;
};

/// Compares analytic gradients against central differences
/// (L(θ+h) - L(θ-h)) / 2h.
///
/// `params[i]` and `analytic[i]` must have equal shapes. `sample` entries are
/// drawn uniformly over all parameters (0 checks every entry). Each entry's
/// error is |a - n| / max(|a|, |n|, floor). Below `floor` the comparison is
/// effectively absolute: at h = 1e-5 the difference quotient carries roundoff
/// near 1e-16·|L|/h, so relative error on smaller gradients measures noise.
///
/// `same_branch`, when given, is called after every probe evaluation and
/// returns false if that evaluation took a different piecewise branch than the
/// unperturbed loss (a ReLU changing sides, say). Such entries are counted in
/// `skipped` instead of being compared. Parameters are restored after each
/// probe. Throws NumericError if the loss is not finite.
GradCheckResult finite_difference_check(const std::function<double()>& loss, std::span<const TensorRef> params,
                                        std::span<const Matrix> analytic, double h, std::size_t sample,
                                        RandSource& rng, double floor = 1e-4,
                                        const std::function<bool()>& same_branch = {});

}  // namespace tslt

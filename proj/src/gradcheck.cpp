#include "tslt/gradcheck.hpp"

#include "tslt/error.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace tslt {

namespace {

double finite_loss(const std::function<double()>& loss) {
    const double value = loss();
    if (!std::isfinite(value)) {
        throw NumericError("gradient check loss is not finite");
    }
    return value;
}

}  // namespace

GradCheckResult finite_difference_check(const std::function<double()>& loss, std::span<const TensorRef> params,
                                        std::span<const Matrix> analytic, double h, std::size_t sample,
                                        RandSource& rng, double floor,
                                        const std::function<bool()>& same_branch) {
    if (!(h > 0.0)) {
        throw Error("finite-difference step must be positive");
    }
    if (params.size() != analytic.size()) {
        throw ShapeError("gradient check got " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(analytic.size()) + " gradients");
    }
    std::vector<std::size_t> offsets;
    std::size_t total = 0;
    for (std::size_t t = 0; t < params.size(); ++t) {
        const Matrix& p = *params[t].value;
        if (p.rows() != analytic[t].rows() || p.cols() != analytic[t].cols()) {
            throw ShapeError("gradient for " + params[t].name + " has shape " + shape_string(analytic[t]) +
                             ", parameter has " + shape_string(p));
        }
        offsets.push_back(total);
        total += p.size();
    }
    if (total == 0) {
        return {};
    }

    std::vector<std::size_t> picks;
    if (sample == 0 || sample >= total) {
        picks.resize(total);
        for (std::size_t i = 0; i < total; ++i) {
            picks[i] = i;
        }
    } else {
        picks.reserve(sample);
        for (std::size_t i = 0; i < sample; ++i) {
            picks.push_back(static_cast<std::size_t>(rng.uniform_index(total)));
        }
    }

    GradCheckResult result;
    for (const std::size_t flat : picks) {
        const auto it = std::upper_bound(offsets.begin(), offsets.end(), flat);
        const auto t = static_cast<std::size_t>(std::distance(offsets.begin(), it) - 1);
        const std::size_t idx = flat - offsets[t];
        double& theta = params[t].value->values()[idx];
        const double saved = theta;
        theta = saved + h;
        const double up = finite_loss(loss);
        bool smooth = !same_branch || same_branch();
        theta = saved - h;
        const double down = finite_loss(loss);
        smooth = smooth && (!same_branch || same_branch());
        theta = saved;
        if (!smooth) {
            ++result.skipped;
            continue;
        }

        const double numeric = (up - down) / (2.0 * h);
        const double a = analytic[t].values()[idx];
        const double denom = std::max({std::abs(a), std::abs(numeric), floor});
        const double err = std::abs(a - numeric) / denom;
        ++result.checked;
        if (result.checked == 1 || err > result.max_relative_error) {
            result.max_relative_error = err;
            result.worst_tensor = params[t].name;
            result.worst_index = idx;
            result.worst_analytic = a;
            result.worst_numeric = numeric;
        }
    }
    return result;
}

}  // namespace tslt

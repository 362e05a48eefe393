#include "steamcast/tensor.hpp"

#include <cmath>

namespace steamcast {

bool Tensor::all_finite() const {
    for (real v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

real Tensor::max_abs_diff(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "max_abs_diff");
    real worst = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        worst = std::max(worst, std::fabs(a.data[i] - b.data[i]));
    return worst;
}

}  // namespace steamcast

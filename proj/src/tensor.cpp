#include "ovfuse/tensor.hpp"

#include <cmath>
#include <string>

#include "ovfuse/kernels.hpp"

namespace ovfuse {

void require_finite(const Tensor& t, const char* what) {
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        if (!std::isfinite(t.data[i]))
            throw ValidationError(std::string(what) + ": non-finite value at flat index " +
                                  std::to_string(i));
    }
}

std::vector<std::uint8_t> l2_normalize_rows_inplace(Tensor& t, float eps) {
    if (t.rank() != 2) throw ValidationError("l2_normalize_rows: tensor must be rank 2");
    const std::size_t rows = t.dim(0);
    const std::size_t cols = t.dim(1);
    if (cols < 1) throw ValidationError("l2_normalize_rows: need at least one column");

    std::vector<std::uint8_t> zeroed(rows, 0);
    for (std::size_t r = 0; r < rows; ++r) {
        float* p = t.row(r);
        const float norm = std::sqrt(kernels::squared_norm(p, cols));
        if (norm < eps) {
            for (std::size_t c = 0; c < cols; ++c) p[c] = 0.0f;
            zeroed[r] = 1;
        } else {
            kernels::scale(p, cols, 1.0f / norm);
        }
    }
    return zeroed;
}

RowNormalizeResult l2_normalize_rows(const Tensor& t, float eps) {
    RowNormalizeResult out;
    out.values = t;
    out.zeroed = l2_normalize_rows_inplace(out.values, eps);
    return out;
}

}  // namespace ovfuse

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ovfuse/error.hpp"

namespace ovfuse {

// Dense row-major tensor. Shape [N,C] rows are contiguous; an empty shape
// denotes a scalar (one element).
template <typename T>
struct TensorT {
    std::vector<std::size_t> shape;
    std::vector<T> data;

    TensorT() = default;
    explicit TensorT(std::vector<std::size_t> s) : shape(std::move(s)) {
        data.assign(numel_of(shape), T{});
    }
    TensorT(std::vector<std::size_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (numel_of(shape) != data.size())
            throw ValidationError("tensor: shape product does not match element count");
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t e : s) n *= e;
        return n;
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape[i]; }

    T& operator()(std::size_t i) { return data[i]; }
    const T& operator()(std::size_t i) const { return data[i]; }
    T& operator()(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    const T& operator()(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
    T& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    const T& operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    T& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }
    const T& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }

    // Row pointer for rank-2 tensors.
    T* row(std::size_t r) { return data.data() + r * shape[1]; }
    const T* row(std::size_t r) const { return data.data() + r * shape[1]; }

    bool operator==(const TensorT& other) const = default;
};

using Tensor = TensorT<float>;
using TensorU8 = TensorT<std::uint8_t>;
using TensorI32 = TensorT<std::int32_t>;

// Throws ValidationError if any element is NaN or infinite.
void require_finite(const Tensor& t, const char* what);

struct RowNormalizeResult {
    Tensor values;
    std::vector<std::uint8_t> zeroed;  // rows with input norm < eps, set to all-zero
};

// L2-normalizes every row of a [N,C] tensor. Rows with norm below eps are
// zeroed and flagged rather than rejected: points with no visible view
// produce zero feature rows routinely.
RowNormalizeResult l2_normalize_rows(const Tensor& t, float eps = 1e-12f);
std::vector<std::uint8_t> l2_normalize_rows_inplace(Tensor& t, float eps = 1e-12f);

}  // namespace ovfuse

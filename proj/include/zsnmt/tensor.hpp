#ifndef ZSNMT_TENSOR_HPP
#define ZSNMT_TENSOR_HPP

#include <cstdint>
#include <numeric>
#include <vector>

#include "zsnmt/common.hpp"

namespace zsnmt {

// Row-major dense tensor with an optional gradient buffer of the same shape.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until requested

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) { data.assign(numel(), T(0)); }
    Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<std::int64_t>(data.size()) != numel())
            throw InternalError("tensor data does not match shape");
    }

    std::int64_t numel() const {
        std::int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }

    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(shape.size()); }

    // rows when the tensor is viewed as a matrix [*, last_dim]
    std::int64_t lead() const { return numel() / shape.back(); }

    void ensure_grad() {
        if (grad.empty()) grad.assign(numel(), T(0));
    }
    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

}  // namespace zsnmt

#endif

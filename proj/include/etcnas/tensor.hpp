#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "etcnas/errors.hpp"

namespace etcnas {

// Dense row-major tensor of 64-bit reals.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(elements()), 0.0);
    }

    int64_t elements() const {
        int64_t n = 1;
        for (int64_t d : shape) n *= d;
        return n;
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool operator==(const Tensor&) const = default;

    // 2D / 3D accessors for the channels-last kernels
    double& at2(int64_t i, int64_t j) { return data[i * shape[1] + j]; }
    double at2(int64_t i, int64_t j) const { return data[i * shape[1] + j]; }
    double& at3(int64_t i, int64_t j, int64_t k) {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    double at3(int64_t i, int64_t j, int64_t k) const {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
};

} // namespace etcnas

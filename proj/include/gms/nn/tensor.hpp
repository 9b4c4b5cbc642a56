#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gms/error.hpp"

namespace gms::nn {

/// Dense row-major tensor. Activations inside the network use the
/// channel-major layout {C, N, H, W} so that a convolution is a single GEMM
/// over all N*H*W positions of the batch.
/// Storage aligned to Eigen's widest packet, so vectorized reductions peel
/// the same way on every run and results are bitwise reproducible.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

template <typename T>
struct Tensor {
    std::vector<int> shape;
    AlignedVector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, T fill = T(0)) : shape(std::move(s)) {
        data.assign(count(shape), fill);
    }

    static std::size_t count(const std::vector<int>& s) {
        return std::accumulate(s.begin(), s.end(), std::size_t{1},
                               [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
    }

    std::size_t size() const noexcept { return data.size(); }
    int rank() const noexcept { return static_cast<int>(shape.size()); }
    int dim(int k) const { return shape.at(static_cast<std::size_t>(k)); }
    bool empty() const noexcept { return data.empty(); }

    T* ptr() noexcept { return data.data(); }
    const T* ptr() const noexcept { return data.data(); }
    T& operator[](std::size_t k) { return data[k]; }
    T operator[](std::size_t k) const { return data[k]; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }
    void zero() { fill(T(0)); }
    void clear() {
        shape.clear();
        data.clear();
        data.shrink_to_fit();
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.assign(data.begin(), data.end());
        return out;
    }
};

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<Mat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const Mat<T>>;

template <typename T>
MatMap<T> as_matrix(Tensor<T>& t, Eigen::Index rows, Eigen::Index cols) {
    return MatMap<T>(t.ptr(), rows, cols);
}

template <typename T>
ConstMatMap<T> as_matrix(const Tensor<T>& t, Eigen::Index rows, Eigen::Index cols) {
    return ConstMatMap<T>(t.ptr(), rows, cols);
}

inline std::string shape_string(const std::vector<int>& shape) {
    std::string out = "[";
    for (std::size_t k = 0; k < shape.size(); ++k) {
        if (k) out += ", ";
        out += std::to_string(shape[k]);
    }
    return out + "]";
}

/// A trainable tensor and its gradient accumulator.
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;

    Parameter() = default;
    Parameter(std::string n, std::vector<int> shape)
        : name(std::move(n)), value(shape), grad(shape) {}
};

/// Non-trainable state that still belongs in a checkpoint (running statistics).
template <typename T>
struct Buffer {
    std::string name;
    Tensor<T>* tensor;
};

enum class Mode { kTrain, kInference };

}  // namespace gms::nn

#pragma once

#include <cassert>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "melbridge/core/aligned.hpp"
#include "melbridge/core/rng.hpp"

namespace melbridge {

/// Dense row-major n-d array. Scalar type is a template parameter so the
/// training stack can run in float while gradient checks instantiate the
/// identical code in double. Storage is cache-line aligned so Eigen's
/// vectorized kernels behave identically across allocations.
template <typename S>
struct TensorT {
    std::vector<int> shape;
    AlignedVec<S> data;

    TensorT() = default;
    explicit TensorT(std::vector<int> sh) : shape(std::move(sh)) {
        data.assign(count(shape), S{0});
    }
    TensorT(std::initializer_list<int> sh) : TensorT(std::vector<int>(sh)) {}

    static std::size_t count(const std::vector<int>& sh) {
        std::size_t n = 1;
        for (int d : sh) {
            if (d < 0) throw std::invalid_argument("negative tensor dim");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    std::size_t size() const { return data.size(); }
    int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }
    int ndim() const { return static_cast<int>(shape.size()); }

    S* ptr() { return data.data(); }
    const S* ptr() const { return data.data(); }

    S& operator[](std::size_t i) { return data[i]; }
    const S& operator[](std::size_t i) const { return data[i]; }

    void zero() { std::fill(data.begin(), data.end(), S{0}); }
    void fill(S v) { std::fill(data.begin(), data.end(), v); }

    void reshape(std::vector<int> sh) {
        if (count(sh) != data.size()) throw std::invalid_argument("reshape size mismatch");
        shape = std::move(sh);
    }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    void fill_normal(Rng& rng) {
        for (auto& x : data) x = static_cast<S>(rng.normal());
    }

    bool all_finite() const {
        for (S v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    S max_abs() const {
        S m{0};
        for (S v : data) m = std::max(m, static_cast<S>(std::abs(static_cast<double>(v))));
        return m;
    }
};

using Tensor = TensorT<float>;

inline std::string shape_str(const std::vector<int>& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

template <typename S>
std::string shape_str(const TensorT<S>& t) {
    return shape_str(t.shape);
}

}  // namespace melbridge

#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "hpe/errors.hpp"

namespace hpe {

using i64 = std::int64_t;
using Shape = std::vector<i64>;

inline i64 numel(const Shape& shape) {
    i64 n = 1;
    for (i64 d : shape) {
        n *= d;
    }
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << "]";
    return os.str();
}

// Dense row-major N-D array. `grad` is empty unless alloc_grad() has been
// called; when present it always has the same length as `values`.
template <typename T>
struct Tensor {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;

    Tensor() = default;

    explicit Tensor(Shape s) : shape(std::move(s)) {
        for (i64 d : shape) {
            if (d < 0) {
                throw DimensionError("tensor dimension must be non-negative, got shape " + shape_str(shape));
            }
        }
        values.assign(static_cast<std::size_t>(numel(shape)), T(0));
    }

    Tensor(Shape s, std::vector<T> v) : shape(std::move(s)), values(std::move(v)) {
        if (static_cast<i64>(values.size()) != numel(shape)) {
            throw DimensionError("tensor buffer length " + std::to_string(values.size()) +
                                 " does not match shape " + shape_str(shape));
        }
    }

    static Tensor full(Shape s, T v) {
        Tensor t(std::move(s));
        std::fill(t.values.begin(), t.values.end(), v);
        return t;
    }

    i64 size() const { return static_cast<i64>(values.size()); }
    int rank() const { return static_cast<int>(shape.size()); }

    bool has_grad() const { return !grad.empty(); }

    void alloc_grad() { grad.assign(values.size(), T(0)); }

    void zero_grad() {
        if (!grad.empty()) {
            std::fill(grad.begin(), grad.end(), T(0));
        }
    }

    T& operator[](i64 i) { return values[static_cast<std::size_t>(i)]; }
    const T& operator[](i64 i) const { return values[static_cast<std::size_t>(i)]; }

    // Row-major flat index for a 4D [C,D,H,W] tensor.
    i64 idx4(i64 c, i64 d, i64 h, i64 w) const {
        return ((c * shape[1] + d) * shape[2] + h) * shape[3] + w;
    }

    T& at4(i64 c, i64 d, i64 h, i64 w) { return values[static_cast<std::size_t>(idx4(c, d, h, w))]; }
    const T& at4(i64 c, i64 d, i64 h, i64 w) const { return values[static_cast<std::size_t>(idx4(c, d, h, w))]; }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.values.resize(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) {
            out.values[i] = static_cast<U>(values[i]);
        }
        return out;
    }
};

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (a.shape != b.shape) {
        throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                             shape_str(b.shape));
    }
}

template <typename T>
void check_rank(const Tensor<T>& t, int rank, const char* what) {
    if (t.rank() != rank) {
        throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                             shape_str(t.shape));
    }
}

}  // namespace hpe

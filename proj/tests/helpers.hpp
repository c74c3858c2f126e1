#pragma once

#include <random>
#include <vector>

#include "hpe/tensor.hpp"

namespace hpe::test {

template <typename T>
void fill_uniform(Tensor<T>& t, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    for (T& v : t.values) {
        v = static_cast<T>(dist(rng));
    }
}

template <typename T>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<T> t(std::move(shape));
    fill_uniform(t, rng, lo, hi);
    return t;
}

// Independent convolution oracle: the plain seven-nested-loop definition with
// explicit bounds checks. Deliberately shares no code with ops::conv3d_forward.
template <typename T>
Tensor<T> conv3d_naive(const Tensor<T>& x, const Tensor<T>& w, const std::vector<T>& bias, i64 stride,
                       i64 pad) {
    const i64 Ci = x.shape[0], D = x.shape[1], H = x.shape[2], W = x.shape[3];
    const i64 Co = w.shape[0], k = w.shape[2];
    const i64 Do = (D + 2 * pad - k) / stride + 1;
    const i64 Ho = (H + 2 * pad - k) / stride + 1;
    const i64 Wo = (W + 2 * pad - k) / stride + 1;
    Tensor<T> out({Co, Do, Ho, Wo});
    for (i64 co = 0; co < Co; ++co) {
        for (i64 z = 0; z < Do; ++z) {
            for (i64 y = 0; y < Ho; ++y) {
                for (i64 xo = 0; xo < Wo; ++xo) {
                    T acc = bias[static_cast<std::size_t>(co)];
                    for (i64 ci = 0; ci < Ci; ++ci) {
                        for (i64 kd = 0; kd < k; ++kd) {
                            for (i64 kh = 0; kh < k; ++kh) {
                                for (i64 kw = 0; kw < k; ++kw) {
                                    const i64 iz = z * stride + kd - pad;
                                    const i64 iy = y * stride + kh - pad;
                                    const i64 ix = xo * stride + kw - pad;
                                    if (iz < 0 || iz >= D || iy < 0 || iy >= H || ix < 0 || ix >= W) {
                                        continue;
                                    }
                                    acc += w.values[(((co * Ci + ci) * k + kd) * k + kh) * k + kw] *
                                           x.values[((ci * D + iz) * H + iy) * W + ix];
                                }
                            }
                        }
                    }
                    out.values[((co * Do + z) * Ho + y) * Wo + xo] = acc;
                }
            }
        }
    }
    return out;
}

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape != b.shape) {
        return false;
    }
    for (i64 i = 0; i < a.size(); ++i) {
        if (a.values[i] != b.values[i]) {
            return false;
        }
    }
    return true;
}

}  // namespace hpe::test

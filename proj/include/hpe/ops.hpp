#pragma once

// Layer forward/backward kernels. Every backward is the exact vector-Jacobian
// product of its forward; saved inputs are never mutated. All kernels are
// single-threaded and deterministic.

#include <algorithm>
#include <cmath>
#include <vector>

#include "hpe/tensor.hpp"

namespace hpe {
namespace ops {

inline i64 conv_out_dim(i64 in, i64 k, i64 stride, i64 pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// Zero-pad a [C,D,H,W] tensor by `pad` voxels on each spatial side.
template <typename T>
Tensor<T> pad3d(const Tensor<T>& x, i64 pad) {
    const i64 C = x.shape[0], D = x.shape[1], H = x.shape[2], W = x.shape[3];
    Tensor<T> out({C, D + 2 * pad, H + 2 * pad, W + 2 * pad});
    const i64 Hp = H + 2 * pad, Wp = W + 2 * pad, Dp = D + 2 * pad;
    for (i64 c = 0; c < C; ++c) {
        for (i64 d = 0; d < D; ++d) {
            for (i64 h = 0; h < H; ++h) {
                const T* src = x.values.data() + ((c * D + d) * H + h) * W;
                T* dst = out.values.data() + ((c * Dp + d + pad) * Hp + h + pad) * Wp + pad;
                std::copy(src, src + W, dst);
            }
        }
    }
    return out;
}

// Crop the padding added by pad3d and drop it, summing nothing (inverse slice).
template <typename T>
Tensor<T> unpad3d(const Tensor<T>& x, i64 pad, const Shape& target) {
    const i64 C = target[0], D = target[1], H = target[2], W = target[3];
    const i64 Dp = x.shape[1], Hp = x.shape[2], Wp = x.shape[3];
    (void)Dp;
    Tensor<T> out(target);
    for (i64 c = 0; c < C; ++c) {
        for (i64 d = 0; d < D; ++d) {
            for (i64 h = 0; h < H; ++h) {
                const T* src = x.values.data() + ((c * x.shape[1] + d + pad) * Hp + h + pad) * Wp + pad;
                T* dst = out.values.data() + ((c * D + d) * H + h) * W;
                std::copy(src, src + W, dst);
            }
        }
    }
    return out;
}

template <typename T>
void conv3d_check(const Tensor<T>& input, const Tensor<T>& weights, const std::vector<T>& bias, i64 stride,
                  i64 pad) {
    check_rank(input, 4, "conv3d input");
    check_rank(weights, 5, "conv3d weights");
    if (weights.shape[2] != weights.shape[3] || weights.shape[2] != weights.shape[4]) {
        throw DimensionError("conv3d: kernel must be cubic, got " + shape_str(weights.shape));
    }
    if (weights.shape[2] % 2 == 0) {
        throw DimensionError("conv3d: kernel size must be odd, got " + std::to_string(weights.shape[2]));
    }
    if (input.shape[0] != weights.shape[1]) {
        throw DimensionError("conv3d: input channels " + std::to_string(input.shape[0]) +
                             " != weight C_in " + std::to_string(weights.shape[1]));
    }
    if (static_cast<i64>(bias.size()) != weights.shape[0]) {
        throw DimensionError("conv3d: bias length " + std::to_string(bias.size()) + " != C_out " +
                             std::to_string(weights.shape[0]));
    }
    if (stride < 1 || pad < 0) {
        throw DimensionError("conv3d: stride must be >= 1 and pad >= 0");
    }
    const i64 k = weights.shape[2];
    for (int a = 1; a <= 3; ++a) {
        if (conv_out_dim(input.shape[a], k, stride, pad) < 1) {
            throw DimensionError("conv3d: non-positive output extent for input " + shape_str(input.shape));
        }
    }
}

// Direct 3D convolution. Each output voxel accumulates bias first, then the
// (ci, kd, kh, kw) taps in that exact order, so results are bit-identical to
// the naive seven-loop form in the same precision.
template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& input, const Tensor<T>& weights, const std::vector<T>& bias,
                         i64 stride, i64 pad) {
    conv3d_check(input, weights, bias, stride, pad);
    const i64 Ci = input.shape[0];
    const i64 Co = weights.shape[0];
    const i64 k = weights.shape[2];
    const i64 Do = conv_out_dim(input.shape[1], k, stride, pad);
    const i64 Ho = conv_out_dim(input.shape[2], k, stride, pad);
    const i64 Wo = conv_out_dim(input.shape[3], k, stride, pad);

    Tensor<T> padded_store;
    const Tensor<T>* src = &input;
    if (pad > 0) {
        padded_store = pad3d(input, pad);
        src = &padded_store;
    }
    const i64 Dp = src->shape[1], Hp = src->shape[2], Wp = src->shape[3];

    Tensor<T> out({Co, Do, Ho, Wo});
    const i64 out_ch = Do * Ho * Wo;
    for (i64 co = 0; co < Co; ++co) {
        std::fill_n(out.values.begin() + co * out_ch, out_ch, bias[static_cast<std::size_t>(co)]);
        for (i64 ci = 0; ci < Ci; ++ci) {
            for (i64 kd = 0; kd < k; ++kd) {
                for (i64 kh = 0; kh < k; ++kh) {
                    for (i64 kw = 0; kw < k; ++kw) {
                        const T wv = weights.values[(((co * Ci + ci) * k + kd) * k + kh) * k + kw];
                        for (i64 z = 0; z < Do; ++z) {
                            for (i64 y = 0; y < Ho; ++y) {
                                const T* in_row =
                                    src->values.data() +
                                    ((ci * Dp + z * stride + kd) * Hp + y * stride + kh) * Wp + kw;
                                T* out_row = out.values.data() + ((co * Do + z) * Ho + y) * Wo;
                                if (stride == 1) {
                                    for (i64 x = 0; x < Wo; ++x) {
                                        out_row[x] += wv * in_row[x];
                                    }
                                } else {
                                    for (i64 x = 0; x < Wo; ++x) {
                                        out_row[x] += wv * in_row[x * stride];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

template <typename T>
struct Conv3dGrads {
    Tensor<T> input;
    Tensor<T> weights;
    std::vector<T> bias;
};

template <typename T>
Conv3dGrads<T> conv3d_backward(const Tensor<T>& input, const Tensor<T>& weights, i64 stride, i64 pad,
                               const Tensor<T>& grad_out) {
    const i64 Ci = input.shape[0];
    const i64 Co = weights.shape[0];
    const i64 k = weights.shape[2];
    const i64 Do = conv_out_dim(input.shape[1], k, stride, pad);
    const i64 Ho = conv_out_dim(input.shape[2], k, stride, pad);
    const i64 Wo = conv_out_dim(input.shape[3], k, stride, pad);
    if (grad_out.shape != Shape{Co, Do, Ho, Wo}) {
        throw DimensionError("conv3d_backward: grad_out shape " + shape_str(grad_out.shape) +
                             " != forward output shape " + shape_str(Shape{Co, Do, Ho, Wo}));
    }

    Tensor<T> padded_store;
    const Tensor<T>* src = &input;
    if (pad > 0) {
        padded_store = pad3d(input, pad);
        src = &padded_store;
    }
    const i64 Dp = src->shape[1], Hp = src->shape[2], Wp = src->shape[3];

    Conv3dGrads<T> g;
    g.weights = Tensor<T>(weights.shape);
    g.bias.assign(static_cast<std::size_t>(Co), T(0));
    Tensor<T> gin_padded({Ci, Dp, Hp, Wp});

    for (i64 co = 0; co < Co; ++co) {
        const T* go_ch = grad_out.values.data() + co * Do * Ho * Wo;
        T acc_bias = T(0);
        for (i64 i = 0; i < Do * Ho * Wo; ++i) {
            acc_bias += go_ch[i];
        }
        g.bias[static_cast<std::size_t>(co)] = acc_bias;

        for (i64 ci = 0; ci < Ci; ++ci) {
            for (i64 kd = 0; kd < k; ++kd) {
                for (i64 kh = 0; kh < k; ++kh) {
                    for (i64 kw = 0; kw < k; ++kw) {
                        const i64 widx = (((co * Ci + ci) * k + kd) * k + kh) * k + kw;
                        const T wv = weights.values[widx];
                        T acc_w = T(0);
                        for (i64 z = 0; z < Do; ++z) {
                            for (i64 y = 0; y < Ho; ++y) {
                                const T* in_row =
                                    src->values.data() +
                                    ((ci * Dp + z * stride + kd) * Hp + y * stride + kh) * Wp + kw;
                                T* gin_row =
                                    gin_padded.values.data() +
                                    ((ci * Dp + z * stride + kd) * Hp + y * stride + kh) * Wp + kw;
                                const T* go_row = go_ch + (z * Ho + y) * Wo;
                                if (stride == 1) {
                                    for (i64 x = 0; x < Wo; ++x) {
                                        acc_w += go_row[x] * in_row[x];
                                        gin_row[x] += wv * go_row[x];
                                    }
                                } else {
                                    for (i64 x = 0; x < Wo; ++x) {
                                        acc_w += go_row[x] * in_row[x * stride];
                                        gin_row[x * stride] += wv * go_row[x];
                                    }
                                }
                            }
                        }
                        g.weights.values[widx] += acc_w;
                    }
                }
            }
        }
    }

    g.input = pad > 0 ? unpad3d(gin_padded, pad, input.shape) : std::move(gin_padded);
    return g;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
    Tensor<T> out = x;
    for (T& v : out.values) {
        v = v > T(0) ? v : T(0);
    }
    return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
    check_same_shape(x, grad_out, "relu_backward");
    Tensor<T> g(x.shape);
    for (i64 i = 0; i < x.size(); ++i) {
        g.values[i] = x.values[i] > T(0) ? grad_out.values[i] : T(0);
    }
    return g;
}

template <typename T>
struct MaxPool3dResult {
    Tensor<T> out;
    std::vector<i64> argmax;  // flat input index per output voxel; lowest index wins ties
};

// 2x2x2 max pooling with stride 2. Spatial extents must be even.
template <typename T>
MaxPool3dResult<T> maxpool3d_forward(const Tensor<T>& x) {
    check_rank(x, 4, "maxpool3d");
    const i64 C = x.shape[0], D = x.shape[1], H = x.shape[2], W = x.shape[3];
    if (D % 2 || H % 2 || W % 2) {
        throw DimensionError("maxpool3d: spatial extents must be even, got " + shape_str(x.shape));
    }
    MaxPool3dResult<T> r;
    r.out = Tensor<T>({C, D / 2, H / 2, W / 2});
    r.argmax.resize(static_cast<std::size_t>(r.out.size()));
    i64 oi = 0;
    for (i64 c = 0; c < C; ++c) {
        for (i64 z = 0; z < D; z += 2) {
            for (i64 y = 0; y < H; y += 2) {
                for (i64 xw = 0; xw < W; xw += 2) {
                    T best = x.values[((c * D + z) * H + y) * W + xw];
                    i64 best_idx = ((c * D + z) * H + y) * W + xw;
                    for (i64 dz = 0; dz < 2; ++dz) {
                        for (i64 dy = 0; dy < 2; ++dy) {
                            for (i64 dx = 0; dx < 2; ++dx) {
                                const i64 idx = ((c * D + z + dz) * H + y + dy) * W + xw + dx;
                                if (x.values[idx] > best) {
                                    best = x.values[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                    }
                    r.out.values[oi] = best;
                    r.argmax[static_cast<std::size_t>(oi)] = best_idx;
                    ++oi;
                }
            }
        }
    }
    return r;
}

template <typename T>
Tensor<T> maxpool3d_backward(const Shape& input_shape, const std::vector<i64>& argmax,
                             const Tensor<T>& grad_out) {
    if (static_cast<i64>(argmax.size()) != grad_out.size()) {
        throw DimensionError("maxpool3d_backward: grad_out size does not match saved argmax");
    }
    Tensor<T> g(input_shape);
    for (i64 i = 0; i < grad_out.size(); ++i) {
        g.values[argmax[static_cast<std::size_t>(i)]] += grad_out.values[i];
    }
    return g;
}

// Nearest-neighbor x2 upsampling.
template <typename T>
Tensor<T> upsample3d_forward(const Tensor<T>& x) {
    check_rank(x, 4, "upsample3d");
    const i64 C = x.shape[0], D = x.shape[1], H = x.shape[2], W = x.shape[3];
    Tensor<T> out({C, D * 2, H * 2, W * 2});
    for (i64 c = 0; c < C; ++c) {
        for (i64 z = 0; z < D; ++z) {
            for (i64 y = 0; y < H; ++y) {
                const T* in_row = x.values.data() + ((c * D + z) * H + y) * W;
                for (i64 dz = 0; dz < 2; ++dz) {
                    for (i64 dy = 0; dy < 2; ++dy) {
                        T* out_row =
                            out.values.data() + ((c * D * 2 + z * 2 + dz) * H * 2 + y * 2 + dy) * W * 2;
                        for (i64 xw = 0; xw < W; ++xw) {
                            out_row[2 * xw] = in_row[xw];
                            out_row[2 * xw + 1] = in_row[xw];
                        }
                    }
                }
            }
        }
    }
    return out;
}

// Each parent receives the sum of its eight children.
template <typename T>
Tensor<T> upsample3d_backward(const Tensor<T>& grad_out) {
    check_rank(grad_out, 4, "upsample3d_backward");
    const i64 C = grad_out.shape[0], D2 = grad_out.shape[1], H2 = grad_out.shape[2], W2 = grad_out.shape[3];
    if (D2 % 2 || H2 % 2 || W2 % 2) {
        throw DimensionError("upsample3d_backward: grad extents must be even, got " + shape_str(grad_out.shape));
    }
    Tensor<T> g({C, D2 / 2, H2 / 2, W2 / 2});
    for (i64 c = 0; c < C; ++c) {
        for (i64 z = 0; z < D2; ++z) {
            for (i64 y = 0; y < H2; ++y) {
                const T* go_row = grad_out.values.data() + ((c * D2 + z) * H2 + y) * W2;
                T* g_row = g.values.data() + ((c * (D2 / 2) + z / 2) * (H2 / 2) + y / 2) * (W2 / 2);
                for (i64 xw = 0; xw < W2; ++xw) {
                    g_row[xw / 2] += go_row[xw];
                }
            }
        }
    }
    return g;
}

template <typename T>
struct BatchNorm3dCtx {
    Tensor<T> xhat;
    std::vector<T> invstd;
    bool train = false;
};

// Per-channel normalization over the spatial extent of a [C,D,H,W] tensor.
// Train mode uses the current statistics and updates the running buffers
// in-place: run += momentum * (batch - run). Eval mode uses the buffers.
template <typename T>
Tensor<T> batchnorm3d_forward(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                              Tensor<T>& running_mean, Tensor<T>& running_var, T momentum, T eps, bool train,
                              BatchNorm3dCtx<T>* ctx) {
    check_rank(x, 4, "batchnorm3d");
    const i64 C = x.shape[0];
    const i64 n = x.shape[1] * x.shape[2] * x.shape[3];
    if (gamma.shape != Shape{C} || beta.shape != Shape{C}) {
        throw DimensionError("batchnorm3d: gamma/beta must be shape [C]");
    }
    if (train && n == 0) {
        throw EmptyBatchError("batchnorm3d: cannot compute statistics over an empty batch");
    }

    std::vector<T> mean(static_cast<std::size_t>(C), T(0));
    std::vector<T> var(static_cast<std::size_t>(C), T(0));
    if (train) {
        for (i64 c = 0; c < C; ++c) {
            const T* ch = x.values.data() + c * n;
            T acc = T(0);
            for (i64 i = 0; i < n; ++i) {
                acc += ch[i];
            }
            mean[static_cast<std::size_t>(c)] = acc / static_cast<T>(n);
            T acc2 = T(0);
            for (i64 i = 0; i < n; ++i) {
                const T d = ch[i] - mean[static_cast<std::size_t>(c)];
                acc2 += d * d;
            }
            var[static_cast<std::size_t>(c)] = acc2 / static_cast<T>(n);
        }
        for (i64 c = 0; c < C; ++c) {
            running_mean.values[c] += momentum * (mean[static_cast<std::size_t>(c)] - running_mean.values[c]);
            running_var.values[c] += momentum * (var[static_cast<std::size_t>(c)] - running_var.values[c]);
        }
    } else {
        for (i64 c = 0; c < C; ++c) {
            mean[static_cast<std::size_t>(c)] = running_mean.values[c];
            var[static_cast<std::size_t>(c)] = running_var.values[c];
        }
    }

    Tensor<T> out(x.shape);
    Tensor<T> xhat(x.shape);
    std::vector<T> invstd(static_cast<std::size_t>(C));
    for (i64 c = 0; c < C; ++c) {
        invstd[static_cast<std::size_t>(c)] = T(1) / std::sqrt(var[static_cast<std::size_t>(c)] + eps);
        const T mu = mean[static_cast<std::size_t>(c)];
        const T is = invstd[static_cast<std::size_t>(c)];
        const T ga = gamma.values[c];
        const T be = beta.values[c];
        const T* ch = x.values.data() + c * n;
        T* xh = xhat.values.data() + c * n;
        T* oc = out.values.data() + c * n;
        for (i64 i = 0; i < n; ++i) {
            xh[i] = (ch[i] - mu) * is;
            oc[i] = xh[i] * ga + be;
        }
    }
    if (ctx) {
        ctx->xhat = std::move(xhat);
        ctx->invstd = std::move(invstd);
        ctx->train = train;
    }
    return out;
}

template <typename T>
struct BatchNorm3dGrads {
    Tensor<T> input;
    Tensor<T> gamma;
    Tensor<T> beta;
};

template <typename T>
BatchNorm3dGrads<T> batchnorm3d_backward(const BatchNorm3dCtx<T>& ctx, const Tensor<T>& gamma,
                                         const Tensor<T>& grad_out) {
    check_same_shape(ctx.xhat, grad_out, "batchnorm3d_backward");
    const i64 C = grad_out.shape[0];
    const i64 n = grad_out.shape[1] * grad_out.shape[2] * grad_out.shape[3];

    BatchNorm3dGrads<T> g;
    g.input = Tensor<T>(grad_out.shape);
    g.gamma = Tensor<T>({C});
    g.beta = Tensor<T>({C});

    for (i64 c = 0; c < C; ++c) {
        const T* go = grad_out.values.data() + c * n;
        const T* xh = ctx.xhat.values.data() + c * n;
        T* gi = g.input.values.data() + c * n;
        const T is = ctx.invstd[static_cast<std::size_t>(c)];
        const T ga = gamma.values[c];

        T sum_dy = T(0), sum_dy_xhat = T(0);
        for (i64 i = 0; i < n; ++i) {
            sum_dy += go[i];
            sum_dy_xhat += go[i] * xh[i];
        }
        g.beta.values[c] = sum_dy;
        g.gamma.values[c] = sum_dy_xhat;

        if (ctx.train) {
            const T inv_n = T(1) / static_cast<T>(n);
            for (i64 i = 0; i < n; ++i) {
                gi[i] = ga * is * inv_n * (static_cast<T>(n) * go[i] - sum_dy - xh[i] * sum_dy_xhat);
            }
        } else {
            for (i64 i = 0; i < n; ++i) {
                gi[i] = ga * is * go[i];
            }
        }
    }
    return g;
}

template <typename T>
Tensor<T> add_forward(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "add");
    Tensor<T> out(a.shape);
    for (i64 i = 0; i < a.size(); ++i) {
        out.values[i] = a.values[i] + b.values[i];
    }
    return out;
}

// Sum of squared differences over all elements.
template <typename T>
double mse_sum(const Tensor<T>& pred, const Tensor<T>& target) {
    check_same_shape(pred, target, "mse_sum");
    double acc = 0.0;
    for (i64 i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred.values[i]) - static_cast<double>(target.values[i]);
        acc += d * d;
    }
    return acc;
}

// d/dpred of scale * mse_sum = scale * 2 (pred - target).
template <typename T>
Tensor<T> mse_sum_backward(const Tensor<T>& pred, const Tensor<T>& target, T scale = T(1)) {
    check_same_shape(pred, target, "mse_sum_backward");
    Tensor<T> g(pred.shape);
    for (i64 i = 0; i < pred.size(); ++i) {
        g.values[i] = scale * T(2) * (pred.values[i] - target.values[i]);
    }
    return g;
}

}  // namespace ops
}  // namespace hpe

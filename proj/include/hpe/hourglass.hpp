#pragma once

// Stacked 3D hourglass network: a stride-2 stem, S hourglass blocks with
// residual skips, per-stack 1x1x1 joint heads (bone heads on all stacks but
// the last), and an inter-stack remix that folds the joint heatmaps back into
// the feature stream. Explicit forward/backward pairs over a ParamStore; no
// tape. A model instance is exclusively owned during forward/backward;
// read-only parameter sharing across concurrent eval forwards is safe.

#include <optional>
#include <type_traits>
#include <string>
#include <vector>

#include "hpe/ops.hpp"
#include "hpe/params.hpp"

namespace hpe {

enum class Mode { train, eval };

struct HourglassConfig {
    int input_res = 64;
    int output_res = 32;
    int stacks = 2;
    int channels = 128;
    int hg_depth = 3;  // pool/upsample levels inside each hourglass
    int joints = 21;
    int bones = 20;
    bool bone_heads_enabled = true;
    bool batchnorm_enabled = true;

    int stem_channels() const { return channels >= 2 ? channels / 2 : 1; }

    void validate() const {
        if (input_res != 2 * output_res) {
            throw ConfigError("hourglass config: input_res must be 2 * output_res");
        }
        if (stacks < 1 || channels < 1 || joints < 1 || bones < 0 || hg_depth < 1) {
            throw ConfigError("hourglass config: counts must be positive");
        }
        if (output_res >> hg_depth < 2) {
            throw ConfigError("hourglass config: output_res / 2^hg_depth must be >= 2");
        }
        if ((output_res & (output_res - 1)) != 0) {
            throw ConfigError("hourglass config: output_res must be a power of two");
        }
    }
};

template <typename T>
struct Conv3dLayer {
    i64 weight = -1;
    i64 bias = -1;
    int stride = 1;
    int pad = 0;

    struct Ctx {
        Tensor<T> input;
    };

    static Conv3dLayer build(ParamStore<T>& ps, const std::string& prefix, int cin, int cout, int k,
                             int stride, int pad, std::uint64_t seed, double init_scale = 1.0) {
        Conv3dLayer l;
        l.stride = stride;
        l.pad = pad;
        const i64 fan_in = static_cast<i64>(cin) * k * k * k;
        Tensor<T> w = he_normal_init<T>({cout, cin, k, k, k}, fan_in, seed, prefix + ".weight");
        if (init_scale != 1.0) {
            for (auto& v : w.values) {
                v = static_cast<T>(v * init_scale);
            }
        }
        l.weight = ps.add(prefix + ".weight", std::move(w));
        l.bias = ps.add(prefix + ".bias", Tensor<T>({cout}));
        return l;
    }

    Tensor<T> forward(const ParamStore<T>& ps, const Tensor<T>& x, Ctx* ctx) const {
        if (ctx) {
            ctx->input = x;
        }
        return ops::conv3d_forward(x, ps.at(weight).value, ps.at(bias).value.values, stride, pad);
    }

    Tensor<T> backward(ParamStore<T>& ps, const Ctx& ctx, const Tensor<T>& grad_out) const {
        auto g = ops::conv3d_backward(ctx.input, ps.at(weight).value, stride, pad, grad_out);
        ps.accumulate_grad(weight, g.weights);
        ps.accumulate_grad(bias, g.bias);
        return std::move(g.input);
    }
};

template <typename T>
struct BatchNorm3dLayer {
    i64 gamma = -1;
    i64 beta = -1;
    i64 run_mean = -1;
    i64 run_var = -1;
    T momentum = T(0.1);
    T eps = T(1e-5);

    using Ctx = ops::BatchNorm3dCtx<T>;

    static BatchNorm3dLayer build(ParamStore<T>& ps, const std::string& prefix, int channels) {
        BatchNorm3dLayer l;
        l.gamma = ps.add(prefix + ".gamma", Tensor<T>::full({channels}, T(1)));
        l.beta = ps.add(prefix + ".beta", Tensor<T>({channels}));
        l.run_mean = ps.add(prefix + ".run_mean", Tensor<T>({channels}), /*trainable=*/false);
        l.run_var = ps.add(prefix + ".run_var", Tensor<T>::full({channels}, T(1)), /*trainable=*/false);
        return l;
    }

    Tensor<T> forward(ParamStore<T>& ps, const Tensor<T>& x, Mode mode, Ctx* ctx) const {
        return ops::batchnorm3d_forward(x, ps.at(gamma).value, ps.at(beta).value, ps.at(run_mean).value,
                                        ps.at(run_var).value, momentum, eps, mode == Mode::train, ctx);
    }

    Tensor<T> backward(ParamStore<T>& ps, const Ctx& ctx, const Tensor<T>& grad_out) const {
        auto g = ops::batchnorm3d_backward(ctx, ps.at(gamma).value, grad_out);
        ps.accumulate_grad(gamma, g.gamma);
        ps.accumulate_grad(beta, g.beta);
        return std::move(g.input);
    }
};

// Pre-activation residual block: [norm ->] relu -> 3x3x3 conv -> [norm ->]
// relu -> 3x3x3 conv, plus identity skip (1x1x1 projection when the channel
// count changes).
template <typename T>
struct ResBlock {
    bool use_bn = true;
    BatchNorm3dLayer<T> bn1, bn2;
    Conv3dLayer<T> conv1, conv2;
    std::optional<Conv3dLayer<T>> proj;

    struct Ctx {
        typename BatchNorm3dLayer<T>::Ctx bn1c, bn2c;
        Tensor<T> pre1, pre2;  // relu inputs
        typename Conv3dLayer<T>::Ctx c1, c2;
        typename Conv3dLayer<T>::Ctx projc;
    };

    static ResBlock build(ParamStore<T>& ps, const std::string& prefix, int cin, int cout, bool use_bn,
                          std::uint64_t seed) {
        ResBlock r;
        r.use_bn = use_bn;
        if (use_bn) {
            r.bn1 = BatchNorm3dLayer<T>::build(ps, prefix + ".bn1", cin);
            r.bn2 = BatchNorm3dLayer<T>::build(ps, prefix + ".bn2", cout);
        }
        r.conv1 = Conv3dLayer<T>::build(ps, prefix + ".conv1", cin, cout, 3, 1, 1, seed);
        r.conv2 = Conv3dLayer<T>::build(ps, prefix + ".conv2", cout, cout, 3, 1, 1, seed);
        if (cin != cout) {
            r.proj = Conv3dLayer<T>::build(ps, prefix + ".proj", cin, cout, 1, 1, 0, seed);
        }
        return r;
    }

    Tensor<T> forward(ParamStore<T>& ps, const Tensor<T>& x, Mode mode, Ctx* ctx) const {
        Tensor<T> t = use_bn ? bn1.forward(ps, x, mode, ctx ? &ctx->bn1c : nullptr) : x;
        if (ctx) {
            ctx->pre1 = t;
        }
        t = ops::relu_forward(t);
        t = conv1.forward(ps, t, ctx ? &ctx->c1 : nullptr);
        if (use_bn) {
            t = bn2.forward(ps, t, mode, ctx ? &ctx->bn2c : nullptr);
        }
        if (ctx) {
            ctx->pre2 = t;
        }
        t = ops::relu_forward(t);
        t = conv2.forward(ps, t, ctx ? &ctx->c2 : nullptr);
        Tensor<T> skip = proj ? proj->forward(ps, x, ctx ? &ctx->projc : nullptr) : x;
        return ops::add_forward(t, skip);
    }

    Tensor<T> backward(ParamStore<T>& ps, const Ctx& ctx, const Tensor<T>& grad_out) const {
        Tensor<T> g = conv2.backward(ps, ctx.c2, grad_out);
        g = ops::relu_backward(ctx.pre2, g);
        if (use_bn) {
            g = bn2.backward(ps, ctx.bn2c, g);
        }
        g = conv1.backward(ps, ctx.c1, g);
        g = ops::relu_backward(ctx.pre1, g);
        if (use_bn) {
            g = bn1.backward(ps, ctx.bn1c, g);
        }
        Tensor<T> gskip = proj ? proj->backward(ps, ctx.projc, grad_out) : grad_out;
        return ops::add_forward(g, gskip);
    }
};

// Newell-style hourglass: at each level an up branch (residual block at the
// current scale) and a low branch (pool -> residual -> recurse -> residual ->
// x2 upsample), merged by addition.
template <typename T>
struct HourglassBlock {
    int depth = 0;
    struct Level {
        ResBlock<T> up, low1, low3;
    };
    std::vector<Level> levels;
    ResBlock<T> bottom;

    struct LevelCtx {
        typename ResBlock<T>::Ctx up, low1, low3;
        std::vector<i64> pool_argmax;
        Shape pool_in_shape;
    };
    struct Ctx {
        std::vector<LevelCtx> levels;
        typename ResBlock<T>::Ctx bottom;
    };

    static HourglassBlock build(ParamStore<T>& ps, const std::string& prefix, int channels, int depth,
                                bool use_bn, std::uint64_t seed) {
        HourglassBlock hg;
        hg.depth = depth;
        for (int l = 0; l < depth; ++l) {
            const std::string lp = prefix + ".l" + std::to_string(l);
            Level lvl;
            lvl.up = ResBlock<T>::build(ps, lp + ".up", channels, channels, use_bn, seed);
            lvl.low1 = ResBlock<T>::build(ps, lp + ".low1", channels, channels, use_bn, seed);
            lvl.low3 = ResBlock<T>::build(ps, lp + ".low3", channels, channels, use_bn, seed);
            hg.levels.push_back(std::move(lvl));
        }
        hg.bottom = ResBlock<T>::build(ps, prefix + ".bottom", channels, channels, use_bn, seed);
        return hg;
    }

    Tensor<T> forward(ParamStore<T>& ps, const Tensor<T>& x, Mode mode, Ctx* ctx) const {
        if (ctx) {
            ctx->levels.resize(static_cast<std::size_t>(depth));
        }
        return forward_level(ps, x, mode, ctx, 0);
    }

    Tensor<T> backward(ParamStore<T>& ps, const Ctx& ctx, const Tensor<T>& grad_out) const {
        return backward_level(ps, ctx, grad_out, 0);
    }

private:
    Tensor<T> forward_level(ParamStore<T>& ps, const Tensor<T>& x, Mode mode, Ctx* ctx, int l) const {
        LevelCtx* lc = ctx ? &ctx->levels[static_cast<std::size_t>(l)] : nullptr;
        const Level& lvl = levels[static_cast<std::size_t>(l)];
        Tensor<T> up = lvl.up.forward(ps, x, mode, lc ? &lc->up : nullptr);
        auto pooled = ops::maxpool3d_forward(x);
        if (lc) {
            lc->pool_argmax = std::move(pooled.argmax);
            lc->pool_in_shape = x.shape;
        }
        Tensor<T> low = lvl.low1.forward(ps, pooled.out, mode, lc ? &lc->low1 : nullptr);
        Tensor<T> mid = (l + 1 < depth) ? forward_level(ps, low, mode, ctx, l + 1)
                                        : bottom.forward(ps, low, mode, ctx ? &ctx->bottom : nullptr);
        Tensor<T> low3 = lvl.low3.forward(ps, mid, mode, lc ? &lc->low3 : nullptr);
        return ops::add_forward(up, ops::upsample3d_forward(low3));
    }

    Tensor<T> backward_level(ParamStore<T>& ps, const Ctx& ctx, const Tensor<T>& grad_out, int l) const {
        const LevelCtx& lc = ctx.levels[static_cast<std::size_t>(l)];
        const Level& lvl = levels[static_cast<std::size_t>(l)];
        Tensor<T> g_up = lvl.up.backward(ps, lc.up, grad_out);
        Tensor<T> g_low3 = ops::upsample3d_backward(grad_out);
        Tensor<T> g_mid = lvl.low3.backward(ps, lc.low3, g_low3);
        Tensor<T> g_low = (l + 1 < depth) ? backward_level(ps, ctx, g_mid, l + 1)
                                          : bottom.backward(ps, ctx.bottom, g_mid);
        Tensor<T> g_pool = lvl.low1.backward(ps, lc.low1, g_low);
        Tensor<T> g_x = ops::maxpool3d_backward(lc.pool_in_shape, lc.pool_argmax, g_pool);
        return ops::add_forward(g_up, g_x);
    }
};

// Two consecutive 1x1x1 convs; the first carries a ReLU, the last is linear.
template <typename T>
struct Head {
    Conv3dLayer<T> conv1, conv2;

    struct Ctx {
        typename Conv3dLayer<T>::Ctx c1, c2;
        Tensor<T> pre;  // relu input
    };

    static Head build(ParamStore<T>& ps, const std::string& prefix, int channels, int out_channels,
                      std::uint64_t seed) {
        Head h;
        h.conv1 = Conv3dLayer<T>::build(ps, prefix + ".conv1", channels, channels, 1, 1, 0, seed);
        // Damped output layer: the trunk's additive skips inflate feature
        // variance well past the [0,1] target scale, so the regression conv
        // starts near zero instead of at full He magnitude.
        h.conv2 = Conv3dLayer<T>::build(ps, prefix + ".conv2", channels, out_channels, 1, 1, 0, seed, 0.01);
        return h;
    }

    Tensor<T> forward(ParamStore<T>& ps, const Tensor<T>& x, Ctx* ctx) const {
        Tensor<T> t = conv1.forward(ps, x, ctx ? &ctx->c1 : nullptr);
        if (ctx) {
            ctx->pre = t;
        }
        t = ops::relu_forward(t);
        return conv2.forward(ps, t, ctx ? &ctx->c2 : nullptr);
    }

    Tensor<T> backward(ParamStore<T>& ps, const Ctx& ctx, const Tensor<T>& grad_out) const {
        Tensor<T> g = conv2.backward(ps, ctx.c2, grad_out);
        g = ops::relu_backward(ctx.pre, g);
        return conv1.backward(ps, ctx.c1, g);
    }
};

template <typename T>
struct HourglassModel {
    HourglassConfig config;
    std::uint64_t init_seed = 0;
    ParamStore<T> params;

    Conv3dLayer<T> stem_conv;
    ResBlock<T> stem_res;

    struct Stack {
        HourglassBlock<T> hg;
        ResBlock<T> res;
        Head<T> head_joints;
        std::optional<Head<T>> head_bones;
        std::optional<Conv3dLayer<T>> remix;
    };
    std::vector<Stack> stacks;

    bool has_bone_head(int s) const {
        return config.bone_heads_enabled && config.bones > 0 && s + 1 < config.stacks;
    }
};

// Per-stack network outputs: joints[s] for s = 0..S-1, bones[s] for
// s = 0..S-2 (present only when the model has bone heads).
template <typename T>
struct StackOutputs {
    std::vector<Tensor<T>> joints;
    std::vector<Tensor<T>> bones;
};

template <typename T>
struct ForwardTrace {
    bool valid = false;
    typename Conv3dLayer<T>::Ctx stem_conv;
    typename ResBlock<T>::Ctx stem_res;
    struct StackCtx {
        typename HourglassBlock<T>::Ctx hg;
        typename ResBlock<T>::Ctx res;
        typename Head<T>::Ctx head_joints;
        typename Head<T>::Ctx head_bones;
        typename Conv3dLayer<T>::Ctx remix;
    };
    std::vector<StackCtx> stacks;
};

template <typename T>
HourglassModel<T> build_model(const HourglassConfig& config, std::uint64_t seed) {
    config.validate();
    HourglassModel<T> m;
    m.config = config;
    m.init_seed = seed;
    const int C = config.channels;
    const bool bn = config.batchnorm_enabled;

    m.stem_conv = Conv3dLayer<T>::build(m.params, "stem.conv", 1, config.stem_channels(), 3, 2, 1, seed);
    m.stem_res = ResBlock<T>::build(m.params, "stem.res", config.stem_channels(), C, bn, seed);

    for (int s = 0; s < config.stacks; ++s) {
        const std::string sp = "stack" + std::to_string(s);
        typename HourglassModel<T>::Stack st;
        st.hg = HourglassBlock<T>::build(m.params, sp + ".hg", C, config.hg_depth, bn, seed);
        st.res = ResBlock<T>::build(m.params, sp + ".res", C, C, bn, seed);
        st.head_joints = Head<T>::build(m.params, sp + ".head_j", C, config.joints, seed);
        if (m.has_bone_head(s)) {
            st.head_bones = Head<T>::build(m.params, sp + ".head_b", C, config.bones, seed);
        }
        if (s + 1 < config.stacks) {
            st.remix = Conv3dLayer<T>::build(m.params, sp + ".remix", config.joints, C, 1, 1, 0, seed);
        }
        m.stacks.push_back(std::move(st));
    }
    return m;
}

// Runs the network on one voxelized sample shaped [1, R_in, R_in, R_in].
// Pass a trace to enable a later backward; eval-mode calls without a trace
// allocate no saved state.
template <typename T>
StackOutputs<T> forward(HourglassModel<T>& model, const Tensor<T>& voxels, Mode mode,
                        std::type_identity_t<ForwardTrace<T>>* trace = nullptr) {
    const int R = model.config.input_res;
    if (voxels.shape != Shape{1, R, R, R}) {
        throw DimensionError("hourglass forward: expected input [1," + std::to_string(R) + "," +
                             std::to_string(R) + "," + std::to_string(R) + "], got " +
                             shape_str(voxels.shape));
    }
    if (trace) {
        trace->stacks.resize(model.stacks.size());
    }

    ParamStore<T>& ps = model.params;
    Tensor<T> t = model.stem_conv.forward(ps, voxels, trace ? &trace->stem_conv : nullptr);
    Tensor<T> cur = model.stem_res.forward(ps, t, mode, trace ? &trace->stem_res : nullptr);

    StackOutputs<T> out;
    for (std::size_t s = 0; s < model.stacks.size(); ++s) {
        auto& st = model.stacks[s];
        auto* sc = trace ? &trace->stacks[s] : nullptr;
        Tensor<T> hg_out = st.hg.forward(ps, cur, mode, sc ? &sc->hg : nullptr);
        Tensor<T> feat = st.res.forward(ps, hg_out, mode, sc ? &sc->res : nullptr);
        Tensor<T> jmap = st.head_joints.forward(ps, feat, sc ? &sc->head_joints : nullptr);
        if (st.head_bones) {
            out.bones.push_back(st.head_bones->forward(ps, feat, sc ? &sc->head_bones : nullptr));
        }
        if (st.remix) {
            Tensor<T> mixed = st.remix->forward(ps, jmap, sc ? &sc->remix : nullptr);
            cur = ops::add_forward(ops::add_forward(cur, feat), mixed);
        }
        out.joints.push_back(std::move(jmap));
    }
    if (trace) {
        trace->valid = true;
    }
    return out;
}

// Accumulates parameter gradients for the given per-stack output cotangents
// and returns the gradient with respect to the input voxels. Bone gradient
// slots must match the model's bone heads; pass empty tensors to skip a
// stack's bone contribution.
template <typename T>
Tensor<T> backward(HourglassModel<T>& model, const ForwardTrace<T>& trace,
                   const StackOutputs<T>& output_grads) {
    if (!trace.valid) {
        throw StateError("hourglass backward: no forward trace; run forward(mode, trace) first");
    }
    const int S = model.config.stacks;
    if (static_cast<int>(output_grads.joints.size()) != S) {
        throw DimensionError("hourglass backward: need one joint gradient per stack");
    }
    std::size_t bone_slots = 0;
    for (int s = 0; s < S; ++s) {
        bone_slots += model.has_bone_head(s) ? 1 : 0;
    }
    if (output_grads.bones.size() != bone_slots) {
        throw DimensionError("hourglass backward: bone gradient count does not match bone heads");
    }

    ParamStore<T>& ps = model.params;
    Tensor<T> g_next;  // gradient wrt the running feature stream entering stack s+1
    for (int s = S - 1; s >= 0; --s) {
        auto& st = model.stacks[static_cast<std::size_t>(s)];
        const auto& sc = trace.stacks[static_cast<std::size_t>(s)];

        Tensor<T> g_jmap = output_grads.joints[static_cast<std::size_t>(s)];
        Tensor<T> g_feat;
        if (st.remix) {
            // cur_{s+1} = cur_s + feat_s + remix(jmap_s)
            Tensor<T> g_mix = st.remix->backward(ps, sc.remix, g_next);
            g_jmap = ops::add_forward(g_jmap, g_mix);
            g_feat = g_next;
        }

        Tensor<T> g_from_j = st.head_joints.backward(ps, sc.head_joints, g_jmap);
        g_feat = g_feat.size() ? ops::add_forward(g_feat, g_from_j) : std::move(g_from_j);
        if (st.head_bones) {
            const Tensor<T>& gb = output_grads.bones[static_cast<std::size_t>(s)];
            if (gb.size()) {
                Tensor<T> g_from_b = st.head_bones->backward(ps, sc.head_bones, gb);
                g_feat = ops::add_forward(g_feat, g_from_b);
            }
        }

        Tensor<T> g_hg_out = st.res.backward(ps, sc.res, g_feat);
        Tensor<T> g_cur = st.hg.backward(ps, sc.hg, g_hg_out);
        if (st.remix) {
            g_cur = ops::add_forward(g_cur, g_next);
        }
        g_next = std::move(g_cur);
    }

    Tensor<T> g_stem = model.stem_res.backward(ps, trace.stem_res, g_next);
    return model.stem_conv.backward(ps, trace.stem_conv, g_stem);
}

}  // namespace hpe

#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <vector>

#include "hpe/checkpoint.hpp"
#include "hpe/heatmap_targets.hpp"
#include "hpe/hourglass.hpp"
#include "hpe/skeleton.hpp"
#include "hpe/voxel_geom.hpp"

namespace hpe {

struct TrainConfig {
    double lr_init = 1e-5;
    double lr_decay_factor = 0.3;
    int lr_decay_every_epochs = 5;
    int batch_size = 16;
    int epochs = 20;
    double rmsprop_alpha = 0.99;
    double rmsprop_eps = 1e-8;
    bool bone_loss_enabled = true;
    std::uint64_t seed = 1;
    double min_side_mm = 100.0;
    bool shuffle = true;

    void validate() const {
        if (lr_init <= 0.0) {
            throw ConfigError("train config: lr_init must be positive");
        }
        if (lr_decay_factor <= 0.0 || lr_decay_factor > 1.0) {
            throw ConfigError("train config: lr_decay_factor must be in (0, 1]");
        }
        if (lr_decay_every_epochs < 1 || batch_size < 1 || epochs < 0) {
            throw ConfigError("train config: invalid schedule/batch/epoch counts");
        }
    }
};

struct AugmentConfig {
    double rotation_range_deg = 30.0;  // symmetric: U(-range, +range)
    double aspect_min = 0.8;
    double aspect_max = 1.2;
    bool enabled = true;

    void validate() const {
        if (rotation_range_deg < 0.0) {
            throw ConfigError("augment config: rotation range must be non-negative");
        }
        if (aspect_min <= 0.0 || aspect_max < aspect_min) {
            throw ConfigError("augment config: aspect range must be positive and ordered");
        }
    }
};

// lr = lr_init * decay^floor(epoch / every)
inline double lr_schedule(int epoch, const TrainConfig& cfg) {
    return cfg.lr_init * std::pow(cfg.lr_decay_factor, epoch / cfg.lr_decay_every_epochs);
}

struct AugmentDraw {
    double theta_rad = 0.0;
    double aspect_x = 1.0;
    double aspect_y = 1.0;

    bool is_identity() const { return theta_rad == 0.0 && aspect_x == 1.0 && aspect_y == 1.0; }
};

AugmentDraw draw_augment(const AugmentConfig& cfg, std::mt19937_64& rng);

// In-plane rotation about the cloud centroid plus independent x/y scaling
// about the same pivot; z untouched. The identity draw returns the inputs
// bit-for-bit.
std::pair<PointCloud, Pose> apply_augment(const PointCloud& cloud, const Pose& pose,
                                          const AugmentDraw& draw);

std::pair<PointCloud, Pose> augment(const PointCloud& cloud, const Pose& pose, const AugmentConfig& cfg,
                                    std::mt19937_64& rng);

// ---- losses: sums of squared voxel differences with intermediate supervision ----

// Sum over all stacks, joints, and voxels of |pred - target|^2.
template <typename T>
double loss_joints(std::span<const Tensor<T>> preds, const Tensor<T>& target) {
    double acc = 0.0;
    for (const auto& p : preds) {
        acc += ops::mse_sum(p, target);
    }
    return acc;
}

template <typename T>
std::vector<Tensor<T>> loss_joints_backward(std::span<const Tensor<T>> preds, const Tensor<T>& target,
                                            T scale = T(1)) {
    std::vector<Tensor<T>> grads;
    grads.reserve(preds.size());
    for (const auto& p : preds) {
        grads.push_back(ops::mse_sum_backward(p, target, scale));
    }
    return grads;
}

// Identical sum over the intermediate stacks only (the bone maps already
// exist just for stacks 1..S-1).
template <typename T>
double loss_bones(std::span<const Tensor<T>> preds, const Tensor<T>& target) {
    double acc = 0.0;
    for (const auto& p : preds) {
        acc += ops::mse_sum(p, target);
    }
    return acc;
}

template <typename T>
std::vector<Tensor<T>> loss_bones_backward(std::span<const Tensor<T>> preds, const Tensor<T>& target,
                                           T scale = T(1)) {
    return loss_joints_backward(preds, target, scale);
}

// ---- RMSProp ----

// Per-parameter mean-square accumulators keyed by parameter name.
template <typename T>
struct RmsPropState {
    std::vector<Tensor<T>> v;  // parallel to the trainable entries of the store
    std::vector<std::string> names;
    i64 step = 0;

    static RmsPropState init(const ParamStore<T>& ps) {
        RmsPropState s;
        for (const auto& p : ps.entries()) {
            if (p.trainable) {
                s.v.push_back(Tensor<T>(p.value.shape));
                s.names.push_back(p.name);
            }
        }
        return s;
    }
};

// v <- alpha v + (1 - alpha) g^2; p <- p - lr g / (sqrt(v) + eps).
// Gradients are zeroed afterwards. `frozen` names are skipped entirely.
template <typename T>
void rmsprop_step(ParamStore<T>& ps, RmsPropState<T>& state, double lr, const TrainConfig& cfg,
                  const std::vector<std::string>& frozen = {}) {
    const T alpha = static_cast<T>(cfg.rmsprop_alpha);
    const T eps = static_cast<T>(cfg.rmsprop_eps);
    const T lr_t = static_cast<T>(lr);
    std::size_t vi = 0;
    for (auto& p : ps.entries()) {
        if (!p.trainable) {
            continue;
        }
        Tensor<T>& v = state.v[vi];
        if (state.names[vi] != p.name) {
            throw StateError("rmsprop state does not match parameter store at '" + p.name + "'");
        }
        ++vi;
        const bool skip =
            std::find(frozen.begin(), frozen.end(), p.name) != frozen.end() ||
            std::any_of(frozen.begin(), frozen.end(),
                        [&](const std::string& f) { return p.name.rfind(f, 0) == 0; });
        for (i64 i = 0; i < p.value.size(); ++i) {
            const T g = p.value.grad[static_cast<std::size_t>(i)];
            if (!std::isfinite(static_cast<double>(g))) {
                throw TrainingDivergenceError("non-finite gradient in parameter '" + p.name + "'");
            }
            v.values[i] = alpha * v.values[i] + (T(1) - alpha) * g * g;
            if (!skip) {
                p.value.values[i] -= lr_t * g / (std::sqrt(v.values[i]) + eps);
            }
        }
        p.value.zero_grad();
    }
    ++state.step;
}

inline constexpr const char* kOptStateMagic = "HG3DOPTS";

template <typename T>
void save_rmsprop_state(const RmsPropState<T>& state, const std::filesystem::path& path) {
    BlobFile f;
    f.magic = kOptStateMagic;
    f.meta_json = std::string("{\"format\":\"hg3d-rmsprop\",\"step\":") + std::to_string(state.step) + "}";
    for (std::size_t i = 0; i < state.v.size(); ++i) {
        f.blobs.push_back(tensor_blob(state.names[i], state.v[i]));
    }
    write_blob_file(path, f);
}

template <typename T>
RmsPropState<T> load_rmsprop_state(const ParamStore<T>& ps, const std::filesystem::path& path) {
    BlobFile f = read_blob_file(path, kOptStateMagic, 1);
    RmsPropState<T> state = RmsPropState<T>::init(ps);
    if (f.blobs.size() != state.v.size()) {
        throw CheckpointError(path.string() + ": optimizer state blob count mismatch");
    }
    for (std::size_t i = 0; i < f.blobs.size(); ++i) {
        if (f.blobs[i].name != state.names[i]) {
            throw CheckpointError(path.string() + ": optimizer state names do not match the model");
        }
        blob_into_tensor(f.blobs[i], state.v[i], "load_rmsprop_state");
    }
    const auto pos = f.meta_json.find("\"step\":");
    if (pos != std::string::npos) {
        state.step = std::atoll(f.meta_json.c_str() + pos + 7);
    }
    return state;
}

// ---- sample preparation and the epoch loop ----

struct TrainSample {
    PointCloud cloud;
    Pose pose;
};

template <typename T>
struct PreparedSample {
    Tensor<T> input;         // [1, R_in^3] binary occupancy
    Tensor<T> joint_target;  // [J, R_out^3]
    Tensor<T> bone_target;   // [B, R_out^3]
    GridGeom out_grid;
};

// Cube crop from the (possibly augmented) cloud, binary voxelization at the
// input resolution, Gaussian targets on the matching output-resolution grid.
template <typename T>
PreparedSample<T> prepare_sample(const PointCloud& cloud, const Pose& pose, const Skeleton& skeleton,
                                 int input_res, int output_res, double min_side_mm) {
    const CubeCrop cube = compute_cube(cloud, min_side_mm);
    const VoxelGrid grid = voxelize(cloud, cube, input_res);

    PreparedSample<T> s;
    s.out_grid = grid_for_cube(cube, output_res);
    s.input = Tensor<T>({1, input_res, input_res, input_res});
    for (std::size_t i = 0; i < grid.occupancy.size(); ++i) {
        s.input.values[i] = static_cast<T>(grid.occupancy[i]);
    }
    const HeatmapVolume jt = joint_targets(pose, s.out_grid);
    s.joint_target = Tensor<T>({skeleton.joint_count(), output_res, output_res, output_res});
    for (std::size_t i = 0; i < jt.values.size(); ++i) {
        s.joint_target.values[i] = static_cast<T>(jt.values[i]);
    }
    const HeatmapVolume bt = bone_targets(pose, skeleton, s.out_grid);
    s.bone_target = Tensor<T>({skeleton.bone_count(), output_res, output_res, output_res});
    for (std::size_t i = 0; i < bt.values.size(); ++i) {
        s.bone_target.values[i] = static_cast<T>(bt.values[i]);
    }
    return s;
}

// Augment-then-prepare with the redraw-once contract: a draw whose joints
// land more than one voxel outside the recomputed grid is retried once, then
// the sample is used unaugmented.
template <typename T>
PreparedSample<T> prepare_sample_augmented(const TrainSample& raw, const Skeleton& skeleton, int input_res,
                                           int output_res, double min_side_mm, const AugmentConfig& aug,
                                           std::mt19937_64& rng) {
    if (aug.enabled) {
        for (int attempt = 0; attempt < 2; ++attempt) {
            auto [cloud, pose] = augment(raw.cloud, raw.pose, aug, rng);
            try {
                return prepare_sample<T>(cloud, pose, skeleton, input_res, output_res, min_side_mm);
            } catch (const OutOfVolumeError&) {
                // redraw
            }
        }
    }
    return prepare_sample<T>(raw.cloud, raw.pose, skeleton, input_res, output_res, min_side_mm);
}

struct StepLog {
    int epoch = 0;
    i64 step = 0;
    double lr = 0.0;
    double loss_joints = 0.0;  // batch mean of per-sample sums
    double loss_bones = 0.0;
    double loss_total = 0.0;
};

inline void write_step_log(std::ostream& os, const StepLog& s) {
    os << "epoch " << s.epoch << " step " << s.step << " lr " << s.lr << " Lj " << s.loss_joints << " Lb "
       << s.loss_bones << " L " << s.loss_total << "\n";
}

struct TrainHooks {
    std::ostream* log_sink = nullptr;
    i64 max_steps = -1;  // stop after this many optimizer steps when >= 0
};

// Full training loop: epochs x batches of forward / loss / backward /
// rmsprop_step under the decayed learning rate. Deterministic for a fixed
// seed: shuffling, augmentation draws, and gradient accumulation all run in a
// fixed single-threaded order.
template <typename T>
std::vector<StepLog> train(const std::vector<TrainSample>& data, const Skeleton& skeleton,
                           HourglassModel<T>& model, const TrainConfig& cfg, const AugmentConfig& aug,
                           std::type_identity_t<RmsPropState<T>>* opt_state = nullptr,
                           const TrainHooks& hooks = {}, int start_epoch = 0) {
    cfg.validate();
    aug.validate();
    if (data.empty()) {
        throw ConfigError("train: dataset is empty");
    }
    if (skeleton.joint_count() != model.config.joints || skeleton.bone_count() != model.config.bones) {
        throw DimensionError("train: skeleton (" + std::to_string(skeleton.joint_count()) + " joints, " +
                             std::to_string(skeleton.bone_count()) + " bones) does not match model config");
    }

    RmsPropState<T> local_state;
    RmsPropState<T>& state = opt_state ? *opt_state : local_state;
    if (!opt_state) {
        local_state = RmsPropState<T>::init(model.params);
    }

    const int R_in = model.config.input_res;
    const int R_out = model.config.output_res;
    const bool use_bones = cfg.bone_loss_enabled && model.config.bone_heads_enabled &&
                           model.config.bones > 0 && model.config.stacks > 1;

    // Static pipeline: without augmentation every sample voxelizes the same
    // way each epoch, so prepare once up front.
    std::vector<PreparedSample<T>> prepared;
    if (!aug.enabled) {
        prepared.reserve(data.size());
        for (const auto& s : data) {
            prepared.push_back(
                prepare_sample<T>(s.cloud, s.pose, skeleton, R_in, R_out, cfg.min_side_mm));
        }
    }

    std::mt19937_64 aug_rng(mix_seed(cfg.seed, "augment"));
    std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, "shuffle"));

    std::vector<StepLog> logs;
    ForwardTrace<T> trace;
    i64 global_step = 0;
    bool stop = false;
    for (int epoch = start_epoch; epoch < cfg.epochs && !stop; ++epoch) {
        const double lr = lr_schedule(epoch, cfg);
        std::vector<std::size_t> order(data.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
            order[i] = i;
        }
        if (cfg.shuffle) {
            std::shuffle(order.begin(), order.end(), shuffle_rng);
        }

        for (std::size_t batch_start = 0; batch_start < order.size() && !stop;
             batch_start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t batch_end =
                std::min(order.size(), batch_start + static_cast<std::size_t>(cfg.batch_size));
            const i64 batch_n = static_cast<i64>(batch_end - batch_start);
            const T inv_batch = T(1) / static_cast<T>(batch_n);

            double batch_lj = 0.0, batch_lb = 0.0;
            for (std::size_t bi = batch_start; bi < batch_end; ++bi) {
                const TrainSample& raw = data[order[bi]];
                PreparedSample<T> fresh;
                const PreparedSample<T>* sample = nullptr;
                if (aug.enabled) {
                    fresh = prepare_sample_augmented<T>(raw, skeleton, R_in, R_out, cfg.min_side_mm, aug,
                                                        aug_rng);
                    sample = &fresh;
                } else {
                    sample = &prepared[order[bi]];
                }

                StackOutputs<T> out = forward(model, sample->input, Mode::train, &trace);
                const double lj = loss_joints<T>(out.joints, sample->joint_target);
                const double lb =
                    use_bones ? loss_bones<T>(out.bones, sample->bone_target) : 0.0;
                batch_lj += lj;
                batch_lb += lb;

                StackOutputs<T> grads;
                grads.joints = loss_joints_backward<T>(out.joints, sample->joint_target, inv_batch);
                if (use_bones) {
                    grads.bones = loss_bones_backward<T>(out.bones, sample->bone_target, inv_batch);
                } else {
                    for (const auto& b : out.bones) {
                        grads.bones.push_back(Tensor<T>());  // empty: no bone gradient flows
                        (void)b;
                    }
                }
                backward(model, trace, grads);
            }

            StepLog log;
            log.epoch = epoch;
            log.step = global_step;
            log.lr = lr;
            log.loss_joints = batch_lj / static_cast<double>(batch_n);
            log.loss_bones = batch_lb / static_cast<double>(batch_n);
            log.loss_total = log.loss_joints + log.loss_bones;
            if (!std::isfinite(log.loss_total)) {
                throw TrainingDivergenceError("non-finite loss at epoch " + std::to_string(epoch) +
                                              " step " + std::to_string(global_step));
            }
            rmsprop_step(model.params, state, lr, cfg);
            logs.push_back(log);
            if (hooks.log_sink) {
                write_step_log(*hooks.log_sink, log);
            }
            ++global_step;
            if (hooks.max_steps >= 0 && global_step >= hooks.max_steps) {
                stop = true;
            }
        }
    }
    return logs;
}

}  // namespace hpe

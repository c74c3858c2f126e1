// Command-line surface for the volumetric hand-pose engine: dataset
// generation, voxelization, training, prediction, evaluation, gradient
// checking, and the decode-K sweep.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>

#include "hpe/checkpoint.hpp"
#include "hpe/config.hpp"
#include "hpe/decode_eval.hpp"
#include "hpe/gradcheck.hpp"
#include "hpe/heatmap_targets.hpp"
#include "hpe/hourglass.hpp"
#include "hpe/msra_io.hpp"
#include "hpe/synth.hpp"
#include "hpe/trainer.hpp"

namespace fs = std::filesystem;
using namespace hpe;

namespace {

struct CliOptions {
    std::string config_path;
    HourglassConfig model;
    TrainConfig train;
    AugmentConfig aug;
    int k = 9;
    std::string precision = "narrow";
    bool deterministic = false;
    bool print_config = false;
};

const KeyValueConfig::Schema kConfigSchema = {
    {"stacks", KeyValueConfig::Type::integer},
    {"channels", KeyValueConfig::Type::integer},
    {"input_res", KeyValueConfig::Type::integer},
    {"output_res", KeyValueConfig::Type::integer},
    {"hg_depth", KeyValueConfig::Type::integer},
    {"joints", KeyValueConfig::Type::integer},
    {"bones", KeyValueConfig::Type::integer},
    {"bone_heads", KeyValueConfig::Type::boolean},
    {"batchnorm", KeyValueConfig::Type::boolean},
    {"lr_init", KeyValueConfig::Type::real},
    {"lr_decay_factor", KeyValueConfig::Type::real},
    {"lr_decay_every", KeyValueConfig::Type::integer},
    {"batch_size", KeyValueConfig::Type::integer},
    {"epochs", KeyValueConfig::Type::integer},
    {"rmsprop_alpha", KeyValueConfig::Type::real},
    {"rmsprop_eps", KeyValueConfig::Type::real},
    {"bone_loss", KeyValueConfig::Type::boolean},
    {"seed", KeyValueConfig::Type::integer},
    {"min_side_mm", KeyValueConfig::Type::real},
    {"shuffle", KeyValueConfig::Type::boolean},
    {"augment", KeyValueConfig::Type::boolean},
    {"rotation_range_deg", KeyValueConfig::Type::real},
    {"aspect_min", KeyValueConfig::Type::real},
    {"aspect_max", KeyValueConfig::Type::real},
    {"k", KeyValueConfig::Type::integer},
    {"precision", KeyValueConfig::Type::text},
    {"deterministic", KeyValueConfig::Type::boolean},
};

void load_config_file(CliOptions& opt) {
    if (opt.config_path.empty()) {
        return;
    }
    const auto cfg = KeyValueConfig::parse_file(opt.config_path);
    cfg.validate(kConfigSchema);
    opt.model.stacks = static_cast<int>(cfg.get_int("stacks", opt.model.stacks));
    opt.model.channels = static_cast<int>(cfg.get_int("channels", opt.model.channels));
    opt.model.input_res = static_cast<int>(cfg.get_int("input_res", opt.model.input_res));
    opt.model.output_res = static_cast<int>(cfg.get_int("output_res", opt.model.input_res / 2));
    opt.model.hg_depth = static_cast<int>(cfg.get_int("hg_depth", opt.model.hg_depth));
    opt.model.joints = static_cast<int>(cfg.get_int("joints", opt.model.joints));
    opt.model.bones = static_cast<int>(cfg.get_int("bones", opt.model.bones));
    opt.model.bone_heads_enabled = cfg.get_bool("bone_heads", opt.model.bone_heads_enabled);
    opt.model.batchnorm_enabled = cfg.get_bool("batchnorm", opt.model.batchnorm_enabled);
    opt.train.lr_init = cfg.get_real("lr_init", opt.train.lr_init);
    opt.train.lr_decay_factor = cfg.get_real("lr_decay_factor", opt.train.lr_decay_factor);
    opt.train.lr_decay_every_epochs =
        static_cast<int>(cfg.get_int("lr_decay_every", opt.train.lr_decay_every_epochs));
    opt.train.batch_size = static_cast<int>(cfg.get_int("batch_size", opt.train.batch_size));
    opt.train.epochs = static_cast<int>(cfg.get_int("epochs", opt.train.epochs));
    opt.train.rmsprop_alpha = cfg.get_real("rmsprop_alpha", opt.train.rmsprop_alpha);
    opt.train.rmsprop_eps = cfg.get_real("rmsprop_eps", opt.train.rmsprop_eps);
    opt.train.bone_loss_enabled = cfg.get_bool("bone_loss", opt.train.bone_loss_enabled);
    opt.train.seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<long long>(opt.train.seed)));
    opt.train.min_side_mm = cfg.get_real("min_side_mm", opt.train.min_side_mm);
    opt.train.shuffle = cfg.get_bool("shuffle", opt.train.shuffle);
    opt.aug.enabled = cfg.get_bool("augment", opt.aug.enabled);
    opt.aug.rotation_range_deg = cfg.get_real("rotation_range_deg", opt.aug.rotation_range_deg);
    opt.aug.aspect_min = cfg.get_real("aspect_min", opt.aug.aspect_min);
    opt.aug.aspect_max = cfg.get_real("aspect_max", opt.aug.aspect_max);
    opt.k = static_cast<int>(cfg.get_int("k", opt.k));
    opt.precision = cfg.get_text("precision", opt.precision);
    opt.deterministic = cfg.get_bool("deterministic", opt.deterministic);
}

void echo_config(const CliOptions& opt, std::ostream& os) {
    os << "stacks=" << opt.model.stacks << "\n"
       << "channels=" << opt.model.channels << "\n"
       << "input_res=" << opt.model.input_res << "\n"
       << "output_res=" << opt.model.output_res << "\n"
       << "hg_depth=" << opt.model.hg_depth << "\n"
       << "joints=" << opt.model.joints << "\n"
       << "bones=" << opt.model.bones << "\n"
       << "bone_heads=" << (opt.model.bone_heads_enabled ? "on" : "off") << "\n"
       << "batchnorm=" << (opt.model.batchnorm_enabled ? "on" : "off") << "\n"
       << "lr_init=" << opt.train.lr_init << "\n"
       << "lr_decay_factor=" << opt.train.lr_decay_factor << "\n"
       << "lr_decay_every=" << opt.train.lr_decay_every_epochs << "\n"
       << "batch_size=" << opt.train.batch_size << "\n"
       << "epochs=" << opt.train.epochs << "\n"
       << "rmsprop_alpha=" << opt.train.rmsprop_alpha << "\n"
       << "rmsprop_eps=" << opt.train.rmsprop_eps << "\n"
       << "bone_loss=" << (opt.train.bone_loss_enabled ? "on" : "off") << "\n"
       << "seed=" << opt.train.seed << "\n"
       << "min_side_mm=" << opt.train.min_side_mm << "\n"
       << "shuffle=" << (opt.train.shuffle ? "on" : "off") << "\n"
       << "augment=" << (opt.aug.enabled ? "on" : "off") << "\n"
       << "rotation_range_deg=" << opt.aug.rotation_range_deg << "\n"
       << "aspect_min=" << opt.aug.aspect_min << "\n"
       << "aspect_max=" << opt.aug.aspect_max << "\n"
       << "k=" << opt.k << "\n"
       << "precision=" << opt.precision << "\n"
       << "deterministic=" << (opt.deterministic ? "on" : "off") << "\n";
}

std::vector<TrainSample> samples_from_synth(const std::vector<SynthSample>& synth) {
    std::vector<TrainSample> out;
    out.reserve(synth.size());
    for (const auto& s : synth) {
        out.push_back({s.cloud, s.pose});
    }
    return out;
}

std::vector<TrainSample> samples_from_msra(const std::vector<FrameRef>& frames,
                                           const CameraIntrinsics& intrinsics) {
    std::vector<TrainSample> out;
    out.reserve(frames.size());
    for (const auto& f : frames) {
        TrainSample s;
        s.cloud = reproject(read_msra_depth(f.depth_path), intrinsics);
        s.pose = f.gt;
        out.push_back(std::move(s));
    }
    return out;
}

struct LoadedData {
    Skeleton skeleton;
    std::vector<TrainSample> train;
    std::vector<TrainSample> test;  // msra holdout; empty for synth datasets
};

LoadedData load_dataset(const std::string& dataset, const std::string& msra_manifest,
                        int holdout_override = -1) {
    LoadedData d;
    if (!dataset.empty()) {
        auto [spec, samples] = load_synth_dataset(dataset);
        d.skeleton = spec.skeleton;
        d.train = samples_from_synth(samples);
    } else if (!msra_manifest.empty()) {
        auto manifest = load_msra_manifest(msra_manifest);
        if (holdout_override >= 0) {
            if (holdout_override >= static_cast<int>(manifest.subjects.size())) {
                throw ConfigError("--subject-holdout out of range");
            }
            manifest.holdout = holdout_override;
        }
        const auto frames = scan_msra_frames(manifest);
        const auto split = split_by_subject(frames, manifest);
        d.skeleton = Skeleton::msra21();
        d.train = samples_from_msra(split.train, manifest.intrinsics);
        d.test = samples_from_msra(split.test, manifest.intrinsics);
    } else {
        throw ConfigError("need --dataset or --msra-manifest");
    }
    return d;
}

void require_model_matches(const HourglassConfig& config, const Skeleton& skeleton) {
    if (config.joints != skeleton.joint_count() || config.bones != skeleton.bone_count()) {
        throw DimensionError("checkpoint expects " + std::to_string(config.joints) + " joints / " +
                             std::to_string(config.bones) + " bones but the dataset skeleton has " +
                             std::to_string(skeleton.joint_count()) + " / " +
                             std::to_string(skeleton.bone_count()));
    }
}

template <typename T>
int run_train(const CliOptions& opt, const LoadedData& data, const fs::path& out_dir,
              const std::string& resume_dir, long long max_steps) {
    fs::create_directories(out_dir);
    HourglassConfig model_cfg = opt.model;
    model_cfg.joints = data.skeleton.joint_count();
    model_cfg.bones = data.skeleton.bone_count();

    HourglassModel<T> model = resume_dir.empty()
                                  ? build_model<T>(model_cfg, opt.train.seed)
                                  : load_checkpoint<T>(fs::path(resume_dir) / "checkpoint.ckpt");
    RmsPropState<T> state = RmsPropState<T>::init(model.params);
    int start_epoch = 0;
    if (!resume_dir.empty()) {
        state = load_rmsprop_state<T>(model.params, fs::path(resume_dir) / "optimizer.state");
        std::ifstream ep(fs::path(resume_dir) / "epoch.txt");
        ep >> start_epoch;
        require_model_matches(model.config, data.skeleton);
    }

    std::ofstream log(out_dir / "loss.log", resume_dir.empty() ? std::ios::trunc : std::ios::app);
    TrainHooks hooks;
    hooks.log_sink = &log;
    hooks.max_steps = max_steps;
    const auto logs = train(data.train, data.skeleton, model, opt.train, opt.aug, &state, hooks, start_epoch);

    save_checkpoint(model, out_dir / "checkpoint.ckpt");
    save_rmsprop_state(state, out_dir / "optimizer.state");
    {
        std::ofstream ep(out_dir / "epoch.txt");
        ep << opt.train.epochs << "\n";
    }
    {
        std::ofstream cfg(out_dir / "config.echo");
        echo_config(opt, cfg);
    }
    std::cout << "trained " << logs.size() << " steps; checkpoint written to "
              << (out_dir / "checkpoint.ckpt").string() << "\n";
    if (!logs.empty()) {
        std::cout << "first step loss " << logs.front().loss_total << ", last step loss "
                  << logs.back().loss_total << "\n";
    }
    return 0;
}

template <typename T>
std::pair<std::vector<Pose>, int> predict_poses(HourglassModel<T>& model,
                                                const std::vector<TrainSample>& samples,
                                                const Skeleton& skeleton, double min_side_mm, int k) {
    std::vector<Pose> preds;
    int fallbacks = 0;
    DecodeConfig dc{k};
    for (const auto& s : samples) {
        const auto prepared = prepare_sample<T>(s.cloud, s.pose, skeleton, model.config.input_res,
                                                model.config.output_res, min_side_mm);
        auto out = forward(model, prepared.input, Mode::eval);
        auto [pose, fb] = decode_pose(out.joints.back(), prepared.out_grid, dc);
        preds.push_back(std::move(pose));
        fallbacks += fb;
    }
    return {std::move(preds), fallbacks};
}

template <typename T>
int run_eval_model(const CliOptions& opt, const fs::path& ckpt, const LoadedData& data,
                   const fs::path& out_dir) {
    auto model = load_checkpoint<T>(ckpt);
    require_model_matches(model.config, data.skeleton);
    const auto& samples = data.test.empty() ? data.train : data.test;
    auto [preds, fallbacks] = predict_poses(model, samples, data.skeleton, opt.train.min_side_mm, opt.k);

    std::vector<Pose> gt;
    for (const auto& s : samples) {
        gt.push_back(s.pose);
    }
    auto report = evaluate(preds, gt, default_thresholds_mm());
    report.fallback_joints = fallbacks;

    fs::create_directories(out_dir);
    write_pose_dump(out_dir / "predictions.txt", preds,
                    "predicted joints, camera-space mm: frame_id then J x y z triples");
    write_pose_dump(out_dir / "ground_truth.txt", gt,
                    "ground-truth joints, camera-space mm: frame_id then J x y z triples");
    write_eval_report(out_dir / "report.txt", out_dir / "report.records", report,
                      data.skeleton.joint_names);
    std::cout << "frames " << report.frames << "  mean error " << std::fixed << std::setprecision(3)
              << report.mean_error_mm << " mm\n";
    return 0;
}

int run_gradcheck(double epsilon, double tolerance) {
    using std::cout;
    std::mt19937_64 rng(20240817);
    bool all_ok = true;
    auto report = [&](const std::string& name, double err) {
        const bool ok = err < tolerance;
        all_ok = all_ok && ok;
        cout << (ok ? "[ok]   " : "[FAIL] ") << name << "  max rel err " << std::scientific
             << std::setprecision(3) << err << "\n";
    };

    auto uniform = [&](Shape shape, double lo, double hi) {
        Tensor<double> t(std::move(shape));
        std::uniform_real_distribution<double> dist(lo, hi);
        for (auto& v : t.values) {
            v = dist(rng);
        }
        return t;
    };
    auto wsum = [](const Tensor<double>& out, const Tensor<double>& cot) {
        double acc = 0.0;
        for (i64 i = 0; i < out.size(); ++i) {
            acc += out.values[i] * cot.values[i];
        }
        return acc;
    };

    {
        auto x = uniform({2, 5, 5, 5}, -1, 1);
        auto w = uniform({3, 2, 3, 3, 3}, -1, 1);
        auto b = uniform({3}, -1, 1);
        auto cot = uniform({3, 3, 3, 3}, -1, 1);
        auto loss = [&] {
            std::vector<double> bias(b.values.begin(), b.values.end());
            return wsum(ops::conv3d_forward(x, w, bias, 2, 1), cot);
        };
        auto analytic = [&] {
            auto g = ops::conv3d_backward(x, w, 2, 1, cot);
            x.grad = g.input.values;
            w.grad = g.weights.values;
            b.grad = g.bias;
        };
        report("conv3d (stride 2, pad 1)",
               gradcheck<double>({{"x", &x}, {"w", &w}, {"b", &b}}, loss, analytic, epsilon).max_rel_err);
    }
    {
        Tensor<double> x({2, 4, 4, 4});
        std::uniform_real_distribution<double> mag(1e-3, 1.0);
        std::bernoulli_distribution sign(0.5);
        for (auto& v : x.values) {
            v = (sign(rng) ? 1.0 : -1.0) * mag(rng);
        }
        auto cot = uniform({2, 4, 4, 4}, -1, 1);
        auto loss = [&] { return wsum(ops::relu_forward(x), cot); };
        auto analytic = [&] { x.grad = ops::relu_backward(x, cot).values; };
        report("relu", gradcheck<double>({{"x", &x}}, loss, analytic, epsilon).max_rel_err);
    }
    {
        auto x = uniform({2, 4, 4, 4}, -1, 1);
        auto cot = uniform({2, 2, 2, 2}, -1, 1);
        auto loss = [&] { return wsum(ops::maxpool3d_forward(x).out, cot); };
        auto analytic = [&] {
            auto r = ops::maxpool3d_forward(x);
            x.grad = ops::maxpool3d_backward(x.shape, r.argmax, cot).values;
        };
        report("maxpool3d", gradcheck<double>({{"x", &x}}, loss, analytic, epsilon).max_rel_err);
    }
    {
        auto x = uniform({2, 2, 2, 2}, -1, 1);
        auto cot = uniform({2, 4, 4, 4}, -1, 1);
        auto loss = [&] { return wsum(ops::upsample3d_forward(x), cot); };
        auto analytic = [&] { x.grad = ops::upsample3d_backward(cot).values; };
        report("upsample3d", gradcheck<double>({{"x", &x}}, loss, analytic, epsilon).max_rel_err);
    }
    for (bool train_mode : {false, true}) {
        auto x = uniform({2, 3, 3, 3}, -1, 1);
        auto gamma = uniform({2}, 0.5, 1.5);
        auto beta = uniform({2}, -0.5, 0.5);
        auto rmean = uniform({2}, -0.2, 0.2);
        auto rvar = uniform({2}, 0.5, 1.5);
        auto cot = uniform({2, 3, 3, 3}, -1, 1);
        auto loss = [&] {
            Tensor<double> rm = rmean, rv = rvar;
            return wsum(ops::batchnorm3d_forward<double>(x, gamma, beta, rm, rv, 0.1, 1e-5, train_mode,
                                                         nullptr),
                        cot);
        };
        auto analytic = [&] {
            Tensor<double> rm = rmean, rv = rvar;
            ops::BatchNorm3dCtx<double> ctx;
            ops::batchnorm3d_forward(x, gamma, beta, rm, rv, 0.1, 1e-5, train_mode, &ctx);
            auto g = ops::batchnorm3d_backward(ctx, gamma, cot);
            x.grad = g.input.values;
            gamma.grad = g.gamma.values;
            beta.grad = g.beta.values;
        };
        report(train_mode ? "batchnorm3d (train stats)" : "batchnorm3d (eval stats)",
               gradcheck<double>({{"x", &x}, {"gamma", &gamma}, {"beta", &beta}}, loss, analytic, epsilon)
                   .max_rel_err);
    }
    {
        auto p = uniform({2, 4, 4, 4}, -1, 1);
        auto t = uniform({2, 4, 4, 4}, 0, 1);
        auto loss = [&] { return ops::mse_sum(p, t); };
        auto analytic = [&] { p.grad = ops::mse_sum_backward(p, t).values; };
        report("mse_sum", gradcheck<double>({{"pred", &p}}, loss, analytic, epsilon).max_rel_err);
    }
    {
        // full miniature model
        HourglassConfig cfg;
        cfg.input_res = 8;
        cfg.output_res = 4;
        cfg.stacks = 2;
        cfg.channels = 4;
        cfg.hg_depth = 1;
        cfg.joints = 2;
        cfg.bones = 1;
        cfg.batchnorm_enabled = false;
        auto model = build_model<double>(cfg, 17);
        auto voxels = uniform({1, 8, 8, 8}, 0.05, 1.0);
        auto jt = uniform({2, 4, 4, 4}, 0, 1);
        auto bt = uniform({1, 4, 4, 4}, 0, 1);
        auto loss = [&] {
            auto out = forward(model, voxels, Mode::eval);
            double acc = 0.0;
            for (const auto& j : out.joints) {
                acc += ops::mse_sum(j, jt);
            }
            return acc + ops::mse_sum(out.bones[0], bt);
        };
        auto analytic = [&] {
            model.params.zero_grads();
            ForwardTrace<double> trace;
            auto out = forward(model, voxels, Mode::train, &trace);
            StackOutputs<double> grads;
            for (const auto& j : out.joints) {
                grads.joints.push_back(ops::mse_sum_backward(j, jt));
            }
            grads.bones.push_back(ops::mse_sum_backward(out.bones[0], bt));
            voxels.grad = backward(model, trace, grads).values;
        };
        std::vector<GradCheckLeaf<double>> leaves;
        for (auto& p : model.params.entries()) {
            if (p.trainable) {
                leaves.push_back({p.name, &p.value});
            }
        }
        leaves.push_back({"input", &voxels});
        report("stacked hourglass, miniature config (R8, C4, S2, J2, B1)",
               gradcheck<double>(leaves, loss, analytic, epsilon).max_rel_err);
    }

    cout << (all_ok ? "gradcheck passed" : "gradcheck FAILED") << " (tolerance " << tolerance << ")\n";
    return all_ok ? 0 : 1;
}

int run_sweep_k(int poses, int resolution, std::uint64_t seed, const std::vector<int>& ks,
                const std::string& out_path) {
    auto spec = SynthHandSpec::msra_default(seed);
    auto samples = synth_generate(spec, poses);

    std::ostringstream table;
    table << "# decode error vs K on generator gaussian targets, " << poses << " poses, R=" << resolution
          << "\n";
    table << "# K mean_error_mm\n";
    std::cout << "K    mean error (mm)\n";
    for (int k : ks) {
        double total = 0.0;
        i64 count = 0;
        for (const auto& s : samples) {
            // The decode-fidelity grid only needs to cover the pose; pad the
            // joint bounding cube so every gaussian sits strictly inside.
            auto cube = compute_cube(s.pose.joints, 100.0);
            cube.side_mm *= 1.3;
            const auto grid = grid_for_cube(cube, resolution);
            const auto hm = joint_targets(s.pose, grid);
            const i64 n = static_cast<i64>(resolution) * resolution * resolution;
            for (int j = 0; j < spec.skeleton.joint_count(); ++j) {
                const std::span<const double> ch(hm.values.data() + j * n, static_cast<std::size_t>(n));
                const auto out = decode_channel<double>(ch, grid, {k});
                total += distance(out.point, s.pose.joints[static_cast<std::size_t>(j)]);
                ++count;
            }
        }
        const double mean = total / static_cast<double>(count);
        table << k << " " << std::setprecision(17) << mean << "\n";
        std::cout << std::left << std::setw(5) << k << std::fixed << std::setprecision(4) << mean << "\n";
    }
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        out << table.str();
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"volumetric hand-pose estimation engine (3D stacked hourglass)"};
    app.require_subcommand(1);

    CliOptions opt;

    // ---- synth ----
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic hand dataset");
    int synth_n = 100;
    std::uint64_t synth_seed = 1;
    int points_per_bone = 100;
    double noise_sigma = 2.0;
    double angle_range = 25.0;
    std::string synth_out;
    synth_cmd->add_option("--n", synth_n, "number of samples");
    synth_cmd->add_option("--seed", synth_seed, "generator seed");
    synth_cmd->add_option("--points-per-bone", points_per_bone, "surface points per bone");
    synth_cmd->add_option("--noise", noise_sigma, "surface noise sigma (mm)");
    synth_cmd->add_option("--angle-range", angle_range, "joint angle range (deg)");
    synth_cmd->add_option("--out", synth_out, "output dataset file")->required();

    // ---- voxelize ----
    auto* vox_cmd = app.add_subcommand("voxelize", "voxelize one frame and print grid facts");
    std::string vox_msra, vox_dataset, vox_out;
    int vox_index = 0;
    int vox_res = 64;
    double vox_min_side = 100.0;
    double fx = 241.42, fy = 241.42, cx = 160.0, cy = 120.0;
    vox_cmd->add_option("--msra", vox_msra, "MSRA depth .bin file");
    vox_cmd->add_option("--dataset", vox_dataset, "synthetic dataset file");
    vox_cmd->add_option("--index", vox_index, "sample index within --dataset");
    vox_cmd->add_option("--resolution", vox_res, "grid resolution");
    vox_cmd->add_option("--min-side", vox_min_side, "minimum cube side (mm)");
    vox_cmd->add_option("--fx", fx, "focal length x (pixels)");
    vox_cmd->add_option("--fy", fy, "focal length y (pixels)");
    vox_cmd->add_option("--cx", cx, "principal point x");
    vox_cmd->add_option("--cy", cy, "principal point y");
    vox_cmd->add_option("--out", vox_out, "write occupied voxel indices to this file");

    // ---- train ----
    auto* train_cmd = app.add_subcommand("train", "train a model");
    std::string train_dataset, train_manifest, train_out = "out", train_resume;
    long long max_steps = -1;
    train_cmd->add_option("--dataset", train_dataset, "synthetic dataset file");
    train_cmd->add_option("--msra-manifest", train_manifest, "MSRA manifest file");
    train_cmd->add_option("--config", opt.config_path, "key=value config file");
    train_cmd->add_option("--out", train_out, "output directory");
    train_cmd->add_option("--resume", train_resume, "directory of a previous run to resume");
    train_cmd->add_option("--max-steps", max_steps, "stop after this many optimizer steps");
    train_cmd->add_flag("--print-config", opt.print_config, "echo the resolved configuration");

    // shared model/train overrides
    int arg_stacks = -1, arg_channels = -1, arg_resolution = -1, arg_hg_depth = -1, arg_epochs = -1,
        arg_batch = -1;
    double arg_lr = -1.0;
    long long arg_seed = -1;
    std::string arg_bone_loss, arg_augment;
    train_cmd->add_option("--stacks", arg_stacks, "hourglass stacks");
    train_cmd->add_option("--channels", arg_channels, "residual block channels");
    train_cmd->add_option("--resolution", arg_resolution, "input voxel resolution (output is half)");
    train_cmd->add_option("--hg-depth", arg_hg_depth, "pool/upsample levels per hourglass");
    train_cmd->add_option("--epochs", arg_epochs, "training epochs");
    train_cmd->add_option("--batch-size", arg_batch, "batch size");
    train_cmd->add_option("--lr", arg_lr, "initial learning rate");
    train_cmd->add_option("--seed", arg_seed, "training seed");
    train_cmd->add_option("--bone-loss", arg_bone_loss, "on|off bone intermediate supervision");
    train_cmd->add_option("--augment", arg_augment, "on|off data augmentation");
    train_cmd->add_option("--precision", opt.precision, "narrow (float) or wide (double)");
    train_cmd->add_flag("--deterministic", opt.deterministic,
                        "single-worker deterministic mode (execution is single-threaded either way)");

    // ---- predict ----
    auto* predict_cmd = app.add_subcommand("predict", "run a checkpoint over a dataset, dump poses");
    std::string pr_ckpt, pr_dataset, pr_manifest, pr_out = "out";
    predict_cmd->add_option("--checkpoint", pr_ckpt, "model checkpoint")->required();
    predict_cmd->add_option("--dataset", pr_dataset, "synthetic dataset file");
    predict_cmd->add_option("--msra-manifest", pr_manifest, "MSRA manifest file");
    predict_cmd->add_option("--out", pr_out, "output directory");
    predict_cmd->add_option("--k", opt.k, "decode top-K");

    // ---- eval ----
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint or a prediction dump");
    std::string ev_ckpt, ev_dataset, ev_manifest, ev_pred, ev_gt, ev_out = "out";
    eval_cmd->add_option("--checkpoint", ev_ckpt, "model checkpoint");
    eval_cmd->add_option("--dataset", ev_dataset, "synthetic dataset file");
    eval_cmd->add_option("--msra-manifest", ev_manifest, "MSRA manifest file");
    eval_cmd->add_option("--pred", ev_pred, "prediction dump (pairs with --gt)");
    eval_cmd->add_option("--gt", ev_gt, "ground-truth dump (pairs with --pred)");
    eval_cmd->add_option("--out", ev_out, "output directory");
    eval_cmd->add_option("--k", opt.k, "decode top-K");
    int holdout_override = -1;
    eval_cmd->add_option("--subject-holdout", holdout_override, "override manifest holdout (msra)");
    train_cmd->add_option("--subject-holdout", holdout_override, "override manifest holdout (msra)");

    // ---- gradcheck ----
    auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference checks; nonzero exit on failure");
    double gc_eps = 1e-5, gc_tol = 1e-4;
    gc_cmd->add_option("--epsilon", gc_eps, "central difference step");
    gc_cmd->add_option("--tolerance", gc_tol, "max relative error allowed");

    // ---- sweep-k ----
    auto* sweep_cmd = app.add_subcommand("sweep-k", "decode error vs K on gaussian targets");
    int sweep_poses = 100, sweep_res = 32;
    std::uint64_t sweep_seed = 1;
    std::vector<int> sweep_ks = {1, 5, 9, 27};
    std::string sweep_out;
    sweep_cmd->add_option("--poses", sweep_poses, "number of synthetic poses");
    sweep_cmd->add_option("--resolution", sweep_res, "decode grid resolution");
    sweep_cmd->add_option("--seed", sweep_seed, "pose generator seed");
    sweep_cmd->add_option("--k", sweep_ks, "K values to sweep");
    sweep_cmd->add_option("--out", sweep_out, "write the table to this file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth_cmd) {
            auto spec = SynthHandSpec::msra_default(synth_seed);
            spec.points_per_bone = points_per_bone;
            spec.noise_sigma_mm = noise_sigma;
            spec.angle_range_deg = angle_range;
            auto samples = synth_generate(spec, synth_n);
            save_synth_dataset(synth_out, spec, samples);
            std::cout << "wrote " << samples.size() << " samples to " << synth_out << "\n";
            return 0;
        }

        if (*vox_cmd) {
            PointCloud cloud;
            if (!vox_msra.empty()) {
                cloud = reproject(read_msra_depth(vox_msra), {fx, fy, cx, cy});
            } else if (!vox_dataset.empty()) {
                auto [spec, samples] = load_synth_dataset(vox_dataset);
                if (vox_index < 0 || vox_index >= static_cast<int>(samples.size())) {
                    throw ConfigError("--index out of range");
                }
                cloud = samples[static_cast<std::size_t>(vox_index)].cloud;
            } else {
                throw ConfigError("need --msra or --dataset");
            }
            const auto cube = compute_cube(cloud, vox_min_side);
            const auto grid = voxelize(cloud, cube, vox_res);
            i64 occupied = 0;
            for (auto v : grid.occupancy) {
                occupied += v;
            }
            std::cout << "points " << cloud.size() << "\n"
                      << "cube center (" << cube.center.x << ", " << cube.center.y << ", " << cube.center.z
                      << ") mm, side " << cube.side_mm << " mm\n"
                      << "resolution " << vox_res << ", voxel size " << grid.geom.voxel_size_mm << " mm\n"
                      << "occupied voxels " << occupied << " / " << grid.occupancy.size() << "\n";
            if (!vox_out.empty()) {
                std::ofstream out(vox_out);
                out << "# occupied voxel indices: x y z\n";
                for (int k = 0; k < vox_res; ++k) {
                    for (int j = 0; j < vox_res; ++j) {
                        for (int i = 0; i < vox_res; ++i) {
                            if (grid.at(i, j, k)) {
                                out << i << " " << j << " " << k << "\n";
                            }
                        }
                    }
                }
            }
            return 0;
        }

        if (*train_cmd) {
            load_config_file(opt);
            if (arg_stacks > 0) opt.model.stacks = arg_stacks;
            if (arg_channels > 0) opt.model.channels = arg_channels;
            if (arg_resolution > 0) {
                opt.model.input_res = arg_resolution;
                opt.model.output_res = arg_resolution / 2;
            }
            if (arg_hg_depth > 0) opt.model.hg_depth = arg_hg_depth;
            if (arg_epochs >= 0) opt.train.epochs = arg_epochs;
            if (arg_batch > 0) opt.train.batch_size = arg_batch;
            if (arg_lr > 0) opt.train.lr_init = arg_lr;
            if (arg_seed >= 0) opt.train.seed = static_cast<std::uint64_t>(arg_seed);
            if (!arg_bone_loss.empty()) opt.train.bone_loss_enabled = (arg_bone_loss == "on");
            if (!arg_augment.empty()) opt.aug.enabled = (arg_augment == "on");
            if (opt.print_config) {
                echo_config(opt, std::cout);
            }

            auto data = load_dataset(train_dataset, train_manifest, holdout_override);
            if (opt.precision == "wide") {
                return run_train<double>(opt, data, train_out, train_resume, max_steps);
            }
            if (opt.precision != "narrow") {
                throw ConfigError("--precision must be narrow or wide");
            }
            return run_train<float>(opt, data, train_out, train_resume, max_steps);
        }

        if (*predict_cmd || *eval_cmd) {
            const bool is_eval = static_cast<bool>(*eval_cmd);
            if (is_eval && !ev_pred.empty()) {
                if (ev_gt.empty()) {
                    throw ConfigError("--pred needs --gt");
                }
                auto preds = read_pose_dump(ev_pred);
                auto gt = read_pose_dump(ev_gt);
                auto report = evaluate(preds, gt, default_thresholds_mm());
                fs::create_directories(ev_out);
                write_eval_report(fs::path(ev_out) / "report.txt", fs::path(ev_out) / "report.records",
                                  report, {});
                std::cout << "frames " << report.frames << "  mean error " << std::fixed
                          << std::setprecision(3) << report.mean_error_mm << " mm\n";
                return 0;
            }

            const std::string ckpt = is_eval ? ev_ckpt : pr_ckpt;
            const std::string ds = is_eval ? ev_dataset : pr_dataset;
            const std::string mf = is_eval ? ev_manifest : pr_manifest;
            const std::string out = is_eval ? ev_out : pr_out;
            if (ckpt.empty()) {
                throw ConfigError("need --checkpoint (or --pred/--gt for eval)");
            }
            auto data = load_dataset(ds, mf, holdout_override);
            const auto info = peek_checkpoint(ckpt);
            if (is_eval) {
                if (info.dtype == "f64") {
                    return run_eval_model<double>(opt, ckpt, data, out);
                }
                return run_eval_model<float>(opt, ckpt, data, out);
            }
            // predict: dump poses over the held-out split when one exists
            fs::create_directories(out);
            const auto& frames = data.test.empty() ? data.train : data.test;
            if (info.dtype == "f64") {
                auto model = load_checkpoint<double>(ckpt);
                require_model_matches(model.config, data.skeleton);
                auto [preds, fb] = predict_poses(model, frames, data.skeleton, opt.train.min_side_mm,
                                                 opt.k);
                write_pose_dump(fs::path(out) / "predictions.txt", preds,
                                "predicted joints, camera-space mm: frame_id then J x y z triples");
            } else {
                auto model = load_checkpoint<float>(ckpt);
                require_model_matches(model.config, data.skeleton);
                auto [preds, fb] = predict_poses(model, frames, data.skeleton, opt.train.min_side_mm,
                                                 opt.k);
                write_pose_dump(fs::path(out) / "predictions.txt", preds,
                                "predicted joints, camera-space mm: frame_id then J x y z triples");
            }
            std::cout << "predictions written to " << (fs::path(out) / "predictions.txt").string() << "\n";
            return 0;
        }

        if (*gc_cmd) {
            return run_gradcheck(gc_eps, gc_tol);
        }

        if (*sweep_cmd) {
            return run_sweep_k(sweep_poses, sweep_res, sweep_seed, sweep_ks, sweep_out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "hpe/skeleton.hpp"
#include "hpe/tensor.hpp"
#include "hpe/voxel_geom.hpp"

namespace hpe {

struct DecodeConfig {
    int k = 9;  // top responding voxels
};

struct DecodeOutcome {
    Vec3 point;
    bool all_zero_fallback = false;  // channel had no positive response
};

// Weighted mean of the K highest-valued voxels' centers, weights normalized
// over the selected responses. Negative responses clamp to zero before
// weighting; ties break toward the lowest flat index. A channel with no
// positive response falls back to the unweighted centroid of the selected
// voxels and is flagged.
template <typename T>
DecodeOutcome decode_channel(std::span<const T> channel, const GridGeom& grid, const DecodeConfig& cfg) {
    const i64 r = grid.resolution;
    const i64 n = r * r * r;
    if (static_cast<i64>(channel.size()) != n) {
        throw DimensionError("decode: channel has " + std::to_string(channel.size()) +
                             " voxels, grid expects " + std::to_string(n));
    }
    if (cfg.k < 1 || cfg.k > n) {
        throw ConfigError("decode: K must be in [1, R^3]");
    }

    std::vector<i64> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), i64(0));
    const auto by_response = [&](i64 a, i64 b) {
        const T va = channel[static_cast<std::size_t>(a)];
        const T vb = channel[static_cast<std::size_t>(b)];
        if (va != vb) {
            return va > vb;
        }
        return a < b;
    };
    std::nth_element(idx.begin(), idx.begin() + (cfg.k - 1), idx.end(), by_response);
    idx.resize(static_cast<std::size_t>(cfg.k));
    std::sort(idx.begin(), idx.end(), by_response);

    double wsum = 0.0;
    for (i64 i : idx) {
        wsum += std::max(0.0, static_cast<double>(channel[static_cast<std::size_t>(i)]));
    }

    DecodeOutcome out;
    Vec3 acc;
    if (wsum > 0.0) {
        for (i64 i : idx) {
            const double w = std::max(0.0, static_cast<double>(channel[static_cast<std::size_t>(i)])) / wsum;
            const int xi = static_cast<int>(i % r);
            const int yj = static_cast<int>((i / r) % r);
            const int zk = static_cast<int>(i / (r * r));
            acc += grid.voxel_center(xi, yj, zk) * w;
        }
    } else {
        out.all_zero_fallback = true;
        const double w = 1.0 / static_cast<double>(cfg.k);
        for (i64 i : idx) {
            const int xi = static_cast<int>(i % r);
            const int yj = static_cast<int>((i / r) % r);
            const int zk = static_cast<int>(i / (r * r));
            acc += grid.voxel_center(xi, yj, zk) * w;
        }
    }
    out.point = acc;
    return out;
}

// Decodes every channel of a [J, R, R, R] heatmap tensor into a pose.
template <typename T>
std::pair<Pose, int> decode_pose(const Tensor<T>& heatmaps, const GridGeom& grid, const DecodeConfig& cfg) {
    check_rank(heatmaps, 4, "decode_pose");
    const i64 J = heatmaps.shape[0];
    const i64 n = heatmaps.shape[1] * heatmaps.shape[2] * heatmaps.shape[3];
    Pose pose;
    int fallbacks = 0;
    for (i64 j = 0; j < J; ++j) {
        const std::span<const T> ch(heatmaps.values.data() + j * n, static_cast<std::size_t>(n));
        const DecodeOutcome o = decode_channel(ch, grid, cfg);
        pose.joints.push_back(o.point);
        fallbacks += o.all_zero_fallback ? 1 : 0;
    }
    return {std::move(pose), fallbacks};
}

// Worst-case error of argmax-only decoding: half the voxel body diagonal.
inline double discretization_bound(double voxel_size_mm) {
    return std::sqrt(3.0) * voxel_size_mm / 2.0;
}

struct EvalReport {
    double mean_error_mm = 0.0;
    std::vector<double> per_joint_error_mm;
    std::vector<std::pair<double, double>> success_curve;  // (threshold mm, fraction of frames)
    int frames = 0;
    int fallback_joints = 0;
};

std::vector<double> default_thresholds_mm();

// Mean Euclidean error over frames x joints, per-joint means, and the
// success-frame curve (a frame succeeds at t when every joint error is
// below t).
EvalReport evaluate(const std::vector<Pose>& predictions, const std::vector<Pose>& ground_truth,
                    const std::vector<double>& thresholds_mm);

// Text records: header line documenting the convention, then one line per
// frame: "<frame_id> x y z x y z ...".
void write_pose_dump(const std::filesystem::path& path, const std::vector<Pose>& poses,
                     const std::string& convention);
std::vector<Pose> read_pose_dump(const std::filesystem::path& path);

// Human-readable table plus machine-readable key=value / curve records.
void write_eval_report(const std::filesystem::path& table_path, const std::filesystem::path& records_path,
                       const EvalReport& report, const std::vector<std::string>& joint_names);

}  // namespace hpe

#pragma once

#include <vector>

#include "hpe/skeleton.hpp"
#include "hpe/voxel_geom.hpp"

namespace hpe {

// Per-channel 3D probability field; values row-major with x fastest,
// matching VoxelGrid occupancy order.
struct HeatmapVolume {
    int channels = 0;
    int resolution = 0;
    std::vector<double> values;

    double& at(int c, int i, int j, int k) {
        const std::int64_t r = resolution;
        return values[static_cast<std::size_t>(((c * r + k) * r + j) * r + i)];
    }
    double at(int c, int i, int j, int k) const {
        const std::int64_t r = resolution;
        return values[static_cast<std::size_t>(((c * r + k) * r + j) * r + i)];
    }
};

// Unnormalized Gaussian per joint, sigma = one voxel length, truncated at 3
// sigma. Joints up to one voxel outside the grid are clamped onto its
// boundary; anything farther raises OutOfVolumeError.
HeatmapVolume joint_targets(const Pose& pose, const GridGeom& grid);

// Gaussian tube per bone: value = exp(-d^2 / (2 sigma_b^2)) with d the
// distance from the voxel center to the bone segment and sigma_b = half a
// voxel length, truncated at 3 sigma_b.
HeatmapVolume bone_targets(const Pose& pose, const Skeleton& skeleton, const GridGeom& grid);

// Distance from point p to segment [a, b].
double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b);

}  // namespace hpe

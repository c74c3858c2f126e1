#include "hpe/heatmap_targets.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hpe {

namespace {

// Clamp a point into the grid box; reject anything more than one voxel out.
Vec3 clamp_into_grid(const Vec3& p, const GridGeom& grid, const char* what, int channel) {
    const double vs = grid.voxel_size_mm;
    const double tol = vs;
    const Vec3 lo = grid.origin;
    const Vec3 hi = {grid.origin.x + grid.resolution * vs, grid.origin.y + grid.resolution * vs,
                     grid.origin.z + grid.resolution * vs};
    if (p.x < lo.x - tol || p.y < lo.y - tol || p.z < lo.z - tol || p.x > hi.x + tol || p.y > hi.y + tol ||
        p.z > hi.z + tol) {
        throw OutOfVolumeError(std::string(what) + " " + std::to_string(channel) +
                               " lies more than one voxel outside the target grid");
    }
    return {std::clamp(p.x, lo.x, hi.x), std::clamp(p.y, lo.y, hi.y), std::clamp(p.z, lo.z, hi.z)};
}

struct VoxelRange {
    int lo[3];
    int hi[3];
};

VoxelRange range_for_box(const Vec3& lo_mm, const Vec3& hi_mm, const GridGeom& grid) {
    const Vec3 lov = grid.world_to_voxel(lo_mm);
    const Vec3 hiv = grid.world_to_voxel(hi_mm);
    VoxelRange r;
    const int rmax = grid.resolution - 1;
    r.lo[0] = std::clamp(static_cast<int>(std::floor(lov.x - 0.5)), 0, rmax);
    r.lo[1] = std::clamp(static_cast<int>(std::floor(lov.y - 0.5)), 0, rmax);
    r.lo[2] = std::clamp(static_cast<int>(std::floor(lov.z - 0.5)), 0, rmax);
    r.hi[0] = std::clamp(static_cast<int>(std::ceil(hiv.x + 0.5)), 0, rmax);
    r.hi[1] = std::clamp(static_cast<int>(std::ceil(hiv.y + 0.5)), 0, rmax);
    r.hi[2] = std::clamp(static_cast<int>(std::ceil(hiv.z + 0.5)), 0, rmax);
    return r;
}

}  // namespace

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
    const Vec3 ab = b - a;
    const double len2 = ab.dot(ab);
    if (len2 == 0.0) {
        return distance(p, a);
    }
    const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
    return distance(p, a + ab * t);
}

HeatmapVolume joint_targets(const Pose& pose, const GridGeom& grid) {
    HeatmapVolume hm;
    hm.channels = pose.joint_count();
    hm.resolution = grid.resolution;
    hm.values.assign(static_cast<std::size_t>(hm.channels) * grid.resolution * grid.resolution *
                         grid.resolution,
                     0.0);
    const double sigma = grid.voxel_size_mm;
    const double cut2 = 9.0 * sigma * sigma;
    const double reach = 3.0 * sigma;
    for (int n = 0; n < hm.channels; ++n) {
        const Vec3 p = clamp_into_grid(pose.joints[static_cast<std::size_t>(n)], grid, "joint", n);
        const VoxelRange r =
            range_for_box({p.x - reach, p.y - reach, p.z - reach}, {p.x + reach, p.y + reach, p.z + reach}, grid);
        for (int k = r.lo[2]; k <= r.hi[2]; ++k) {
            for (int j = r.lo[1]; j <= r.hi[1]; ++j) {
                for (int i = r.lo[0]; i <= r.hi[0]; ++i) {
                    const Vec3 c = grid.voxel_center(i, j, k);
                    const Vec3 d = c - p;
                    const double d2 = d.dot(d);
                    if (d2 <= cut2) {
                        hm.at(n, i, j, k) = std::exp(-d2 / (2.0 * sigma * sigma));
                    }
                }
            }
        }
    }
    return hm;
}

HeatmapVolume bone_targets(const Pose& pose, const Skeleton& skeleton, const GridGeom& grid) {
    if (pose.joint_count() != skeleton.joint_count()) {
        throw DimensionError("bone_targets: pose has " + std::to_string(pose.joint_count()) +
                             " joints, skeleton expects " + std::to_string(skeleton.joint_count()));
    }
    HeatmapVolume hm;
    hm.channels = skeleton.bone_count();
    hm.resolution = grid.resolution;
    hm.values.assign(static_cast<std::size_t>(hm.channels) * grid.resolution * grid.resolution *
                         grid.resolution,
                     0.0);
    const double sigma = 0.5 * grid.voxel_size_mm;
    const double cut2 = 9.0 * sigma * sigma;
    const double reach = 3.0 * sigma;
    for (int b = 0; b < hm.channels; ++b) {
        const auto& [pi, ci] = skeleton.bones[static_cast<std::size_t>(b)];
        const Vec3 pa = clamp_into_grid(pose.joints[static_cast<std::size_t>(pi)], grid, "bone endpoint", b);
        const Vec3 pb = clamp_into_grid(pose.joints[static_cast<std::size_t>(ci)], grid, "bone endpoint", b);
        const Vec3 lo = {std::min(pa.x, pb.x) - reach, std::min(pa.y, pb.y) - reach,
                         std::min(pa.z, pb.z) - reach};
        const Vec3 hi = {std::max(pa.x, pb.x) + reach, std::max(pa.y, pb.y) + reach,
                         std::max(pa.z, pb.z) + reach};
        const VoxelRange r = range_for_box(lo, hi, grid);
        for (int k = r.lo[2]; k <= r.hi[2]; ++k) {
            for (int j = r.lo[1]; j <= r.hi[1]; ++j) {
                for (int i = r.lo[0]; i <= r.hi[0]; ++i) {
                    const Vec3 c = grid.voxel_center(i, j, k);
                    const double d = point_segment_distance(c, pa, pb);
                    const double d2 = d * d;
                    if (d2 <= cut2) {
                        hm.at(b, i, j, k) = std::exp(-d2 / (2.0 * sigma * sigma));
                    }
                }
            }
        }
    }
    return hm;
}

}  // namespace hpe

#include "hpe/voxel_geom.hpp"

#include <algorithm>
#include <limits>

namespace hpe {

PointCloud reproject(const DepthFrame& frame, const CameraIntrinsics& intrinsics) {
    if (intrinsics.fx <= 0.0 || intrinsics.fy <= 0.0) {
        throw ConfigError("reproject: focal lengths must be positive");
    }
    if (static_cast<std::size_t>(frame.width) * static_cast<std::size_t>(frame.height) !=
        frame.depth_mm.size()) {
        throw DimensionError("reproject: depth buffer length does not match width*height");
    }
    PointCloud cloud;
    cloud.reserve(frame.depth_mm.size() / 4);
    for (int v = 0; v < frame.height; ++v) {
        for (int u = 0; u < frame.width; ++u) {
            const double d = frame.depth_mm[static_cast<std::size_t>(v) * frame.width + u];
            if (d <= 0.0) {
                continue;
            }
            cloud.push_back({(u - intrinsics.cx) * d / intrinsics.fx,
                             (v - intrinsics.cy) * d / intrinsics.fy, d});
        }
    }
    if (cloud.empty()) {
        throw EmptyCloudError("reproject: frame has no valid depth pixels");
    }
    return cloud;
}

Vec3 centroid(const PointCloud& cloud) {
    Vec3 c;
    for (const Vec3& p : cloud) {
        c += p;
    }
    const double inv = 1.0 / static_cast<double>(cloud.size());
    return c * inv;
}

CubeCrop compute_cube(const PointCloud& cloud, double min_side_mm) {
    if (cloud.empty()) {
        throw EmptyCloudError("compute_cube: empty point cloud");
    }
    Vec3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
            std::numeric_limits<double>::infinity()};
    Vec3 hi{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
            -std::numeric_limits<double>::infinity()};
    for (const Vec3& p : cloud) {
        lo.x = std::min(lo.x, p.x);
        lo.y = std::min(lo.y, p.y);
        lo.z = std::min(lo.z, p.z);
        hi.x = std::max(hi.x, p.x);
        hi.y = std::max(hi.y, p.y);
        hi.z = std::max(hi.z, p.z);
    }
    CubeCrop cube;
    cube.center = centroid(cloud);
    cube.side_mm = std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z, min_side_mm});
    return cube;
}

GridGeom grid_for_cube(const CubeCrop& cube, int resolution) {
    if (resolution < 2) {
        throw ConfigError("grid resolution must be >= 2");
    }
    if (cube.side_mm <= 0.0) {
        throw ConfigError("cube side must be positive");
    }
    GridGeom geom;
    geom.resolution = resolution;
    geom.voxel_size_mm = cube.side_mm / resolution;
    geom.origin = {cube.center.x - cube.side_mm / 2.0, cube.center.y - cube.side_mm / 2.0,
                   cube.center.z - cube.side_mm / 2.0};
    return geom;
}

VoxelGrid voxelize(const PointCloud& cloud, const CubeCrop& cube, int resolution) {
    VoxelGrid grid;
    grid.geom = grid_for_cube(cube, resolution);
    grid.occupancy.assign(static_cast<std::size_t>(resolution) * resolution * resolution, 0);
    const int r = resolution;
    for (const Vec3& p : cloud) {
        const Vec3 v = grid.geom.world_to_voxel(p);
        const int i = std::clamp(static_cast<int>(std::floor(v.x)), 0, r - 1);
        const int j = std::clamp(static_cast<int>(std::floor(v.y)), 0, r - 1);
        const int k = std::clamp(static_cast<int>(std::floor(v.z)), 0, r - 1);
        grid.at(i, j, k) = 1;
    }
    return grid;
}

}  // namespace hpe

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "hpe/errors.hpp"

namespace hpe {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3& operator+=(const Vec3& o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
};

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

struct CameraIntrinsics {
    double fx = 0.0, fy = 0.0;  // focal lengths, pixels
    double cx = 0.0, cy = 0.0;  // principal point, pixels
};

// Depth image in millimetres; 0 marks a missing measurement. `box` is an
// optional pixel-space bounding rectangle {left, top, right, bottom}
// (half-open on right/bottom).
struct DepthFrame {
    int width = 0;
    int height = 0;
    std::vector<float> depth_mm;
    std::optional<std::array<int, 4>> box;
};

using PointCloud = std::vector<Vec3>;

struct CubeCrop {
    Vec3 center;
    double side_mm = 0.0;
};

// World <-> voxel affine transform of a cubic grid: voxel (i,j,k) covers
// origin + [i,i+1)x[j,j+1)x[k,k+1) * voxel_size, with (i,j,k) ordered (x,y,z).
struct GridGeom {
    int resolution = 0;
    Vec3 origin;
    double voxel_size_mm = 0.0;

    Vec3 world_to_voxel(const Vec3& p) const {
        return {(p.x - origin.x) / voxel_size_mm, (p.y - origin.y) / voxel_size_mm,
                (p.z - origin.z) / voxel_size_mm};
    }
    Vec3 voxel_center(int i, int j, int k) const {
        return {origin.x + (i + 0.5) * voxel_size_mm, origin.y + (j + 0.5) * voxel_size_mm,
                origin.z + (k + 0.5) * voxel_size_mm};
    }
};

struct VoxelGrid {
    GridGeom geom;
    std::vector<std::uint8_t> occupancy;  // resolution^3, x fastest

    std::uint8_t& at(int i, int j, int k) {
        const int r = geom.resolution;
        return occupancy[static_cast<std::size_t>((static_cast<std::int64_t>(k) * r + j) * r + i)];
    }
    std::uint8_t at(int i, int j, int k) const {
        const int r = geom.resolution;
        return occupancy[static_cast<std::size_t>((static_cast<std::int64_t>(k) * r + j) * r + i)];
    }
};

// Pinhole back-projection of every valid depth pixel into camera space (mm).
// Throws EmptyCloudError when no pixel carries depth.
PointCloud reproject(const DepthFrame& frame, const CameraIntrinsics& intrinsics);

// Centroid-centered cube whose side is the largest axis extent of the cloud,
// floored at min_side_mm.
CubeCrop compute_cube(const PointCloud& cloud, double min_side_mm);

GridGeom grid_for_cube(const CubeCrop& cube, int resolution);

// Binary occupancy at the given resolution; boundary points clamp into the
// outermost voxels.
VoxelGrid voxelize(const PointCloud& cloud, const CubeCrop& cube, int resolution);

Vec3 centroid(const PointCloud& cloud);

}  // namespace hpe

#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "hpe/voxel_geom.hpp"

namespace hpe {

// Joint names plus parent->child bone pairs forming a tree. Bone order
// defines the bone heatmap channel layout.
struct Skeleton {
    std::string name;
    std::vector<std::string> joint_names;
    std::vector<std::pair<int, int>> bones;

    int joint_count() const { return static_cast<int>(joint_names.size()); }
    int bone_count() const { return static_cast<int>(bones.size()); }

    // Throws ConfigError unless the bones form a connected tree over the
    // joints (B == J - 1, unique parents, no cycles).
    void validate() const;

    int root() const;  // the unique joint with no parent

    // 21-joint / 20-bone preset matching the MSRA joint order: wrist, then
    // four joints per finger chain (index, middle, ring, pinky, thumb).
    static const Skeleton& msra21();

    // Plain-text preset: "name <id>", "joint <name>" per joint,
    // "bone <parent> <child>" per bone. '#' starts a comment.
    static Skeleton load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
};

struct Pose {
    std::vector<Vec3> joints;

    int joint_count() const { return static_cast<int>(joints.size()); }
};

}  // namespace hpe

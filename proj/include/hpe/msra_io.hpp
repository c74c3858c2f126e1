#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hpe/skeleton.hpp"
#include "hpe/voxel_geom.hpp"

namespace hpe {

// Per-frame binary depth record: six little-endian 32-bit integers (image
// width, height, box left, top, right, bottom) followed by 32-bit float
// depths in mm for the box region, row-major. Parse failures name the byte
// offset.
DepthFrame read_msra_depth(const std::filesystem::path& path);
void write_msra_depth(const std::filesystem::path& path, const DepthFrame& frame);

// Subject pose file: first line is the frame count, then one line of 3*J
// floats per frame. When negate_z is set the stored z is sign-flipped into
// the depth camera convention (positive away from the camera).
std::vector<Pose> read_msra_joints(const std::filesystem::path& path, int joints, bool negate_z);

// Dataset manifest (key=value): root, holdout, intrinsics, and optional
// subject/gesture lists (comma separated; discovered from disk when absent).
struct MsraManifest {
    std::filesystem::path root;
    std::vector<std::string> subjects;
    std::vector<std::string> gestures;
    int holdout = 0;
    CameraIntrinsics intrinsics;
    bool negate_pose_z = true;
};

MsraManifest load_msra_manifest(const std::filesystem::path& path);

struct FrameRef {
    std::string subject;
    std::string gesture;
    int index = 0;
    std::filesystem::path depth_path;
    Pose gt;
};

// Scans and validates every frame the manifest covers: each depth record
// must exist and match its pose file's declared count.
std::vector<FrameRef> scan_msra_frames(const MsraManifest& manifest);

struct MsraSplit {
    std::vector<FrameRef> train;
    std::vector<FrameRef> test;
};

// Leave-one-subject-out split by the manifest's holdout index.
MsraSplit split_by_subject(const std::vector<FrameRef>& frames, const MsraManifest& manifest);

}  // namespace hpe

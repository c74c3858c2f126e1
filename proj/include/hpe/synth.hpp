#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "hpe/skeleton.hpp"
#include "hpe/voxel_geom.hpp"

namespace hpe {

// Procedural articulated-hand generator. Joints are placed by forward
// kinematics along the skeleton tree: each bone takes its rest direction
// perturbed by two rotations drawn within angle_range_deg, scaled to its
// exact length. Points scatter uniformly along each bone with Gaussian
// surface noise.
struct SynthHandSpec {
    Skeleton skeleton;
    std::vector<double> bone_lengths_mm;  // one per skeleton bone
    double angle_range_deg = 25.0;
    int points_per_bone = 100;
    double noise_sigma_mm = 2.0;
    Vec3 root_center{0.0, 0.0, 400.0};
    std::uint64_t seed = 1;

    void validate() const;

    // Plausible adult-hand bone lengths for the 21-joint preset.
    static SynthHandSpec msra_default(std::uint64_t seed);
};

struct SynthSample {
    PointCloud cloud;
    Pose pose;
};

std::vector<SynthSample> synth_generate(const SynthHandSpec& spec, int n);

// Dataset container (same checksummed blob format as checkpoints).
void save_synth_dataset(const std::filesystem::path& path, const SynthHandSpec& spec,
                        const std::vector<SynthSample>& samples);
std::pair<SynthHandSpec, std::vector<SynthSample>> load_synth_dataset(const std::filesystem::path& path);

}  // namespace hpe

#include "hpe/synth.hpp"

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "hpe/checkpoint.hpp"
#include "hpe/params.hpp"

namespace hpe {

namespace {

constexpr double kPi = 3.14159265358979323846;

Vec3 rotate_axis_angle(const Vec3& v, const Vec3& axis, double angle) {
    // Rodrigues rotation; axis must be unit length.
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    return v * c + axis.cross(v) * s + axis * (axis.dot(v) * (1.0 - c));
}

// Rest direction per bone: bones leaving the root fan out in the xy plane,
// deeper bones continue their parent's direction (a straight spread hand).
std::vector<Vec3> rest_directions(const Skeleton& skeleton) {
    const int root = skeleton.root();
    std::vector<int> root_children;
    for (const auto& [p, c] : skeleton.bones) {
        (void)c;
        if (p == root) {
            root_children.push_back(c);
        }
    }
    std::vector<Vec3> dirs(skeleton.bones.size());
    std::vector<Vec3> joint_dir(static_cast<std::size_t>(skeleton.joint_count()), Vec3{0.0, 1.0, 0.0});
    const int m = static_cast<int>(root_children.size());
    for (int i = 0; i < m; ++i) {
        const double span = 80.0 * kPi / 180.0;
        const double phi = (m > 1) ? -span / 2.0 + span * i / (m - 1) : 0.0;
        joint_dir[static_cast<std::size_t>(root_children[static_cast<std::size_t>(i)])] =
            Vec3{std::sin(phi), std::cos(phi), 0.0};
    }
    for (std::size_t b = 0; b < skeleton.bones.size(); ++b) {
        const auto& [p, c] = skeleton.bones[b];
        const Vec3 d = (p == root) ? joint_dir[static_cast<std::size_t>(c)]
                                   : joint_dir[static_cast<std::size_t>(p)];
        dirs[b] = d;
        joint_dir[static_cast<std::size_t>(c)] = d;
    }
    return dirs;
}

Vec3 unit_perpendicular(const Vec3& d) {
    const Vec3 ref = std::fabs(d.z) < 0.9 ? Vec3{0.0, 0.0, 1.0} : Vec3{1.0, 0.0, 0.0};
    Vec3 u = d.cross(ref);
    const double n = u.norm();
    return u * (1.0 / n);
}

}  // namespace

void SynthHandSpec::validate() const {
    skeleton.validate();
    if (bone_lengths_mm.size() != skeleton.bones.size()) {
        throw ConfigError("synth spec: need one bone length per bone");
    }
    for (double l : bone_lengths_mm) {
        if (l <= 0.0) {
            throw ConfigError("synth spec: bone lengths must be positive");
        }
    }
    if (angle_range_deg < 0.0 || points_per_bone < 1 || noise_sigma_mm < 0.0) {
        throw ConfigError("synth spec: invalid angle range, point count, or noise sigma");
    }
}

SynthHandSpec SynthHandSpec::msra_default(std::uint64_t seed) {
    SynthHandSpec spec;
    spec.skeleton = Skeleton::msra21();
    spec.seed = seed;
    spec.bone_lengths_mm.resize(20);
    // Per finger: wrist->mcp, then three phalanges.
    const double lengths[5][4] = {
        {85.0, 38.0, 24.0, 20.0},  // index
        {88.0, 42.0, 27.0, 21.0},  // middle
        {84.0, 38.0, 25.0, 20.0},  // ring
        {78.0, 30.0, 20.0, 18.0},  // pinky
        {45.0, 42.0, 32.0, 26.0},  // thumb
    };
    for (int f = 0; f < 5; ++f) {
        for (int b = 0; b < 4; ++b) {
            spec.bone_lengths_mm[static_cast<std::size_t>(4 * f + b)] = lengths[f][b];
        }
    }
    return spec;
}

std::vector<SynthSample> synth_generate(const SynthHandSpec& spec, int n) {
    spec.validate();
    if (n < 0) {
        throw ConfigError("synth_generate: n must be non-negative");
    }
    const std::vector<Vec3> rest = rest_directions(spec.skeleton);
    const int root = spec.skeleton.root();
    const double range = spec.angle_range_deg * kPi / 180.0;

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> angle(-range, range);
    std::uniform_real_distribution<double> along(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma_mm);

    double total_len = 0.0;
    for (double l : spec.bone_lengths_mm) {
        total_len += l;
    }

    auto generate_one = [&]() {
        SynthSample sample;
        sample.pose.joints.assign(static_cast<std::size_t>(spec.skeleton.joint_count()), Vec3{});
        sample.pose.joints[static_cast<std::size_t>(root)] = spec.root_center;

        for (std::size_t b = 0; b < spec.skeleton.bones.size(); ++b) {
            const auto& [p, c] = spec.skeleton.bones[b];
            Vec3 d = rest[b];
            const double a1 = range > 0.0 ? angle(rng) : 0.0;
            const double a2 = range > 0.0 ? angle(rng) : 0.0;
            const Vec3 u = unit_perpendicular(d);
            const Vec3 v = d.cross(u);
            d = rotate_axis_angle(d, u, a1);
            d = rotate_axis_angle(d, v, a2);
            const double dn = d.norm();
            d = d * (1.0 / dn);
            sample.pose.joints[static_cast<std::size_t>(c)] =
                sample.pose.joints[static_cast<std::size_t>(p)] + d * spec.bone_lengths_mm[b];
        }

        // Point counts scale with bone length (points_per_bone is the mean),
        // so surface density is uniform and the cloud centroid stays near the
        // skeleton's geometric center. Both endpoints always carry a point,
        // which keeps every joint inside the cloud's bounding box.
        sample.cloud.reserve(spec.skeleton.bones.size() *
                             (static_cast<std::size_t>(spec.points_per_bone) + 2));
        for (std::size_t b = 0; b < spec.skeleton.bones.size(); ++b) {
            const auto& [p, c] = spec.skeleton.bones[b];
            const Vec3 a = sample.pose.joints[static_cast<std::size_t>(p)];
            const Vec3 seg = sample.pose.joints[static_cast<std::size_t>(c)] - a;
            const int count = std::max(
                4, static_cast<int>(std::lround(spec.points_per_bone * spec.bone_lengths_mm[b] *
                                                static_cast<double>(spec.skeleton.bones.size()) /
                                                total_len)));
            for (int i = 0; i < count + 2; ++i) {
                const double t = (i == 0) ? 0.0 : (i == 1) ? 1.0 : along(rng);
                Vec3 pt = a + seg * t;
                if (spec.noise_sigma_mm > 0.0) {
                    pt.x += noise(rng);
                    pt.y += noise(rng);
                    pt.z += noise(rng);
                }
                sample.cloud.push_back(pt);
            }
        }
        return sample;
    };

    // A pose is usable only if its own centroid-cube crop keeps every joint
    // within half a voxel of the box at R=32 (the tightest grid in use); the
    // cube centers on the cloud centroid, not the bounding box, so extreme
    // draws can clip a fingertip. Redraw those.
    auto crop_ok = [&](const SynthSample& s) {
        const CubeCrop cube = compute_cube(s.cloud, 100.0);
        const double slack = cube.side_mm / 2.0 + cube.side_mm / 64.0;
        for (const Vec3& j : s.pose.joints) {
            if (std::fabs(j.x - cube.center.x) > slack || std::fabs(j.y - cube.center.y) > slack ||
                std::fabs(j.z - cube.center.z) > slack) {
                return false;
            }
        }
        return true;
    };

    std::vector<SynthSample> samples;
    samples.reserve(static_cast<std::size_t>(n));
    for (int si = 0; si < n; ++si) {
        SynthSample sample = generate_one();
        int tries = 1;
        while (!crop_ok(sample)) {
            if (++tries > 200) {
                throw ConfigError("synth_generate: could not draw a crop-valid pose in 200 tries; "
                                  "angle ranges are too extreme for the skeleton");
            }
            sample = generate_one();
        }
        samples.push_back(std::move(sample));
    }
    return samples;
}

namespace {

constexpr const char* kSynthMagic = "HPESYNTH";

nlohmann::json spec_to_json(const SynthHandSpec& spec) {
    nlohmann::json j;
    j["format"] = "hpe-synth-dataset";
    j["skeleton"] = {{"name", spec.skeleton.name},
                     {"joints", spec.skeleton.joint_names},
                     {"bones", nlohmann::json::array()}};
    for (const auto& [p, c] : spec.skeleton.bones) {
        j["skeleton"]["bones"].push_back({p, c});
    }
    j["bone_lengths_mm"] = spec.bone_lengths_mm;
    j["angle_range_deg"] = spec.angle_range_deg;
    j["points_per_bone"] = spec.points_per_bone;
    j["noise_sigma_mm"] = spec.noise_sigma_mm;
    j["root_center"] = {spec.root_center.x, spec.root_center.y, spec.root_center.z};
    j["seed"] = spec.seed;
    return j;
}

SynthHandSpec spec_from_json(const nlohmann::json& j) {
    SynthHandSpec spec;
    spec.skeleton.name = j.at("skeleton").at("name").get<std::string>();
    spec.skeleton.joint_names = j.at("skeleton").at("joints").get<std::vector<std::string>>();
    for (const auto& b : j.at("skeleton").at("bones")) {
        spec.skeleton.bones.emplace_back(b.at(0).get<int>(), b.at(1).get<int>());
    }
    spec.bone_lengths_mm = j.at("bone_lengths_mm").get<std::vector<double>>();
    spec.angle_range_deg = j.at("angle_range_deg").get<double>();
    spec.points_per_bone = j.at("points_per_bone").get<int>();
    spec.noise_sigma_mm = j.at("noise_sigma_mm").get<double>();
    spec.root_center = {j.at("root_center").at(0).get<double>(), j.at("root_center").at(1).get<double>(),
                        j.at("root_center").at(2).get<double>()};
    spec.seed = j.at("seed").get<std::uint64_t>();
    return spec;
}

Tensor<double> vec3s_to_tensor(const std::vector<Vec3>& v) {
    Tensor<double> t({static_cast<i64>(v.size()), 3});
    for (std::size_t i = 0; i < v.size(); ++i) {
        t.values[3 * i] = v[i].x;
        t.values[3 * i + 1] = v[i].y;
        t.values[3 * i + 2] = v[i].z;
    }
    return t;
}

std::vector<Vec3> tensor_to_vec3s(const Tensor<double>& t) {
    std::vector<Vec3> v(static_cast<std::size_t>(t.shape[0]));
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = {t.values[3 * i], t.values[3 * i + 1], t.values[3 * i + 2]};
    }
    return v;
}

}  // namespace

void save_synth_dataset(const std::filesystem::path& path, const SynthHandSpec& spec,
                        const std::vector<SynthSample>& samples) {
    BlobFile f;
    f.magic = kSynthMagic;
    nlohmann::json meta = spec_to_json(spec);
    meta["sample_count"] = samples.size();
    f.meta_json = meta.dump();
    char name[64];
    for (std::size_t i = 0; i < samples.size(); ++i) {
        std::snprintf(name, sizeof(name), "sample%06zu.pose", i);
        f.blobs.push_back(tensor_blob(name, vec3s_to_tensor(samples[i].pose.joints)));
        std::snprintf(name, sizeof(name), "sample%06zu.points", i);
        f.blobs.push_back(tensor_blob(name, vec3s_to_tensor(samples[i].cloud)));
    }
    write_blob_file(path, f);
}

std::pair<SynthHandSpec, std::vector<SynthSample>> load_synth_dataset(const std::filesystem::path& path) {
    BlobFile f = read_blob_file(path, kSynthMagic, 1);
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(f.meta_json);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": invalid dataset metadata: " + e.what());
    }
    SynthHandSpec spec = spec_from_json(meta);
    spec.skeleton.validate();
    const std::size_t count = meta.at("sample_count").get<std::size_t>();
    if (f.blobs.size() != 2 * count) {
        throw ParseError(path.string() + ": expected " + std::to_string(2 * count) + " blobs, found " +
                         std::to_string(f.blobs.size()));
    }
    std::vector<SynthSample> samples(count);
    for (std::size_t i = 0; i < count; ++i) {
        Tensor<double> pose_t(f.blobs[2 * i].shape);
        blob_into_tensor(f.blobs[2 * i], pose_t, "load_synth_dataset");
        Tensor<double> pts_t(f.blobs[2 * i + 1].shape);
        blob_into_tensor(f.blobs[2 * i + 1], pts_t, "load_synth_dataset");
        samples[i].pose.joints = tensor_to_vec3s(pose_t);
        samples[i].cloud = tensor_to_vec3s(pts_t);
    }
    return {std::move(spec), std::move(samples)};
}

}  // namespace hpe

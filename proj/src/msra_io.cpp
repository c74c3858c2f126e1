#include "hpe/msra_io.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hpe/config.hpp"

namespace hpe {

namespace {

std::int32_t read_i32(const std::vector<char>& buf, std::size_t offset, const std::string& where,
                      const char* what) {
    if (offset + 4 > buf.size()) {
        throw ParseError(where + ": truncated while reading " + what + " at byte offset " +
                         std::to_string(offset));
    }
    std::int32_t v;
    std::memcpy(&v, buf.data() + offset, 4);
    return v;
}

}  // namespace

DepthFrame read_msra_depth(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("cannot open depth file: " + path.string());
    }
    std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string where = path.string();

    const std::int32_t width = read_i32(buf, 0, where, "image width");
    const std::int32_t height = read_i32(buf, 4, where, "image height");
    const std::int32_t left = read_i32(buf, 8, where, "box left");
    const std::int32_t top = read_i32(buf, 12, where, "box top");
    const std::int32_t right = read_i32(buf, 16, where, "box right");
    const std::int32_t bottom = read_i32(buf, 20, where, "box bottom");

    if (width <= 0 || height <= 0) {
        throw ParseError(where + ": non-positive image size " + std::to_string(width) + "x" +
                         std::to_string(height) + " in header");
    }
    if (left < 0 || top < 0 || right > width || bottom > height || left >= right || top >= bottom) {
        throw ParseError(where + ": bounding box [" + std::to_string(left) + "," + std::to_string(top) +
                         "," + std::to_string(right) + "," + std::to_string(bottom) +
                         "] falls outside the " + std::to_string(width) + "x" + std::to_string(height) +
                         " image");
    }
    const std::size_t box_w = static_cast<std::size_t>(right - left);
    const std::size_t box_h = static_cast<std::size_t>(bottom - top);
    const std::size_t expected = 24 + box_w * box_h * 4;
    if (buf.size() != expected) {
        throw ParseError(where + ": expected " + std::to_string(expected) + " bytes for a " +
                         std::to_string(box_w) + "x" + std::to_string(box_h) + " box, file has " +
                         std::to_string(buf.size()) + " (differs at byte offset " +
                         std::to_string(std::min(buf.size(), expected)) + ")");
    }

    DepthFrame frame;
    frame.width = width;
    frame.height = height;
    frame.box = {{left, top, right, bottom}};
    frame.depth_mm.assign(static_cast<std::size_t>(width) * height, 0.0f);
    for (std::size_t row = 0; row < box_h; ++row) {
        const std::size_t src = 24 + row * box_w * 4;
        float* dst = frame.depth_mm.data() + (static_cast<std::size_t>(top) + row) * width + left;
        std::memcpy(dst, buf.data() + src, box_w * 4);
    }
    for (float d : frame.depth_mm) {
        if (d < 0.0f) {
            throw ParseError(where + ": negative depth value " + std::to_string(d));
        }
    }
    return frame;
}

void write_msra_depth(const std::filesystem::path& path, const DepthFrame& frame) {
    if (!frame.box) {
        throw ParseError("write_msra_depth: frame has no bounding box");
    }
    const auto [left, top, right, bottom] = *frame.box;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw ParseError("cannot write depth file: " + path.string());
    }
    const std::int32_t header[6] = {frame.width, frame.height, left, top, right, bottom};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    for (int row = top; row < bottom; ++row) {
        out.write(reinterpret_cast<const char*>(frame.depth_mm.data() +
                                                static_cast<std::size_t>(row) * frame.width + left),
                  static_cast<std::streamsize>((right - left) * 4));
    }
}

std::vector<Pose> read_msra_joints(const std::filesystem::path& path, int joints, bool negate_z) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open joint file: " + path.string());
    }
    long count = 0;
    if (!(in >> count) || count < 0) {
        throw ParseError(path.string() + ":1: expected a frame count");
    }
    std::vector<Pose> poses;
    poses.reserve(static_cast<std::size_t>(count));
    for (long f = 0; f < count; ++f) {
        Pose pose;
        pose.joints.resize(static_cast<std::size_t>(joints));
        for (int j = 0; j < joints; ++j) {
            double x, y, z;
            if (!(in >> x >> y >> z)) {
                throw ParseError(path.string() + ": truncated at frame " + std::to_string(f) + " joint " +
                                 std::to_string(j) + " (declared " + std::to_string(count) + " frames)");
            }
            pose.joints[static_cast<std::size_t>(j)] = {x, y, negate_z ? -z : z};
        }
        poses.push_back(std::move(pose));
    }
    return poses;
}

MsraManifest load_msra_manifest(const std::filesystem::path& path) {
    const KeyValueConfig cfg = KeyValueConfig::parse_file(path);
    cfg.validate({{"root", KeyValueConfig::Type::text},
                  {"subjects", KeyValueConfig::Type::text},
                  {"gestures", KeyValueConfig::Type::text},
                  {"holdout", KeyValueConfig::Type::integer},
                  {"fx", KeyValueConfig::Type::real},
                  {"fy", KeyValueConfig::Type::real},
                  {"cx", KeyValueConfig::Type::real},
                  {"cy", KeyValueConfig::Type::real},
                  {"negate_pose_z", KeyValueConfig::Type::boolean}});
    MsraManifest m;
    m.root = cfg.get_text("root", "");
    if (m.root.empty()) {
        throw ParseError(path.string() + ": manifest needs a 'root' key");
    }
    if (m.root.is_relative()) {
        m.root = path.parent_path() / m.root;
    }
    auto split_list = [](const std::string& s) {
        std::vector<std::string> out;
        std::istringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) {
                out.push_back(item);
            }
        }
        return out;
    };
    m.subjects = split_list(cfg.get_text("subjects", ""));
    m.gestures = split_list(cfg.get_text("gestures", ""));
    m.holdout = static_cast<int>(cfg.get_int("holdout", 0));
    m.intrinsics.fx = cfg.get_real("fx", 241.42);
    m.intrinsics.fy = cfg.get_real("fy", 241.42);
    m.intrinsics.cx = cfg.get_real("cx", 160.0);
    m.intrinsics.cy = cfg.get_real("cy", 120.0);
    m.negate_pose_z = cfg.get_bool("negate_pose_z", true);

    if (m.subjects.empty()) {
        for (const auto& e : std::filesystem::directory_iterator(m.root)) {
            if (e.is_directory()) {
                m.subjects.push_back(e.path().filename().string());
            }
        }
        std::sort(m.subjects.begin(), m.subjects.end());
    }
    if (m.subjects.empty()) {
        throw ParseError(path.string() + ": no subjects found under " + m.root.string());
    }
    if (m.holdout < 0 || m.holdout >= static_cast<int>(m.subjects.size())) {
        throw ParseError(path.string() + ": holdout index " + std::to_string(m.holdout) +
                         " out of range for " + std::to_string(m.subjects.size()) + " subjects");
    }
    return m;
}

std::vector<FrameRef> scan_msra_frames(const MsraManifest& manifest) {
    std::vector<FrameRef> frames;
    const int J = Skeleton::msra21().joint_count();
    for (const auto& subject : manifest.subjects) {
        const std::filesystem::path sdir = manifest.root / subject;
        std::vector<std::string> gestures = manifest.gestures;
        if (gestures.empty()) {
            for (const auto& e : std::filesystem::directory_iterator(sdir)) {
                if (e.is_directory()) {
                    gestures.push_back(e.path().filename().string());
                }
            }
            std::sort(gestures.begin(), gestures.end());
        }
        for (const auto& gesture : gestures) {
            const std::filesystem::path gdir = sdir / gesture;
            const std::filesystem::path joint_file = gdir / "joint.txt";
            const std::vector<Pose> poses = read_msra_joints(joint_file, J, manifest.negate_pose_z);
            for (std::size_t i = 0; i < poses.size(); ++i) {
                char name[32];
                std::snprintf(name, sizeof(name), "%06zu_depth.bin", i);
                FrameRef ref;
                ref.subject = subject;
                ref.gesture = gesture;
                ref.index = static_cast<int>(i);
                ref.depth_path = gdir / name;
                if (!std::filesystem::exists(ref.depth_path)) {
                    throw ParseError(joint_file.string() + " declares " + std::to_string(poses.size()) +
                                     " frames but " + ref.depth_path.string() + " is missing");
                }
                ref.gt = poses[i];
                frames.push_back(std::move(ref));
            }
        }
    }
    return frames;
}

MsraSplit split_by_subject(const std::vector<FrameRef>& frames, const MsraManifest& manifest) {
    const std::string& held = manifest.subjects[static_cast<std::size_t>(manifest.holdout)];
    MsraSplit split;
    for (const auto& f : frames) {
        (f.subject == held ? split.test : split.train).push_back(f);
    }
    return split;
}

}  // namespace hpe

#include "hpe/skeleton.hpp"

#include <fstream>
#include <sstream>

namespace hpe {

void Skeleton::validate() const {
    const int j = joint_count();
    if (j < 1) {
        throw ConfigError("skeleton has no joints");
    }
    if (bone_count() != j - 1) {
        throw ConfigError("skeleton '" + name + "': expected " + std::to_string(j - 1) + " bones for " +
                          std::to_string(j) + " joints, got " + std::to_string(bone_count()));
    }
    std::vector<int> parent(static_cast<std::size_t>(j), -1);
    for (const auto& [p, c] : bones) {
        if (p < 0 || p >= j || c < 0 || c >= j) {
            throw ConfigError("skeleton '" + name + "': bone index out of range");
        }
        if (p == c) {
            throw ConfigError("skeleton '" + name + "': self-loop bone");
        }
        if (parent[static_cast<std::size_t>(c)] != -1) {
            throw ConfigError("skeleton '" + name + "': joint " + std::to_string(c) + " has two parents");
        }
        parent[static_cast<std::size_t>(c)] = p;
    }
    // B == J-1 with unique parents: connected iff every non-root reaches the
    // root without revisiting a node.
    int root_idx = -1;
    for (int i = 0; i < j; ++i) {
        if (parent[static_cast<std::size_t>(i)] == -1) {
            if (root_idx != -1) {
                throw ConfigError("skeleton '" + name + "': disconnected (multiple roots)");
            }
            root_idx = i;
        }
    }
    for (int i = 0; i < j; ++i) {
        int cur = i;
        int hops = 0;
        while (parent[static_cast<std::size_t>(cur)] != -1) {
            cur = parent[static_cast<std::size_t>(cur)];
            if (++hops > j) {
                throw ConfigError("skeleton '" + name + "': cycle detected");
            }
        }
        if (cur != root_idx) {
            throw ConfigError("skeleton '" + name + "': joint " + std::to_string(i) +
                              " not connected to root");
        }
    }
}

int Skeleton::root() const {
    std::vector<bool> has_parent(joint_names.size(), false);
    for (const auto& [p, c] : bones) {
        (void)p;
        has_parent[static_cast<std::size_t>(c)] = true;
    }
    for (std::size_t i = 0; i < has_parent.size(); ++i) {
        if (!has_parent[i]) {
            return static_cast<int>(i);
        }
    }
    throw ConfigError("skeleton '" + name + "': no root joint");
}

const Skeleton& Skeleton::msra21() {
    static const Skeleton preset = [] {
        Skeleton s;
        s.name = "msra21";
        s.joint_names = {"wrist",
                         "index_mcp",  "index_pip",  "index_dip",  "index_tip",
                         "middle_mcp", "middle_pip", "middle_dip", "middle_tip",
                         "ring_mcp",   "ring_pip",   "ring_dip",   "ring_tip",
                         "pinky_mcp",  "pinky_pip",  "pinky_dip",  "pinky_tip",
                         "thumb_mcp",  "thumb_pip",  "thumb_dip",  "thumb_tip"};
        for (int f = 0; f < 5; ++f) {
            const int base = 1 + 4 * f;
            s.bones.emplace_back(0, base);
            s.bones.emplace_back(base, base + 1);
            s.bones.emplace_back(base + 1, base + 2);
            s.bones.emplace_back(base + 2, base + 3);
        }
        s.validate();
        return s;
    }();
    return preset;
}

Skeleton Skeleton::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open skeleton file: " + path.string());
    }
    Skeleton s;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) {
            continue;
        }
        if (tag == "name") {
            ls >> s.name;
        } else if (tag == "joint") {
            std::string jn;
            if (!(ls >> jn)) {
                throw ParseError(path.string() + ":" + std::to_string(line_no) + ": joint needs a name");
            }
            s.joint_names.push_back(jn);
        } else if (tag == "bone") {
            int p = -1, c = -1;
            if (!(ls >> p >> c)) {
                throw ParseError(path.string() + ":" + std::to_string(line_no) +
                                 ": bone needs parent and child indices");
            }
            s.bones.emplace_back(p, c);
        } else {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": unknown tag '" + tag + "'");
        }
    }
    s.validate();
    return s;
}

void Skeleton::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) {
        throw ParseError("cannot write skeleton file: " + path.string());
    }
    out << "name " << name << "\n";
    for (const auto& jn : joint_names) {
        out << "joint " << jn << "\n";
    }
    for (const auto& [p, c] : bones) {
        out << "bone " << p << " " << c << "\n";
    }
}

}  // namespace hpe

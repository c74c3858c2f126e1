#include "hpe/checkpoint.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

namespace hpe {

namespace {

void put_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        buf.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
    }
}

void put_u64(std::vector<unsigned char>& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        buf.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
    }
}

void put_bytes(std::vector<unsigned char>& buf, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    buf.insert(buf.end(), p, p + n);
}

struct Reader {
    const std::vector<unsigned char>& buf;
    std::size_t pos = 0;
    std::string where;

    void need(std::size_t n, const char* what) const {
        if (pos + n > buf.size()) {
            throw CheckpointError(where + ": truncated while reading " + what + " at byte offset " +
                                  std::to_string(pos));
        }
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
        }
        pos += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
        }
        pos += 8;
        return v;
    }
    std::string str(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
        pos += n;
        return s;
    }
};

std::uint64_t fnv1a64_bytes(const unsigned char* data, std::size_t n) {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 1099511628211ULL;
    }
    return h;
}

std::vector<unsigned char> serialize(const BlobFile& file) {
    if (file.magic.size() != 8) {
        throw CheckpointError("blob file magic must be 8 bytes");
    }
    std::vector<unsigned char> buf;
    put_bytes(buf, file.magic.data(), 8);
    put_u32(buf, file.version);
    put_u64(buf, file.meta_json.size());
    put_bytes(buf, file.meta_json.data(), file.meta_json.size());
    put_u32(buf, static_cast<std::uint32_t>(file.blobs.size()));
    for (const Blob& b : file.blobs) {
        put_u32(buf, static_cast<std::uint32_t>(b.name.size()));
        put_bytes(buf, b.name.data(), b.name.size());
        put_u32(buf, static_cast<std::uint32_t>(b.dtype.size()));
        put_bytes(buf, b.dtype.data(), b.dtype.size());
        put_u32(buf, static_cast<std::uint32_t>(b.shape.size()));
        for (i64 d : b.shape) {
            put_u64(buf, static_cast<std::uint64_t>(d));
        }
        put_u64(buf, b.bytes.size());
        put_bytes(buf, b.bytes.data(), b.bytes.size());
    }
    put_u64(buf, fnv1a64_bytes(buf.data(), buf.size()));
    return buf;
}

}  // namespace

void write_blob_file(const std::filesystem::path& path, const BlobFile& file) {
    const std::vector<unsigned char> buf = serialize(file);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw CheckpointError("cannot open for writing: " + path.string());
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) {
        throw CheckpointError("short write: " + path.string());
    }
}

BlobFile read_blob_file(const std::filesystem::path& path, const std::string& expected_magic,
                        std::uint32_t expected_version) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CheckpointError("cannot open: " + path.string());
    }
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (buf.size() < 8 + 4 + 8 + 4 + 8) {
        throw CheckpointError(path.string() + ": file too short (" + std::to_string(buf.size()) + " bytes)");
    }
    // Checksum covers every byte before the trailing 8.
    std::uint64_t declared = 0;
    for (int i = 0; i < 8; ++i) {
        declared |= static_cast<std::uint64_t>(buf[buf.size() - 8 + i]) << (8 * i);
    }
    const std::uint64_t actual = fnv1a64_bytes(buf.data(), buf.size() - 8);
    if (declared != actual) {
        throw CheckpointError(path.string() + ": checksum mismatch, file is corrupt");
    }

    Reader r{buf, 0, path.string()};
    BlobFile f;
    f.magic = r.str(8, "magic");
    if (f.magic != expected_magic) {
        throw CheckpointError(path.string() + ": bad magic '" + f.magic + "', expected '" + expected_magic +
                              "'");
    }
    f.version = r.u32("version");
    if (f.version != expected_version) {
        throw CheckpointError(path.string() + ": unsupported version " + std::to_string(f.version));
    }
    const std::uint64_t meta_len = r.u64("meta length");
    f.meta_json = r.str(meta_len, "meta json");
    const std::uint32_t blob_count = r.u32("blob count");
    f.blobs.reserve(blob_count);
    for (std::uint32_t i = 0; i < blob_count; ++i) {
        Blob b;
        b.name = r.str(r.u32("name length"), "blob name");
        b.dtype = r.str(r.u32("dtype length"), "blob dtype");
        const std::uint32_t ndim = r.u32("rank");
        for (std::uint32_t d = 0; d < ndim; ++d) {
            b.shape.push_back(static_cast<i64>(r.u64("dim")));
        }
        const std::uint64_t nbytes = r.u64("data length");
        r.need(nbytes, "blob data");
        b.bytes.assign(buf.begin() + static_cast<std::ptrdiff_t>(r.pos),
                       buf.begin() + static_cast<std::ptrdiff_t>(r.pos + nbytes));
        r.pos += nbytes;
        f.blobs.push_back(std::move(b));
    }
    if (r.pos != buf.size() - 8) {
        throw CheckpointError(path.string() + ": trailing garbage at byte offset " + std::to_string(r.pos));
    }
    return f;
}

std::string checkpoint_meta_json(const HourglassConfig& config, const std::string& dtype,
                                 std::uint64_t init_seed) {
    nlohmann::json j;
    j["format"] = "hg3d-checkpoint";
    j["dtype"] = dtype;
    j["init_seed"] = init_seed;
    j["config"] = {{"input_res", config.input_res},
                   {"output_res", config.output_res},
                   {"stacks", config.stacks},
                   {"channels", config.channels},
                   {"hg_depth", config.hg_depth},
                   {"joints", config.joints},
                   {"bones", config.bones},
                   {"bone_heads_enabled", config.bone_heads_enabled},
                   {"batchnorm_enabled", config.batchnorm_enabled}};
    return j.dump();
}

CheckpointInfo parse_checkpoint_meta(const std::string& meta_json) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(meta_json);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("invalid checkpoint metadata: ") + e.what());
    }
    if (j.value("format", "") != "hg3d-checkpoint") {
        throw CheckpointError("not a model checkpoint (format tag mismatch)");
    }
    CheckpointInfo info;
    info.dtype = j.at("dtype").get<std::string>();
    info.init_seed = j.at("init_seed").get<std::uint64_t>();
    const auto& c = j.at("config");
    info.config.input_res = c.at("input_res").get<int>();
    info.config.output_res = c.at("output_res").get<int>();
    info.config.stacks = c.at("stacks").get<int>();
    info.config.channels = c.at("channels").get<int>();
    info.config.hg_depth = c.at("hg_depth").get<int>();
    info.config.joints = c.at("joints").get<int>();
    info.config.bones = c.at("bones").get<int>();
    info.config.bone_heads_enabled = c.at("bone_heads_enabled").get<bool>();
    info.config.batchnorm_enabled = c.at("batchnorm_enabled").get<bool>();
    return info;
}

CheckpointInfo peek_checkpoint(const std::filesystem::path& path) {
    BlobFile f = read_blob_file(path, kCheckpointMagic, 1);
    return parse_checkpoint_meta(f.meta_json);
}

}  // namespace hpe

#pragma once

#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "hpe/hourglass.hpp"
#include "hpe/tensor.hpp"

namespace hpe {

// Versioned binary container: magic, version, JSON metadata, named typed
// blobs, and a trailing FNV-1a checksum over everything before it.
struct Blob {
    std::string name;
    std::string dtype;  // "f32" | "f64"
    Shape shape;
    std::vector<unsigned char> bytes;
};

struct BlobFile {
    std::string magic;  // exactly 8 chars
    std::uint32_t version = 1;
    std::string meta_json;
    std::vector<Blob> blobs;
};

void write_blob_file(const std::filesystem::path& path, const BlobFile& file);
BlobFile read_blob_file(const std::filesystem::path& path, const std::string& expected_magic,
                        std::uint32_t expected_version);

template <typename T>
constexpr const char* dtype_name();
template <>
constexpr const char* dtype_name<float>() {
    return "f32";
}
template <>
constexpr const char* dtype_name<double>() {
    return "f64";
}

template <typename T>
Blob tensor_blob(const std::string& name, const Tensor<T>& t) {
    Blob b;
    b.name = name;
    b.dtype = dtype_name<T>();
    b.shape = t.shape;
    b.bytes.resize(t.values.size() * sizeof(T));
    std::memcpy(b.bytes.data(), t.values.data(), b.bytes.size());
    return b;
}

template <typename T>
void blob_into_tensor(const Blob& b, Tensor<T>& t, const char* what) {
    if (b.dtype != dtype_name<T>()) {
        throw CheckpointError(std::string(what) + ": blob '" + b.name + "' has dtype " + b.dtype +
                              ", expected " + dtype_name<T>());
    }
    if (b.shape != t.shape) {
        throw CheckpointError(std::string(what) + ": blob '" + b.name + "' has shape " +
                              shape_str(b.shape) + ", expected " + shape_str(t.shape));
    }
    if (b.bytes.size() != t.values.size() * sizeof(T)) {
        throw CheckpointError(std::string(what) + ": blob '" + b.name + "' has wrong byte length");
    }
    std::memcpy(t.values.data(), b.bytes.data(), b.bytes.size());
}

inline constexpr const char* kCheckpointMagic = "HG3DCKPT";

struct CheckpointInfo {
    HourglassConfig config;
    std::string dtype;
    std::uint64_t init_seed = 0;
};

std::string checkpoint_meta_json(const HourglassConfig& config, const std::string& dtype,
                                 std::uint64_t init_seed);
CheckpointInfo parse_checkpoint_meta(const std::string& meta_json);

// Reads only the header of a checkpoint (config + precision).
CheckpointInfo peek_checkpoint(const std::filesystem::path& path);

template <typename T>
void save_checkpoint(const HourglassModel<T>& model, const std::filesystem::path& path) {
    BlobFile f;
    f.magic = kCheckpointMagic;
    f.meta_json = checkpoint_meta_json(model.config, dtype_name<T>(), model.init_seed);
    for (const auto& p : model.params.entries()) {
        f.blobs.push_back(tensor_blob(p.name, p.value));
    }
    write_blob_file(path, f);
}

// Rebuilds the architecture from the stored config and restores every
// parameter and buffer bit-exactly. Throws CheckpointError on checksum,
// name-set, shape, or precision mismatch.
template <typename T>
HourglassModel<T> load_checkpoint(const std::filesystem::path& path) {
    BlobFile f = read_blob_file(path, kCheckpointMagic, 1);
    const CheckpointInfo info = parse_checkpoint_meta(f.meta_json);
    if (info.dtype != dtype_name<T>()) {
        throw CheckpointError("checkpoint " + path.string() + " stores " + info.dtype +
                              " parameters, expected " + dtype_name<T>());
    }
    HourglassModel<T> model = build_model<T>(info.config, info.init_seed);
    if (f.blobs.size() != model.params.count()) {
        throw CheckpointError("checkpoint " + path.string() + ": expected " +
                              std::to_string(model.params.count()) + " blobs, found " +
                              std::to_string(f.blobs.size()));
    }
    for (const Blob& b : f.blobs) {
        Param<T>* p = model.params.find(b.name);
        if (!p) {
            throw CheckpointError("checkpoint " + path.string() + ": unknown parameter '" + b.name + "'");
        }
        blob_into_tensor(b, p->value, "load_checkpoint");
    }
    return model;
}

}  // namespace hpe

#pragma once

#include <stdexcept>
#include <string>

namespace hpe {

// Shape/rank mismatch between tensors or between a tensor and an operation.
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid model/training configuration (violated invariant, bad field value).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input file (dataset, config, manifest). Message names the offset
// or line where parsing failed.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Checkpoint file failed checksum, shape, or precision validation.
struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A ground-truth joint lies more than one voxel outside the target grid.
struct OutOfVolumeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A depth frame produced no valid points.
struct EmptyCloudError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Batch normalization asked to compute statistics over zero elements.
struct EmptyBatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite loss or gradient during training; message names the parameter.
struct TrainingDivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Backward called without a matching forward trace.
struct StateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace hpe

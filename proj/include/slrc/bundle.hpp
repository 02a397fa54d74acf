#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "slrc/optimizer.hpp"

namespace slrc {

constexpr int kBundleFormatVersion = 1;

/// One named weight matrix with an optional bias vector.
struct WeightTensor {
    std::string name;
    DenseMatrix weights;
    std::vector<double> bias;  // empty when the layer has none
};

/// Input weights: a JSON manifest next to one raw f32 little-endian
/// row-major blob per tensor.
struct WeightBundle {
    std::vector<WeightTensor> tensors;  // name-sorted, names unique

    const WeightTensor* find(const std::string& name) const;
};

WeightBundle load_weight_bundle(const std::string& manifest_path);
void save_weight_bundle(const std::string& manifest_path, const WeightBundle& bundle);

/// Channel norms for one tensor's inputs, before any clamping.
struct TensorCalibration {
    std::string name;  // "*" applies to any tensor with the right channel count
    std::vector<double> norms;
    std::uint64_t sample_count = 0;
    std::uint64_t source_hash = 0;
};

struct CalibrationStats {
    std::vector<TensorCalibration> tensors;  // name-sorted

    /// Exact name match first, then a "*" entry with matching channel count.
    const TensorCalibration* find(const std::string& name, std::size_t channels) const;
};

CalibrationStats load_calibration(const std::string& manifest_path);
void save_calibration(const std::string& manifest_path, const CalibrationStats& stats);

/// One compressed tensor plus the calibration norms its run used, so every
/// reported number stays recomputable from the bundle and weights alone.
struct CompressedTensor {
    std::string name;
    CompressedLayer layer;
    std::vector<double> norms;
};

/// Output artifact: <dir>/manifest.json plus <dir>/data.bin holding, per
/// tensor, CSR row offsets (u64), column indices (u32), values (f32), the
/// u and v factors (f32 row-major), optional bias (f32), and norms (f32),
/// at byte offsets recorded in the manifest.
struct CompressedBundle {
    std::vector<CompressedTensor> tensors;  // name-sorted
    std::map<std::string, std::string> provenance;

    const CompressedTensor* find(const std::string& name) const;
};

void save_compressed_bundle(const std::string& dir, const CompressedBundle& bundle);
CompressedBundle load_compressed_bundle(const std::string& dir);

/// Write-temp-then-rename; concurrent readers never see a partial file.
void atomic_write_file(const std::string& path, const std::string& bytes);

std::string read_file(const std::string& path);

}  // namespace slrc

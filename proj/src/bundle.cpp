#include "slrc/bundle.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <utility>

namespace slrc {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

namespace {

constexpr std::size_t kMaxDim = 100'000'000;

bool valid_tensor_name(const std::string& name) {
    if (name.empty() || name.size() > 256) return false;
    if (name == "." || name == "..") return false;
    for (char c : name) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                        (c >= '0' && c <= '9') || c == '.' || c == '_' || c == '-' ||
                        c == '*';
        if (!ok) return false;
    }
    return true;
}

template <typename T>
T get_field(const json& j, const char* key, const std::string& where) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError(where + ": missing or invalid field '" + key + "'");
    }
}

json parse_manifest(const std::string& path) {
    const std::string text = read_file(path);
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw IoError("cannot parse manifest " + path + ": " + e.what());
    }
}

void check_version(const json& j, const std::string& path) {
    if (get_field<int>(j, "format_version", path) != kBundleFormatVersion) {
        throw ValidationError(path + ": unsupported format_version");
    }
}

void append_bytes(std::string& out, const void* p, std::size_t n) {
    out.append(static_cast<const char*>(p), n);
}

void append_f32(std::string& out, const std::vector<double>& values) {
    for (double v : values) {
        const auto f = static_cast<float>(v);
        append_bytes(out, &f, sizeof f);
    }
}

void check_range(const std::string& blob, std::uint64_t offset, std::uint64_t bytes,
                 const std::string& what) {
    if (offset > blob.size() || bytes > blob.size() - offset) {
        throw IoError("data blob too short for " + what);
    }
}

std::vector<double> read_f32(const std::string& blob, std::uint64_t offset, std::size_t count,
                             const std::string& what) {
    check_range(blob, offset, static_cast<std::uint64_t>(count) * 4, what);
    std::vector<double> out(count);
    for (std::size_t k = 0; k < count; ++k) {
        float f = 0.0f;
        std::memcpy(&f, blob.data() + offset + 4 * k, 4);
        if (!std::isfinite(f)) throw ValidationError(what + " holds a non-finite value");
        out[k] = static_cast<double>(f);
    }
    return out;
}

std::vector<std::uint32_t> read_u32(const std::string& blob, std::uint64_t offset,
                                    std::size_t count, const std::string& what) {
    check_range(blob, offset, static_cast<std::uint64_t>(count) * 4, what);
    std::vector<std::uint32_t> out(count);
    if (count > 0) std::memcpy(out.data(), blob.data() + offset, count * 4);
    return out;
}

std::vector<std::uint64_t> read_u64(const std::string& blob, std::uint64_t offset,
                                    std::size_t count, const std::string& what) {
    check_range(blob, offset, static_cast<std::uint64_t>(count) * 8, what);
    std::vector<std::uint64_t> out(count);
    if (count > 0) std::memcpy(out.data(), blob.data() + offset, count * 8);
    return out;
}

std::size_t read_dim(const json& j, const char* key, const std::string& where) {
    const auto v = get_field<std::uint64_t>(j, key, where);
    if (v == 0 || v > kMaxDim) {
        throw ValidationError(where + ": dimension '" + std::string(key) +
                              "' out of range");
    }
    return static_cast<std::size_t>(v);
}

fs::path sibling(const std::string& manifest_path, const std::string& relative) {
    return fs::path(manifest_path).parent_path() / relative;
}

std::string data_name_for(const std::string& manifest_path) {
    fs::path p(manifest_path);
    p.replace_extension(".bin");
    return p.filename().string();
}

template <typename T>
void sort_and_check_unique(std::vector<T>& tensors, const std::string& what) {
    std::sort(tensors.begin(), tensors.end(),
              [](const T& a, const T& b) { return a.name < b.name; });
    for (std::size_t i = 0; i + 1 < tensors.size(); ++i) {
        if (tensors[i].name == tensors[i + 1].name) {
            throw ValidationError(what + ": duplicate tensor name '" + tensors[i].name + "'");
        }
    }
    for (const T& t : tensors) {
        if (!valid_tensor_name(t.name)) {
            throw ValidationError(what + ": invalid tensor name '" + t.name + "'");
        }
    }
}

const char* variant_name(BrpVariant v) {
    return v == BrpVariant::SharedProjection ? "shared" : "independent-gaussian";
}

BrpVariant variant_from(const std::string& s, const std::string& where) {
    if (s == "shared") return BrpVariant::SharedProjection;
    if (s == "independent-gaussian") return BrpVariant::IndependentGaussian;
    throw ValidationError(where + ": unknown projection variant '" + s + "'");
}

json plan_to_json(const CompressionPlan& plan) {
    return json{{"remaining_fraction", plan.remaining_fraction},
                {"rank", plan.rank},
                {"preserve_fraction", plan.preserve_fraction},
                {"iterations", plan.iterations},
                {"seed", plan.seed},
                {"power_iters", plan.power_iters},
                {"epsilon", plan.epsilon},
                {"safeguard", plan.safeguard},
                {"reuse_projection", plan.reuse_projection},
                {"variant", variant_name(plan.variant)}};
}

CompressionPlan plan_from_json(const json& j, const std::string& where) {
    CompressionPlan plan;
    plan.remaining_fraction = get_field<double>(j, "remaining_fraction", where);
    plan.rank = get_field<std::size_t>(j, "rank", where);
    plan.preserve_fraction = get_field<double>(j, "preserve_fraction", where);
    plan.iterations = get_field<std::size_t>(j, "iterations", where);
    plan.seed = get_field<std::uint64_t>(j, "seed", where);
    plan.power_iters = get_field<std::size_t>(j, "power_iters", where);
    plan.epsilon = get_field<double>(j, "epsilon", where);
    plan.safeguard = get_field<bool>(j, "safeguard", where);
    plan.reuse_projection = get_field<bool>(j, "reuse_projection", where);
    plan.variant = variant_from(get_field<std::string>(j, "variant", where), where);
    return plan;
}

json trace_to_json(const ConvergenceTrace& trace) {
    json outcomes = json::array();
    for (LowRankStepOutcome o : trace.outcomes) {
        outcomes.push_back(static_cast<int>(o));
    }
    return json{{"initial_norm", trace.initial_norm},
                {"start_loss", trace.start_loss},
                {"oneshot_loss", trace.oneshot_loss},
                {"planned_iterations", trace.planned_iterations},
                {"early_stopped", trace.early_stopped},
                {"post_svd", trace.post_svd},
                {"post_sparsify", trace.post_sparsify},
                {"outcomes", outcomes}};
}

ConvergenceTrace trace_from_json(const json& j, const std::string& where) {
    ConvergenceTrace trace;
    trace.initial_norm = get_field<double>(j, "initial_norm", where);
    trace.start_loss = get_field<double>(j, "start_loss", where);
    trace.oneshot_loss = get_field<double>(j, "oneshot_loss", where);
    trace.planned_iterations = get_field<std::size_t>(j, "planned_iterations", where);
    trace.early_stopped = get_field<bool>(j, "early_stopped", where);
    trace.post_svd = get_field<std::vector<double>>(j, "post_svd", where);
    trace.post_sparsify = get_field<std::vector<double>>(j, "post_sparsify", where);
    const auto raw = get_field<std::vector<int>>(j, "outcomes", where);
    for (int o : raw) {
        if (o < 0 || o > 3) throw ValidationError(where + ": invalid outcome code");
        trace.outcomes.push_back(static_cast<LowRankStepOutcome>(o));
    }
    if (trace.post_svd.size() != trace.post_sparsify.size() ||
        trace.outcomes.size() != trace.post_svd.size()) {
        throw ValidationError(where + ": inconsistent trace lengths");
    }
    return trace;
}

}  // namespace

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("cannot read " + path);
    return bytes;
}

void atomic_write_file(const std::string& path, const std::string& bytes) {
    const fs::path target(path);
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw IoError("cannot write " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
    }
}

const WeightTensor* WeightBundle::find(const std::string& name) const {
    for (const WeightTensor& t : tensors) {
        if (t.name == name) return &t;
    }
    return nullptr;
}

WeightBundle load_weight_bundle(const std::string& manifest_path) {
    const json j = parse_manifest(manifest_path);
    check_version(j, manifest_path);
    WeightBundle bundle;
    for (const json& tj : get_field<json>(j, "tensors", manifest_path)) {
        WeightTensor t;
        t.name = get_field<std::string>(tj, "name", manifest_path);
        const std::string where = manifest_path + ": tensor '" + t.name + "'";
        const std::size_t rows = read_dim(tj, "rows", where);
        const std::size_t cols = read_dim(tj, "cols", where);
        if (get_field<std::string>(tj, "dtype", where) != "f32le") {
            throw ValidationError(where + ": only dtype 'f32le' is supported");
        }
        const std::string blob =
            read_file(sibling(manifest_path, get_field<std::string>(tj, "blob_path", where))
                          .string());
        if (blob.size() != rows * cols * 4) {
            throw IoError(where + ": blob holds " + std::to_string(blob.size()) +
                          " bytes, expected " + std::to_string(rows * cols * 4));
        }
        t.weights = DenseMatrix(rows, cols, read_f32(blob, 0, rows * cols, where));
        if (tj.contains("bias_path")) {
            const std::string bias_blob =
                read_file(sibling(manifest_path, get_field<std::string>(tj, "bias_path", where))
                              .string());
            if (bias_blob.size() != rows * 4) {
                throw IoError(where + ": bias blob holds " + std::to_string(bias_blob.size()) +
                              " bytes, expected " + std::to_string(rows * 4));
            }
            t.bias = read_f32(bias_blob, 0, rows, where + " bias");
        }
        bundle.tensors.push_back(std::move(t));
    }
    sort_and_check_unique(bundle.tensors, manifest_path);
    return bundle;
}

void save_weight_bundle(const std::string& manifest_path, const WeightBundle& bundle) {
    std::vector<WeightTensor> tensors = bundle.tensors;
    sort_and_check_unique(tensors, manifest_path);
    const fs::path dir = fs::path(manifest_path).parent_path();
    std::error_code ec;
    if (!dir.empty()) fs::create_directories(dir, ec);

    // Blob names carry the manifest stem so sibling bundles with the same
    // tensor names (weights next to activations, say) never collide.
    const std::string stem = fs::path(manifest_path).stem().string();

    json list = json::array();
    for (const WeightTensor& t : tensors) {
        if (!t.bias.empty() && t.bias.size() != t.weights.rows()) {
            throw ValidationError("tensor '" + t.name + "': bias length mismatch");
        }
        const std::string blob_name = stem + "." + t.name + ".bin";
        std::string blob;
        append_f32(blob, t.weights.data());
        atomic_write_file(sibling(manifest_path, blob_name).string(), blob);
        json tj{{"name", t.name},
                {"rows", t.weights.rows()},
                {"cols", t.weights.cols()},
                {"dtype", "f32le"},
                {"blob_path", blob_name}};
        if (!t.bias.empty()) {
            const std::string bias_name = stem + "." + t.name + ".bias.bin";
            std::string bias_blob;
            append_f32(bias_blob, t.bias);
            atomic_write_file(sibling(manifest_path, bias_name).string(), bias_blob);
            tj["bias_path"] = bias_name;
        }
        list.push_back(std::move(tj));
    }
    const json j{{"format_version", kBundleFormatVersion},
                 {"kind", "slrc-weights"},
                 {"tensors", list}};
    atomic_write_file(manifest_path, j.dump(2) + "\n");
}

const TensorCalibration* CalibrationStats::find(const std::string& name,
                                                std::size_t channels) const {
    for (const TensorCalibration& t : tensors) {
        if (t.name == name && t.norms.size() == channels) return &t;
    }
    for (const TensorCalibration& t : tensors) {
        if (t.name == "*" && t.norms.size() == channels) return &t;
    }
    return nullptr;
}

CalibrationStats load_calibration(const std::string& manifest_path) {
    const json j = parse_manifest(manifest_path);
    check_version(j, manifest_path);
    const std::string blob =
        read_file(sibling(manifest_path, get_field<std::string>(j, "data_path", manifest_path))
                      .string());
    CalibrationStats stats;
    for (const json& tj : get_field<json>(j, "tensors", manifest_path)) {
        TensorCalibration t;
        t.name = get_field<std::string>(tj, "name", manifest_path);
        const std::string where = manifest_path + ": calibration '" + t.name + "'";
        const std::size_t channels = read_dim(tj, "channels", where);
        t.sample_count = get_field<std::uint64_t>(tj, "sample_count", where);
        t.source_hash = get_field<std::uint64_t>(tj, "source_hash", where);
        t.norms = read_f32(blob, get_field<std::uint64_t>(tj, "offset", where), channels,
                           where + " norms");
        for (double n : t.norms) {
            if (n < 0.0) throw ValidationError(where + ": negative channel norm");
        }
        stats.tensors.push_back(std::move(t));
    }
    sort_and_check_unique(stats.tensors, manifest_path);
    return stats;
}

void save_calibration(const std::string& manifest_path, const CalibrationStats& stats) {
    std::vector<TensorCalibration> tensors = stats.tensors;
    sort_and_check_unique(tensors, manifest_path);
    const fs::path dir = fs::path(manifest_path).parent_path();
    std::error_code ec;
    if (!dir.empty()) fs::create_directories(dir, ec);

    std::string blob;
    json list = json::array();
    for (const TensorCalibration& t : tensors) {
        for (double n : t.norms) {
            if (!std::isfinite(n) || n < 0.0) {
                throw ValidationError("calibration '" + t.name + "': invalid channel norm");
            }
        }
        const std::uint64_t offset = blob.size();
        append_f32(blob, t.norms);
        list.push_back(json{{"name", t.name},
                            {"channels", t.norms.size()},
                            {"sample_count", t.sample_count},
                            {"source_hash", t.source_hash},
                            {"offset", offset}});
    }
    const std::string data_name = data_name_for(manifest_path);
    atomic_write_file(sibling(manifest_path, data_name).string(), blob);
    const json j{{"format_version", kBundleFormatVersion},
                 {"kind", "slrc-calibration"},
                 {"data_path", data_name},
                 {"tensors", list}};
    atomic_write_file(manifest_path, j.dump(2) + "\n");
}

const CompressedTensor* CompressedBundle::find(const std::string& name) const {
    for (const CompressedTensor& t : tensors) {
        if (t.name == name) return &t;
    }
    return nullptr;
}

void save_compressed_bundle(const std::string& dir, const CompressedBundle& bundle) {
    std::vector<const CompressedTensor*> tensors;
    tensors.reserve(bundle.tensors.size());
    for (const CompressedTensor& t : bundle.tensors) tensors.push_back(&t);
    std::sort(tensors.begin(), tensors.end(),
              [](const CompressedTensor* a, const CompressedTensor* b) {
                  return a->name < b->name;
              });
    for (std::size_t i = 0; i + 1 < tensors.size(); ++i) {
        if (tensors[i]->name == tensors[i + 1]->name) {
            throw ValidationError("duplicate tensor name '" + tensors[i]->name + "'");
        }
    }

    std::error_code ec;
    fs::create_directories(dir, ec);

    std::string blob;
    json list = json::array();
    for (const CompressedTensor* tp : tensors) {
        const CompressedTensor& t = *tp;
        const CompressedLayer& layer = t.layer;
        if (!valid_tensor_name(t.name) || t.name == "*") {
            throw ValidationError("invalid tensor name '" + t.name + "'");
        }
        if (t.norms.size() != layer.cols) {
            throw ValidationError("tensor '" + t.name + "': norms do not match columns");
        }
        json offsets;
        offsets["row_offsets"] = blob.size();
        append_bytes(blob, layer.s.row_offsets().data(),
                     layer.s.row_offsets().size() * sizeof(std::uint64_t));
        offsets["col_indices"] = blob.size();
        if (layer.s.nnz() > 0) {
            append_bytes(blob, layer.s.col_indices().data(),
                         layer.s.col_indices().size() * sizeof(std::uint32_t));
        }
        offsets["values"] = blob.size();
        append_f32(blob, layer.s.values());
        offsets["u"] = blob.size();
        append_f32(blob, layer.factors.u.data());
        offsets["v"] = blob.size();
        append_f32(blob, layer.factors.v.data());
        if (!layer.bias.empty()) {
            offsets["bias"] = blob.size();
            append_f32(blob, layer.bias);
        }
        offsets["norms"] = blob.size();
        append_f32(blob, t.norms);

        list.push_back(json{{"name", t.name},
                            {"rows", layer.rows},
                            {"cols", layer.cols},
                            {"rank", layer.factors.rank},
                            {"nnz", layer.s.nnz()},
                            {"has_bias", !layer.bias.empty()},
                            {"density",
                             static_cast<double>(layer.s.nnz()) /
                                 (static_cast<double>(layer.rows) *
                                  static_cast<double>(layer.cols))},
                            {"realized_fraction", layer.realized_fraction()},
                            {"plan", plan_to_json(layer.plan)},
                            {"split",
                             json{{"sparse_density", layer.split.sparse_density},
                                  {"lowrank_share", layer.split.lowrank_share},
                                  {"preserve_fraction", layer.split.preserve_fraction}}},
                            {"final_loss", layer.final_loss},
                            {"trace", trace_to_json(layer.trace)},
                            {"offsets", offsets}});
    }

    const json manifest{{"format_version", kBundleFormatVersion},
                        {"kind", "slrc-compressed"},
                        {"data_path", "data.bin"},
                        {"rng", SeededRng::kAlgorithm},
                        {"provenance", bundle.provenance},
                        {"tensors", list}};
    atomic_write_file((fs::path(dir) / "data.bin").string(), blob);
    atomic_write_file((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

CompressedBundle load_compressed_bundle(const std::string& dir) {
    const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
    const json j = parse_manifest(manifest_path);
    check_version(j, manifest_path);
    const std::string blob =
        read_file(sibling(manifest_path, get_field<std::string>(j, "data_path", manifest_path))
                      .string());

    CompressedBundle bundle;
    if (j.contains("provenance")) {
        bundle.provenance =
            get_field<std::map<std::string, std::string>>(j, "provenance", manifest_path);
    }
    for (const json& tj : get_field<json>(j, "tensors", manifest_path)) {
        CompressedTensor t;
        t.name = get_field<std::string>(tj, "name", manifest_path);
        const std::string where = manifest_path + ": tensor '" + t.name + "'";
        CompressedLayer& layer = t.layer;
        layer.rows = read_dim(tj, "rows", where);
        layer.cols = read_dim(tj, "cols", where);
        const auto rank = get_field<std::size_t>(tj, "rank", where);
        const auto nnz = get_field<std::size_t>(tj, "nnz", where);
        if (nnz > layer.rows * layer.cols) throw ValidationError(where + ": nnz out of range");
        const json offsets = get_field<json>(tj, "offsets", where);

        auto row_offsets = read_u64(blob, get_field<std::uint64_t>(offsets, "row_offsets", where),
                                    layer.rows + 1, where + " row offsets");
        auto col_indices = read_u32(blob, get_field<std::uint64_t>(offsets, "col_indices", where),
                                    nnz, where + " column indices");
        auto values = read_f32(blob, get_field<std::uint64_t>(offsets, "values", where), nnz,
                               where + " values");
        try {
            layer.s = SparseMatrix(layer.rows, layer.cols, std::move(row_offsets),
                                   std::move(col_indices), std::move(values));
        } catch (const ValidationError& e) {
            throw ValidationError(where + ": " + e.what());
        }

        layer.factors.rank = rank;
        layer.factors.u = DenseMatrix(
            layer.rows, rank,
            read_f32(blob, get_field<std::uint64_t>(offsets, "u", where), layer.rows * rank,
                     where + " u"));
        layer.factors.v = DenseMatrix(
            layer.cols, rank,
            read_f32(blob, get_field<std::uint64_t>(offsets, "v", where), layer.cols * rank,
                     where + " v"));
        if (get_field<bool>(tj, "has_bias", where)) {
            layer.bias = read_f32(blob, get_field<std::uint64_t>(offsets, "bias", where),
                                  layer.rows, where + " bias");
        }
        t.norms = read_f32(blob, get_field<std::uint64_t>(offsets, "norms", where), layer.cols,
                           where + " norms");

        layer.plan = plan_from_json(get_field<json>(tj, "plan", where), where);
        if (layer.plan.rank != rank) {
            throw ValidationError(where + ": rank disagrees with the stored plan");
        }
        layer.split = allocate_budget(layer.rows, layer.cols, layer.plan);
        layer.trace = trace_from_json(get_field<json>(tj, "trace", where), where);
        layer.final_loss = get_field<double>(tj, "final_loss", where);
        bundle.tensors.push_back(std::move(t));
    }
    sort_and_check_unique(bundle.tensors, manifest_path);
    return bundle;
}

}  // namespace slrc

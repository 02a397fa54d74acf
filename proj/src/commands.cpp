#include "slrc/commands.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "slrc/layer.hpp"
#include "slrc/salience.hpp"

namespace slrc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string csv_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::uint64_t fnv_update(std::uint64_t h, const char* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        h ^= static_cast<unsigned char>(p[i]);
        h *= 0x100000001B3ULL;
    }
    return h;
}

template <typename T>
T get_field(const json& j, const char* key, const std::string& where) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError(where + ": missing or invalid field '" + key + "'");
    }
}

json parse_json_file(const std::string& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw IoError("cannot parse " + path + ": " + e.what());
    }
}

void write_output(const std::string& out_path, const std::string& text) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    const fs::path dir = fs::path(out_path).parent_path();
    std::error_code ec;
    if (!dir.empty()) fs::create_directories(dir, ec);
    atomic_write_file(out_path, text);
}

// --- calibrate -------------------------------------------------------------

struct NormAccumulator {
    std::size_t channels = 0;
    std::vector<double> sumsq;
    std::uint64_t samples = 0;
    std::uint64_t hash = 0;
};

void stream_activation_blob(const std::string& blob_path, std::size_t channels,
                            std::size_t samples, const std::string& tensor,
                            NormAccumulator& acc) {
    std::error_code ec;
    const auto size = fs::file_size(blob_path, ec);
    if (ec) throw IoError("cannot stat " + blob_path + ": " + ec.message());
    const std::uint64_t expected = static_cast<std::uint64_t>(channels) * samples * 4;
    if (size != expected) {
        throw IoError(blob_path + " holds " + std::to_string(size) + " bytes, expected " +
                      std::to_string(expected));
    }
    std::ifstream in(blob_path, std::ios::binary);
    if (!in) throw IoError("cannot open " + blob_path);

    std::vector<char> buf(1 << 20);
    std::uint64_t index = 0;  // f32 position within the blob
    while (index * 4 < expected) {
        const std::uint64_t want =
            std::min<std::uint64_t>(buf.size(), expected - index * 4);
        in.read(buf.data(), static_cast<std::streamsize>(want));
        if (in.gcount() != static_cast<std::streamsize>(want)) {
            throw IoError("short read from " + blob_path);
        }
        acc.hash = fnv_update(acc.hash, buf.data(), want);
        for (std::uint64_t k = 0; k + 4 <= want; k += 4, ++index) {
            float f = 0.0f;
            std::memcpy(&f, buf.data() + k, 4);
            if (!std::isfinite(f)) {
                throw ValidationError("tensor '" + tensor + "': non-finite activation in channel " +
                                      std::to_string(index / samples));
            }
            const auto v = static_cast<double>(f);
            acc.sumsq[static_cast<std::size_t>(index / samples)] += v * v;
        }
    }
    acc.samples += samples;
}

struct SyntheticSpec {
    std::string name = "*";
    double mu = 0.0;
    double sigma = 1.0;
    std::uint64_t seed = 0;
    std::size_t channels = 0;
    std::size_t samples = 0;
};

SyntheticSpec parse_synthetic(const std::string& spec) {
    const auto colon = spec.find(':');
    const std::string dist = spec.substr(0, colon);
    if (dist != "lognormal") {
        throw ValidationError("unknown synthetic distribution '" + dist + "'");
    }
    SyntheticSpec out;
    std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);
    std::stringstream ss(rest);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) {
            throw ValidationError("synthetic spec entry '" + item + "' is not key=value");
        }
        const std::string key = item.substr(0, eq);
        const std::string value = item.substr(eq + 1);
        try {
            if (key == "sigma") {
                out.sigma = std::stod(value);
            } else if (key == "mu") {
                out.mu = std::stod(value);
            } else if (key == "seed") {
                out.seed = std::stoull(value);
            } else if (key == "channels") {
                out.channels = std::stoull(value);
            } else if (key == "samples") {
                out.samples = std::stoull(value);
            } else if (key == "name") {
                out.name = value;
            } else {
                throw ValidationError("unknown synthetic spec key '" + key + "'");
            }
        } catch (const std::logic_error&) {
            throw ValidationError("synthetic spec value '" + item + "' is not a number");
        }
    }
    if (out.channels == 0 || out.samples == 0) {
        throw ValidationError("synthetic spec needs channels=N and samples=N");
    }
    if (!(out.sigma >= 0.0) || !std::isfinite(out.sigma) || !std::isfinite(out.mu)) {
        throw ValidationError("synthetic spec sigma/mu invalid");
    }
    return out;
}

// --- report helpers ---------------------------------------------------------

struct CsvWriter {
    std::string text = "tensor,section,name,index,value\n";

    void row(const std::string& tensor, const char* section, const std::string& name,
             long long index, const std::string& value) {
        text += tensor;
        text += ',';
        text += section;
        text += ',';
        text += name;
        text += ',';
        text += index < 0 ? std::string() : std::to_string(index);
        text += ',';
        text += value;
        text += '\n';
    }
};

struct MeasuredCosts {
    bool present = false;
    double dense = 0.0, sparse = 0.0, lowrank = 0.0;
};

MeasuredCosts measured_costs_for(const json* calib, const std::string& name) {
    MeasuredCosts out;
    if (!calib) return out;
    const json* entry = nullptr;
    if (calib->contains(name)) {
        entry = &calib->at(name);
    } else if (calib->contains("*")) {
        entry = &calib->at("*");
    }
    if (!entry) return out;
    out.present = true;
    out.dense = get_field<double>(*entry, "dense", "cost calibration '" + name + "'");
    out.sparse = get_field<double>(*entry, "sparse", "cost calibration '" + name + "'");
    out.lowrank = get_field<double>(*entry, "lowrank", "cost calibration '" + name + "'");
    return out;
}

}  // namespace

std::size_t worker_count(std::size_t jobs) {
    if (jobs <= 1) return jobs;
    std::size_t n = std::thread::hardware_concurrency();
    if (n == 0) n = 1;
    if (const char* env = std::getenv("SLRC_THREADS")) {
        char* end = nullptr;
        const unsigned long parsed = std::strtoul(env, &end, 10);
        if (end == env || *end != '\0' || parsed == 0) {
            throw ValidationError("SLRC_THREADS must be a positive integer");
        }
        n = static_cast<std::size_t>(parsed);
    }
    return std::min(n, jobs);
}

void cmd_calibrate(const CalibrateOptions& opts) {
    if (opts.out_path.empty()) throw ValidationError("calibrate needs an output path");
    const bool have_files = !opts.activation_manifests.empty();
    const bool have_synth = !opts.synthetic_spec.empty();
    if (have_files == have_synth) {
        throw ValidationError("calibrate takes either activation manifests or a synthetic spec");
    }

    CalibrationStats stats;
    if (have_synth) {
        const SyntheticSpec spec = parse_synthetic(opts.synthetic_spec);
        SeededRng rng(spec.seed);
        TensorCalibration t;
        t.name = spec.name;
        t.norms.resize(spec.channels);
        for (std::size_t j = 0; j < spec.channels; ++j) {
            const double scale = std::exp(spec.mu + spec.sigma * rng.next_gaussian());
            double acc = 0.0;
            for (std::size_t s = 0; s < spec.samples; ++s) {
                const double v = scale * rng.next_gaussian();
                acc += v * v;
            }
            t.norms[j] = std::sqrt(acc);
        }
        t.sample_count = spec.samples;
        t.source_hash = stable_hash64(opts.synthetic_spec);
        stats.tensors.push_back(std::move(t));
    } else {
        std::map<std::string, NormAccumulator> acc;
        for (const std::string& manifest_path : opts.activation_manifests) {
            const json j = parse_json_file(manifest_path);
            if (get_field<int>(j, "format_version", manifest_path) != kBundleFormatVersion) {
                throw ValidationError(manifest_path + ": unsupported format_version");
            }
            for (const json& tj : get_field<json>(j, "tensors", manifest_path)) {
                const auto name = get_field<std::string>(tj, "name", manifest_path);
                const std::string where = manifest_path + ": tensor '" + name + "'";
                const auto channels = get_field<std::size_t>(tj, "rows", where);
                const auto samples = get_field<std::size_t>(tj, "cols", where);
                if (channels == 0 || samples == 0) {
                    throw ValidationError(where + ": empty activation matrix");
                }
                if (get_field<std::string>(tj, "dtype", where) != "f32le") {
                    throw ValidationError(where + ": only dtype 'f32le' is supported");
                }
                NormAccumulator& a = acc[name];
                if (a.channels == 0) {
                    a.channels = channels;
                    a.sumsq.assign(channels, 0.0);
                    a.hash = stable_hash64(name);
                } else if (a.channels != channels) {
                    throw ValidationError(where + ": channel count differs between batches");
                }
                const std::string blob_path =
                    (fs::path(manifest_path).parent_path() /
                     get_field<std::string>(tj, "blob_path", where))
                        .string();
                stream_activation_blob(blob_path, channels, samples, name, a);
            }
        }
        for (auto& [name, a] : acc) {
            TensorCalibration t;
            t.name = name;
            t.norms.resize(a.channels);
            for (std::size_t j = 0; j < a.channels; ++j) t.norms[j] = std::sqrt(a.sumsq[j]);
            t.sample_count = a.samples;
            t.source_hash = a.hash;
            stats.tensors.push_back(std::move(t));
        }
    }
    save_calibration(opts.out_path, stats);
}

CompressionPlan plan_for_tensor(const CompressOptions& opts, const std::string& name,
                                std::size_t rows, std::size_t cols) {
    CompressionPlan plan;
    plan.remaining_fraction = opts.remaining_fraction;
    if (opts.rank >= 0) {
        plan.rank = static_cast<std::size_t>(opts.rank);
    } else {
        plan.rank = static_cast<std::size_t>(
            std::llround(128.0 * static_cast<double>(std::min(rows, cols)) / 4096.0));
    }
    plan.preserve_fraction = opts.preserve_fraction;
    plan.iterations = opts.iterations;
    plan.seed = opts.seed ^ stable_hash64(name);
    plan.power_iters = opts.power_iters;
    plan.epsilon = opts.epsilon;
    plan.safeguard = opts.safeguard;
    plan.reuse_projection = opts.reuse_projection;
    plan.variant = opts.independent_a2 ? BrpVariant::IndependentGaussian
                                       : BrpVariant::SharedProjection;
    return plan;
}

void cmd_compress(const CompressOptions& opts) {
    if (opts.out_dir.empty()) throw ValidationError("compress needs an output directory");
    const WeightBundle weights = load_weight_bundle(opts.weights_path);
    const CalibrationStats stats = load_calibration(opts.calib_path);

    // Fail on plan or calibration problems before spending any compute.
    for (const WeightTensor& t : weights.tensors) {
        const std::size_t m = t.weights.rows(), n = t.weights.cols();
        if (!stats.find(t.name, n)) {
            throw ValidationError("tensor '" + t.name + "': no calibration with " +
                                  std::to_string(n) + " channels");
        }
        try {
            allocate_budget(m, n, plan_for_tensor(opts, t.name, m, n));
        } catch (const ValidationError& e) {
            throw ValidationError("tensor '" + t.name + "': " + e.what());
        }
    }

    std::vector<CompressedTensor> results(weights.tensors.size());
    std::atomic<std::size_t> cursor{0};
    std::mutex error_mu;
    std::exception_ptr first_error;
    auto run = [&]() {
        while (true) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= weights.tensors.size()) return;
            {
                std::lock_guard<std::mutex> lock(error_mu);
                if (first_error) return;
            }
            const WeightTensor& t = weights.tensors[i];
            try {
                const CompressionPlan plan =
                    plan_for_tensor(opts, t.name, t.weights.rows(), t.weights.cols());
                const TensorCalibration* calib = stats.find(t.name, t.weights.cols());
                const ColumnScaling scaling(calib->norms, plan.epsilon);
                CompressedTensor out;
                out.name = t.name;
                out.layer = compress(t.weights, scaling, plan, t.bias);
                out.norms = calib->norms;
                results[i] = std::move(out);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };

    const std::size_t workers = worker_count(weights.tensors.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
    run();
    for (std::thread& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);

    CompressedBundle bundle;
    bundle.tensors = std::move(results);
    bundle.provenance = {
        {"remaining_fraction", fmt_num(opts.remaining_fraction)},
        {"rank", opts.rank < 0 ? std::string("auto") : std::to_string(opts.rank)},
        {"preserve_fraction", fmt_num(opts.preserve_fraction)},
        {"iterations", std::to_string(opts.iterations)},
        {"seed", std::to_string(opts.seed)},
        {"power_iters", std::to_string(opts.power_iters)},
        {"epsilon", fmt_num(opts.epsilon)},
        {"safeguard", opts.safeguard ? "true" : "false"},
        {"reuse_projection", opts.reuse_projection ? "true" : "false"},
        {"variant", opts.independent_a2 ? "independent-gaussian" : "shared"},
    };
    save_compressed_bundle(opts.out_dir, bundle);
}

void cmd_report(const ReportOptions& opts) {
    if (opts.format != "csv" && opts.format != "json") {
        throw ValidationError("report format must be csv or json");
    }
    const CompressedBundle bundle = load_compressed_bundle(opts.bundle_dir);
    const WeightBundle weights = load_weight_bundle(opts.weights_path);

    json measured;
    const json* measured_ptr = nullptr;
    if (!opts.cost_calibration.empty()) {
        measured = parse_json_file(opts.cost_calibration);
        measured_ptr = &measured;
    }
    CalibrationStats stats;
    const bool check_calib = !opts.calib_path.empty();
    if (check_calib) stats = load_calibration(opts.calib_path);
    WeightBundle eval;
    const bool with_eval = !opts.eval_path.empty();
    if (with_eval) eval = load_weight_bundle(opts.eval_path);

    const CostModel model{opts.overhead_factor};
    CsvWriter csv;
    json out_tensors = json::object();

    for (const CompressedTensor& t : bundle.tensors) {
        const CompressedLayer& layer = t.layer;
        const WeightTensor* wt = weights.find(t.name);
        if (!wt || wt->weights.rows() != layer.rows || wt->weights.cols() != layer.cols) {
            throw ValidationError("tensor '" + t.name +
                                  "' missing from the weight bundle or shape differs");
        }
        if (check_calib) {
            const TensorCalibration* c = stats.find(t.name, layer.cols);
            if (!c) {
                throw ValidationError("tensor '" + t.name + "': no calibration with " +
                                      std::to_string(layer.cols) + " channels");
            }
            for (std::size_t j = 0; j < layer.cols; ++j) {
                const double want = t.norms[j], got = c->norms[j];
                if (std::abs(want - got) > 1e-6 * std::max(1.0, std::abs(want))) {
                    throw ValidationError("tensor '" + t.name +
                                          "': calibration norms disagree with the bundle");
                }
            }
        }

        const ColumnScaling scaling(t.norms, layer.plan.epsilon);
        const double recomputed = loss_of(wt->weights, layer.s, layer.factors, scaling);
        const ConvergenceTrace& trace = layer.trace;
        const double start = trace.start_loss;
        const double oneshot = trace.oneshot_loss;
        const auto frac = [](double value, double base) {
            return base > 0.0 ? value / base : 0.0;
        };

        const SalienceMap sal = salience_of(wt->weights, scaling);
        const double kept_for_80 = fraction_for_salience(sal, 0.8);
        const auto curve = retention_curve(sal, 21);

        const MeasuredCosts mc = measured_costs_for(measured_ptr, t.name);
        const CostReport cost = mc.present
                                    ? cost_report_from_costs(mc.dense, mc.sparse, mc.lowrank)
                                    : cost_report(layer, model);

        json tj;
        json summary{{"rows", layer.rows},
                     {"cols", layer.cols},
                     {"rank", layer.factors.rank},
                     {"nnz", layer.s.nnz()},
                     {"density",
                      static_cast<double>(layer.s.nnz()) /
                          (static_cast<double>(layer.rows) * static_cast<double>(layer.cols))},
                     {"realized_fraction", layer.realized_fraction()},
                     {"final_loss", layer.final_loss},
                     {"recomputed_final_loss", recomputed},
                     {"initial_norm", trace.initial_norm},
                     {"start_loss", start},
                     {"oneshot_loss", oneshot},
                     {"final_frac_of_start", frac(layer.final_loss, start)},
                     {"final_frac_of_oneshot", frac(layer.final_loss, oneshot)},
                     {"planned_iterations", trace.planned_iterations},
                     {"completed_iterations", trace.completed_iterations()},
                     {"early_stopped", trace.early_stopped ? 1 : 0},
                     {"safeguard_events", trace.safeguard_events()},
                     {"kept_fraction_for_80pct_salience", kept_for_80}};
        tj["summary"] = summary;
        for (const auto& [key, value] : summary.items()) {
            csv.row(t.name, "summary", key, -1,
                    value.is_number_float() ? fmt_num(value.get<double>()) : value.dump());
        }

        const json budget{{"sparse_density", layer.split.sparse_density},
                          {"lowrank_share", layer.split.lowrank_share},
                          {"preserve_fraction", layer.split.preserve_fraction},
                          {"total", layer.split.total()}};
        tj["budget"] = budget;
        for (const auto& [key, value] : budget.items()) {
            csv.row(t.name, "budget", key, -1, fmt_num(value.get<double>()));
        }

        json trace_j{{"post_svd", trace.post_svd}, {"post_sparsify", trace.post_sparsify}};
        std::vector<double> frac_start, frac_oneshot;
        for (double e : trace.post_sparsify) {
            frac_start.push_back(frac(e, start));
            frac_oneshot.push_back(frac(e, oneshot));
        }
        trace_j["post_sparsify_frac_of_start"] = frac_start;
        trace_j["post_sparsify_frac_of_oneshot"] = frac_oneshot;
        tj["trace"] = trace_j;
        for (std::size_t i = 0; i < trace.post_svd.size(); ++i) {
            const auto idx = static_cast<long long>(i + 1);
            csv.row(t.name, "trace", "post_svd", idx, fmt_num(trace.post_svd[i]));
            csv.row(t.name, "trace", "post_sparsify", idx, fmt_num(trace.post_sparsify[i]));
            csv.row(t.name, "trace", "post_sparsify_frac_of_start", idx,
                    fmt_num(frac_start[i]));
            csv.row(t.name, "trace", "post_sparsify_frac_of_oneshot", idx,
                    fmt_num(frac_oneshot[i]));
        }

        json kept = json::array(), retained = json::array();
        for (std::size_t i = 0; i < curve.size(); ++i) {
            kept.push_back(curve[i].first);
            retained.push_back(curve[i].second);
            const auto idx = static_cast<long long>(i);
            csv.row(t.name, "retention", "kept_fraction", idx, fmt_num(curve[i].first));
            csv.row(t.name, "retention", "salience_fraction", idx, fmt_num(curve[i].second));
        }
        tj["retention"] = json{{"kept_fraction", kept}, {"salience_fraction", retained}};

        tj["cost"] = json{{"dense", cost.dense},
                          {"sparse", cost.sparse},
                          {"lowrank", cost.lowrank},
                          {"sum", cost.sum},
                          {"speedup", cost.speedup},
                          {"speedup_formatted", format_speedup(cost.speedup)},
                          {"measured", mc.present}};
        csv.row(t.name, "cost", "dense", -1, fmt_num(cost.dense));
        csv.row(t.name, "cost", "sparse", -1, fmt_num(cost.sparse));
        csv.row(t.name, "cost", "lowrank", -1, fmt_num(cost.lowrank));
        csv.row(t.name, "cost", "sum", -1, fmt_num(cost.sum));
        csv.row(t.name, "cost", "speedup", -1, fmt_num(cost.speedup));
        csv.row(t.name, "cost", "speedup_formatted", -1, format_speedup(cost.speedup));

        if (with_eval) {
            const WeightTensor* et = eval.find(t.name);
            if (!et || et->weights.rows() != layer.cols) {
                throw ValidationError("tensor '" + t.name +
                                      "' missing from the eval activations or shape differs");
            }
            const ReconstructionReport rec =
                reconstruction_report(layer, wt->weights, et->weights);
            tj["reconstruction"] = json{{"frobenius_error", rec.frobenius_error},
                                        {"relative_error", rec.relative_error},
                                        {"surrogate_loss", rec.surrogate_loss}};
            csv.row(t.name, "reconstruction", "frobenius_error", -1,
                    fmt_num(rec.frobenius_error));
            csv.row(t.name, "reconstruction", "relative_error", -1,
                    fmt_num(rec.relative_error));
            csv.row(t.name, "reconstruction", "surrogate_loss", -1,
                    fmt_num(rec.surrogate_loss));
        }
        out_tensors[t.name] = std::move(tj);
    }

    if (opts.format == "csv") {
        write_output(opts.out_path, csv.text);
    } else {
        const json out{{"format_version", kBundleFormatVersion}, {"tensors", out_tensors}};
        write_output(opts.out_path, out.dump(2) + "\n");
    }
}

void cmd_sweep(const SweepOptions& opts) {
    if (opts.out_dir.empty()) throw ValidationError("sweep needs an output directory");
    if (opts.rank_list.empty() || opts.iters_list.empty() || opts.preserve_list.empty() ||
        opts.seed_list.empty()) {
        throw ValidationError("sweep lists must be non-empty");
    }
    const WeightBundle weights = load_weight_bundle(opts.weights_path);
    const CalibrationStats stats = load_calibration(opts.calib_path);

    std::string runs = "tensor,rank,rank_used,iterations,preserve,seed,final_loss,"
                       "realized_fraction,completed_iterations,early_stopped,"
                       "safeguard_events\n";
    std::string agg = "tensor,rank,rank_used,iterations,preserve,seeds,mean_final_loss,"
                      "std_final_loss,cv_final_loss,mean_realized_fraction\n";
    std::string skipped = "tensor,rank,iterations,preserve,reason\n";

    for (const WeightTensor& t : weights.tensors) {
        const std::size_t m = t.weights.rows(), n = t.weights.cols();
        const TensorCalibration* calib = stats.find(t.name, n);
        if (!calib) {
            throw ValidationError("tensor '" + t.name + "': no calibration with " +
                                  std::to_string(n) + " channels");
        }
        for (long long rank : opts.rank_list) {
            for (std::size_t iters : opts.iters_list) {
                for (double preserve : opts.preserve_list) {
                    const std::string rank_label =
                        rank < 0 ? std::string("auto") : std::to_string(rank);
                    CompressOptions base;
                    base.remaining_fraction = opts.remaining_fraction;
                    base.rank = rank;
                    base.preserve_fraction = preserve;
                    base.iterations = iters;
                    base.power_iters = opts.power_iters;
                    base.epsilon = opts.epsilon;

                    std::vector<double> losses, realized;
                    std::string failure;
                    for (std::uint64_t seed : opts.seed_list) {
                        base.seed = seed;
                        const CompressionPlan plan = plan_for_tensor(base, t.name, m, n);
                        try {
                            const ColumnScaling scaling(calib->norms, plan.epsilon);
                            const CompressedLayer layer =
                                compress(t.weights, scaling, plan, t.bias);
                            losses.push_back(layer.final_loss);
                            realized.push_back(layer.realized_fraction());
                            runs += t.name + "," + rank_label + "," +
                                    std::to_string(plan.rank) + "," + std::to_string(iters) +
                                    "," + fmt_num(preserve) + "," + std::to_string(seed) +
                                    "," + fmt_num(layer.final_loss) + "," +
                                    fmt_num(layer.realized_fraction()) + "," +
                                    std::to_string(layer.trace.completed_iterations()) + "," +
                                    (layer.trace.early_stopped ? "1" : "0") + "," +
                                    std::to_string(layer.trace.safeguard_events()) + "\n";
                        } catch (const ValidationError& e) {
                            failure = e.what();
                            break;
                        }
                    }
                    if (!failure.empty()) {
                        skipped += t.name + "," + rank_label + "," + std::to_string(iters) +
                                   "," + fmt_num(preserve) + "," + csv_quote(failure) + "\n";
                        std::cerr << "sweep: skipping " << t.name << " rank=" << rank_label
                                  << " iters=" << iters << " preserve=" << preserve << ": "
                                  << failure << "\n";
                        continue;
                    }
                    double mean = 0.0, mean_realized = 0.0;
                    for (double x : losses) mean += x;
                    mean /= static_cast<double>(losses.size());
                    for (double x : realized) mean_realized += x;
                    mean_realized /= static_cast<double>(realized.size());
                    double stddev = 0.0;
                    if (losses.size() > 1) {
                        double acc = 0.0;
                        for (double x : losses) acc += (x - mean) * (x - mean);
                        stddev = std::sqrt(acc / static_cast<double>(losses.size() - 1));
                    }
                    const double cv = mean > 0.0 ? stddev / mean : 0.0;
                    const CompressionPlan plan = plan_for_tensor(base, t.name, m, n);
                    agg += t.name + "," + rank_label + "," + std::to_string(plan.rank) + "," +
                           std::to_string(iters) + "," + fmt_num(preserve) + "," +
                           std::to_string(opts.seed_list.size()) + "," + fmt_num(mean) + "," +
                           fmt_num(stddev) + "," + fmt_num(cv) + "," +
                           fmt_num(mean_realized) + "\n";
                }
            }
        }
    }

    std::error_code ec;
    fs::create_directories(opts.out_dir, ec);
    atomic_write_file((fs::path(opts.out_dir) / "runs.csv").string(), runs);
    atomic_write_file((fs::path(opts.out_dir) / "sweep.csv").string(), agg);
    atomic_write_file((fs::path(opts.out_dir) / "skipped.csv").string(), skipped);
}

void cmd_inspect(const std::string& bundle_dir, std::ostream& out) {
    const CompressedBundle bundle = load_compressed_bundle(bundle_dir);
    out << "bundle " << bundle_dir << "\n";
    out << "format_version " << kBundleFormatVersion << ", rng " << SeededRng::kAlgorithm
        << "\n";
    if (!bundle.provenance.empty()) {
        out << "flags:";
        for (const auto& [key, value] : bundle.provenance) out << " " << key << "=" << value;
        out << "\n";
    }
    for (const CompressedTensor& t : bundle.tensors) {
        const CompressedLayer& layer = t.layer;
        out << t.name << " " << layer.rows << "x" << layer.cols << " rank "
            << layer.factors.rank << " nnz " << layer.s.nnz() << " realized "
            << fmt_num(layer.realized_fraction()) << " final_loss "
            << fmt_num(layer.final_loss) << " iters " << layer.trace.completed_iterations()
            << "/" << layer.trace.planned_iterations
            << (layer.trace.early_stopped ? " early-stop" : "") << " safeguards "
            << layer.trace.safeguard_events() << (layer.bias.empty() ? "" : " bias") << "\n";
    }
}

}  // namespace slrc

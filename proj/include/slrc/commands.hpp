#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "slrc/bundle.hpp"

namespace slrc {

struct CalibrateOptions {
    std::vector<std::string> activation_manifests;  // streamed in order
    std::string synthetic_spec;  // e.g. "lognormal:sigma=2,seed=0,channels=64,samples=256"
    std::string out_path;
};

/// One pass over activation blobs (or a synthetic generator) into channel
/// norms; memory stays bounded by the channel count.
void cmd_calibrate(const CalibrateOptions& opts);

struct CompressOptions {
    std::string weights_path;
    std::string calib_path;
    std::string out_dir;
    double remaining_fraction = 0.5;
    long long rank = -1;  // negative: round(128 * min(m,n) / 4096)
    double preserve_fraction = 0.01;
    std::size_t iterations = 40;
    std::uint64_t seed = 0;
    std::size_t power_iters = 2;
    double epsilon = kDefaultNormEpsilon;
    bool safeguard = true;
    bool reuse_projection = false;
    bool independent_a2 = false;
};

/// Compresses every tensor of the weight bundle independently on a worker
/// pool (SLRC_THREADS caps it) and writes a compressed bundle.
void cmd_compress(const CompressOptions& opts);

struct ReportOptions {
    std::string bundle_dir;
    std::string weights_path;
    std::string calib_path;        // optional: cross-check embedded norms
    std::string eval_path;         // optional: true-activation error section
    std::string cost_calibration;  // optional: measured per-part costs, JSON
    std::string out_path;          // empty: stdout
    std::string format = "csv";    // csv | json
    double overhead_factor = 1.0;
};

/// Per-tensor loss traces (raw and normalized), budget split, retention
/// curve samples, and cost accounting, as CSV or JSON.
void cmd_report(const ReportOptions& opts);

struct SweepOptions {
    std::string weights_path;
    std::string calib_path;
    std::string out_dir;
    std::vector<long long> rank_list;  // negative entries: auto rank
    std::vector<std::size_t> iters_list;
    std::vector<double> preserve_list;
    std::vector<std::uint64_t> seed_list;
    double remaining_fraction = 0.5;
    std::size_t power_iters = 2;
    double epsilon = kDefaultNormEpsilon;
};

/// Grid of compression runs; per-run rows plus per-cell mean and std across
/// seeds. Infeasible cells are recorded and skipped.
void cmd_sweep(const SweepOptions& opts);

void cmd_inspect(const std::string& bundle_dir, std::ostream& out);

/// The plan cmd_compress uses for one tensor: auto rank scaling and the
/// name-keyed seed derivation, exposed so drivers and tests can reproduce
/// any tensor's run in isolation.
CompressionPlan plan_for_tensor(const CompressOptions& opts, const std::string& name,
                                std::size_t rows, std::size_t cols);

/// Worker count for `jobs` parallel tasks, capped by SLRC_THREADS.
std::size_t worker_count(std::size_t jobs);

}  // namespace slrc

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "slrc/commands.hpp"

namespace {

// Exit codes: 0 ok, 2 bad input or flags, 3 numerical failure, 4 filesystem trouble.
constexpr int kOk = 0;
constexpr int kUsage = 2;
constexpr int kNumerical = 3;
constexpr int kIo = 4;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparse plus low-rank weight compression"};
    app.require_subcommand(1);

    slrc::CalibrateOptions calib;
    CLI::App* calibrate = app.add_subcommand(
        "calibrate", "collect per-channel activation norms into a calibration file");
    calibrate->add_option("--activations", calib.activation_manifests,
                          "activation bundle manifest (repeatable; rows are channels)");
    calibrate->add_option("--synthetic", calib.synthetic_spec,
                          "synthesize norms, e.g. lognormal:sigma=1.5,seed=7,channels=64,samples=256");
    calibrate->add_option("--out", calib.out_path, "calibration manifest to write")->required();

    slrc::CompressOptions comp;
    CLI::App* compress =
        app.add_subcommand("compress", "compress a weight bundle into sparse plus low-rank form");
    compress->add_option("--weights", comp.weights_path, "weight bundle manifest")->required();
    compress->add_option("--calib", comp.calib_path, "calibration manifest")->required();
    compress->add_option("--out", comp.out_dir, "output bundle directory")->required();
    compress->add_option("--remaining", comp.remaining_fraction,
                         "fraction of parameters to keep (0, 1]");
    compress->add_option("--rank", comp.rank, "low-rank width; negative picks one from the shape");
    compress->add_option("--preserve", comp.preserve_fraction,
                         "fraction pinned to the highest-salience entries");
    compress->add_option("--iters", comp.iterations, "alternating iterations (0 = prune only)");
    compress->add_option("--seed", comp.seed, "base seed; per-tensor seeds derive from the name");
    compress->add_option("--power-iters", comp.power_iters, "projection power iterations");
    compress->add_option("--epsilon", comp.epsilon, "lower clamp for channel norms");
    compress->add_flag("--no-safeguard", [&comp](std::int64_t) { comp.safeguard = false; },
                       "disable the monotone safeguard")
        ->group("");
    compress->add_flag("--reuse-projection", comp.reuse_projection,
                       "reuse the first iteration's projection seed")
        ->group("");
    compress->add_flag("--brp-independent-a2", comp.independent_a2,
                       "draw the second projection independently")
        ->group("");

    slrc::ReportOptions rep;
    CLI::App* report = app.add_subcommand("report", "evaluate a compressed bundle");
    report->add_option("--bundle", rep.bundle_dir, "compressed bundle directory")->required();
    report->add_option("--weights", rep.weights_path, "original weight bundle manifest")
        ->required();
    report->add_option("--calib", rep.calib_path,
                       "calibration manifest to cross-check against the bundle");
    report->add_option("--eval", rep.eval_path,
                       "held-out activation bundle for reconstruction error");
    report->add_option("--cost-calibration", rep.cost_calibration,
                       "measured per-tensor kernel costs (json)");
    report->add_option("--overhead", rep.overhead_factor,
                       "sparse kernel overhead factor for the cost model");
    report->add_option("--format", rep.format, "csv or json");
    report->add_option("--out", rep.out_path, "output path (default stdout)");

    slrc::SweepOptions sweep;
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "grid-run plans and tabulate losses");
    sweep_cmd->add_option("--weights", sweep.weights_path, "weight bundle manifest")->required();
    sweep_cmd->add_option("--calib", sweep.calib_path, "calibration manifest")->required();
    sweep_cmd->add_option("--out", sweep.out_dir, "directory for runs/sweep/skipped csv files")
        ->required();
    sweep_cmd->add_option("--rank", sweep.rank_list, "ranks to try; negative picks from the shape")
        ->required();
    sweep_cmd->add_option("--iters", sweep.iters_list, "iteration counts to try")->required();
    sweep_cmd->add_option("--preserve", sweep.preserve_list, "preserve fractions to try")
        ->required();
    sweep_cmd->add_option("--seed", sweep.seed_list, "seeds to aggregate over")->required();
    sweep_cmd->add_option("--remaining", sweep.remaining_fraction,
                          "fraction of parameters to keep (0, 1]");
    sweep_cmd->add_option("--power-iters", sweep.power_iters, "projection power iterations");
    sweep_cmd->add_option("--epsilon", sweep.epsilon, "lower clamp for channel norms");

    std::string inspect_dir;
    CLI::App* inspect = app.add_subcommand("inspect", "print a compressed bundle summary");
    inspect->add_option("dir", inspect_dir, "compressed bundle directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (calibrate->parsed()) {
            slrc::cmd_calibrate(calib);
        } else if (compress->parsed()) {
            slrc::cmd_compress(comp);
        } else if (report->parsed()) {
            slrc::cmd_report(rep);
        } else if (sweep_cmd->parsed()) {
            slrc::cmd_sweep(sweep);
        } else if (inspect->parsed()) {
            slrc::cmd_inspect(inspect_dir, std::cout);
        }
    } catch (const slrc::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const slrc::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kNumerical;
    } catch (const slrc::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kIo;
    }
    return kOk;
}

// Command-line entry point wiring the reconstruction toolkit into
// reproducible workflows. Exit codes: 0 ok, 2 validation, 3 I/O, 4 numerical.

#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cardiomm/cli/commands.hpp"

using namespace cardiomm;

int main(int argc, char** argv) {
    CLI::App app{"desk-scale text-conditioned multi-coil MRI reconstruction toolkit"};
    app.require_subcommand(1);

    uint64_t seed_value = 0;
    bool seed_set = false;
    auto add_seed = [&](CLI::App* cmd) {
        cmd->add_option("--seed", seed_value, "master seed (generated and recorded when omitted)")
            ->each([&](const std::string&) { seed_set = true; });
    };
    auto opt_seed = [&]() -> std::optional<uint64_t> {
        if (seed_set) return seed_value;
        return std::nullopt;
    };

    // synth
    cli::SynthOptions synth;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic phantom dataset");
    synth_cmd->add_option("--spec", synth.spec_file, "dataset spec JSON")->required();
    synth_cmd->add_option("--out", synth.out, "output dataset directory")->required();
    add_seed(synth_cmd);

    // mask
    cli::MaskOptions mask;
    auto* mask_cmd = app.add_subcommand("mask", "generate an undersampling mask");
    mask_cmd->add_option("--pattern", mask.pattern, "uniform|random|radial");
    mask_cmd->add_option("--ny", mask.ny, "phase-encode lines");
    mask_cmd->add_option("--nx", mask.nx, "readout points");
    mask_cmd->add_option("--af", mask.af, "nominal acceleration factor");
    mask_cmd->add_option("--acs-lines", mask.acs_lines, "ACS line count (uniform/random)");
    mask_cmd->add_option("--acs-block", mask.acs_block, "ACS block size (radial)");
    mask_cmd->add_option("--out", mask.out, "output directory")->required();
    add_seed(mask_cmd);

    // recon
    cli::ReconOptions recon;
    auto* recon_cmd = app.add_subcommand("recon", "reconstruct one record");
    recon_cmd->add_option("--input", recon.input, "record directory")->required();
    recon_cmd->add_option("--method", recon.method, "zero-filled|conventional|cardiomm");
    recon_cmd->add_option("--checkpoint", recon.checkpoint, "model checkpoint directory");
    recon_cmd->add_option("--mask", recon.mask_file, "mask.json to apply");
    recon_cmd->add_option("--pattern", recon.pattern, "mask pattern when generating");
    recon_cmd->add_option("--af", recon.af, "nominal acceleration factor");
    recon_cmd->add_flag("--ref", recon.with_ref_metrics, "emit metrics against the stored reference");
    recon_cmd->add_option("--max-iters", recon.cg.max_iters, "CG iterations (conventional)");
    recon_cmd->add_option("--tol", recon.cg.tol, "CG tolerance (conventional)");
    recon_cmd->add_option("--lambda", recon.cg.lambda_reg, "Tikhonov weight (conventional)");
    recon_cmd->add_option("--threads", recon.threads, "intra-op worker threads");
    recon_cmd->add_option("--out", recon.out, "output directory")->required();
    add_seed(recon_cmd);

    // train
    cli::TrainOptions train;
    auto* train_cmd = app.add_subcommand("train", "train the unrolled reconstruction model");
    train_cmd->add_option("--data", train.data, "training dataset directory")->required();
    train_cmd->add_option("--val", train.val_data, "validation dataset directory");
    train_cmd->add_option("--config", train.config_file, "JSON config with model/train sections");
    train_cmd->add_option("--precision", train.precision, "f32 (run mode) or f64 (reproducibility)");
    train_cmd->add_option("--threads", train.threads, "intra-op worker threads");
    train_cmd->add_option("--out", train.out, "output directory")->required();
    add_seed(train_cmd);

    // eval
    cli::EvalOptions eval;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a method over a dataset");
    eval_cmd->add_option("--data", eval.data, "dataset directory")->required();
    eval_cmd->add_option("--method", eval.method, "zero-filled|conventional|cardiomm");
    eval_cmd->add_option("--checkpoint", eval.checkpoint, "model checkpoint directory");
    eval_cmd->add_option("--pattern", eval.pattern, "undersampling pattern");
    eval_cmd->add_option("--af", eval.af, "nominal acceleration factor");
    eval_cmd->add_option("--threads", eval.threads, "intra-op worker threads");
    eval_cmd->add_option("--out", eval.out, "output directory")->required();
    add_seed(eval_cmd);

    // analyze
    cli::AnalyzeOptions analyze;
    auto* analyze_cmd = app.add_subcommand("analyze", "biomarker analyses on a dataset");
    analyze_cmd->add_option("--data", analyze.data, "dataset directory")->required();
    analyze_cmd->add_option("--task", analyze.task, "phenotypes|fit-t1|fit-t2|fwhm|lvmwt");
    analyze_cmd->add_option("--insertion-angle", analyze.insertion_angle,
                            "anterior RV insertion angle (radians)");
    analyze_cmd->add_option("--out", analyze.out, "output directory")->required();
    add_seed(analyze_cmd);

    // embed-dump
    cli::EmbedDumpOptions embed;
    auto* embed_cmd = app.add_subcommand("embed-dump", "dump projected text embeddings");
    embed_cmd->add_option("--data", embed.data, "dataset directory")->required();
    embed_cmd->add_option("--checkpoint", embed.checkpoint, "model checkpoint directory");
    embed_cmd->add_option("--out", embed.out, "output directory")->required();
    add_seed(embed_cmd);

    // inspect
    std::string inspect_dir;
    auto* inspect_cmd = app.add_subcommand("inspect", "print a container or run manifest");
    inspect_cmd->add_option("dir", inspect_dir, "record/dataset/run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*synth_cmd) {
            synth.seed = opt_seed();
            return cli::cmd_synth(synth);
        }
        if (*mask_cmd) {
            mask.seed = opt_seed();
            return cli::cmd_mask(mask);
        }
        if (*recon_cmd) {
            recon.seed = opt_seed();
            return cli::cmd_recon(recon);
        }
        if (*train_cmd) {
            train.seed = opt_seed();
            return cli::cmd_train(train);
        }
        if (*eval_cmd) {
            eval.seed = opt_seed();
            return cli::cmd_eval(eval);
        }
        if (*analyze_cmd) {
            analyze.seed = opt_seed();
            return cli::cmd_analyze(analyze);
        }
        if (*embed_cmd) {
            embed.seed = opt_seed();
            return cli::cmd_embed_dump(embed);
        }
        if (*inspect_cmd) return cli::cmd_inspect(inspect_dir);
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 3;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

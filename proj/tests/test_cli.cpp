#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "cardiomm/cli/commands.hpp"

using namespace cardiomm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream out(p);
    out << s;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

int count_lines(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    int n = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++n;
    return n;
}

} // namespace

TEST_CASE("synth: spec with 4 records writes 4 records, reruns give identical digests") {
    TempDir tmp("cmm_cli_synth");
    write_text(tmp.path / "spec.json",
               R"({"records": [{"kind": "cine", "count": 4, "grid": 32, "coils": 2, "snr": 30}]})");

    cli::SynthOptions opt;
    opt.spec_file = tmp.path / "spec.json";
    opt.out = tmp.path / "data_a";
    opt.seed = 7;
    CHECK(cli::cmd_synth(opt) == 0);
    auto names = dataset_read_index(opt.out);
    CHECK(names.size() == 4);

    opt.out = tmp.path / "data_b";
    CHECK(cli::cmd_synth(opt) == 0);
    for (const auto& name : names) {
        auto a = nlohmann::json::parse(read_text(tmp.path / "data_a" / name / "manifest.json"));
        auto b = nlohmann::json::parse(read_text(tmp.path / "data_b" / name / "manifest.json"));
        CHECK(a.at("blobs") == b.at("blobs"));
    }
    // run manifests are byte-identical (timing lives in a sidecar)
    CHECK(read_text(tmp.path / "data_a" / "run_manifest.json") ==
          read_text(tmp.path / "data_b" / "run_manifest.json"));
}

TEST_CASE("synth: bad spec field fails validation naming the field") {
    TempDir tmp("cmm_cli_badspec");
    write_text(tmp.path / "spec.json", R"({"records": [{"kind": "cine", "count": 0}]})");
    cli::SynthOptions opt;
    opt.spec_file = tmp.path / "spec.json";
    opt.out = tmp.path / "data";
    opt.seed = 1;
    CHECK_THROWS_WITH_AS(cli::cmd_synth(opt), doctest::Contains("count"), ValidationError);
}

TEST_CASE("mask subcommand emits RLE json, a PGM image, and a manifest") {
    TempDir tmp("cmm_cli_mask");
    cli::MaskOptions opt;
    opt.pattern = "random";
    opt.ny = 64;
    opt.nx = 48;
    opt.af = 4.0;
    opt.acs_lines = 12;
    opt.seed = 3;
    opt.out = tmp.path / "mask";
    CHECK(cli::cmd_mask(opt) == 0);
    CHECK(fs::exists(opt.out / "mask.json"));
    CHECK(fs::exists(opt.out / "mask.pgm"));
    CHECK(fs::exists(opt.out / "run_manifest.json"));

    auto mask = mask_from_rle(nlohmann::json::parse(read_text(opt.out / "mask.json")));
    CHECK(mask.ny == 64);
    CHECK(std::abs(effective_af(mask) - 4.0) / 4.0 < 0.02);
}

TEST_CASE("recon on a synthetic record produces a metrics row when --ref is given") {
    TempDir tmp("cmm_cli_recon");
    write_text(tmp.path / "spec.json",
               R"({"records": [{"kind": "cine", "count": 1, "grid": 32, "coils": 3, "snr": 40}]})");
    cli::SynthOptions synth;
    synth.spec_file = tmp.path / "spec.json";
    synth.out = tmp.path / "data";
    synth.seed = 5;
    cli::cmd_synth(synth);

    cli::ReconOptions opt;
    opt.input = tmp.path / "data" / "record_00000";
    opt.method = "conventional";
    opt.pattern = "uniform";
    opt.af = 2.0;
    opt.seed = 9;
    opt.with_ref_metrics = true;
    opt.out = tmp.path / "recon";
    CHECK(cli::cmd_recon(opt) == 0);
    CHECK(fs::exists(opt.out / "recon.f32"));
    CHECK(fs::exists(opt.out / "recon.pgm"));
    CHECK(fs::exists(opt.out / "error_map.pgm"));
    CHECK(count_lines(opt.out / "metrics.csv") == 2); // header + one row

    // manifest records input digests for later comparison
    auto manifest = nlohmann::json::parse(read_text(opt.out / "run_manifest.json"));
    CHECK(manifest.at("input_digests").contains("record"));
    CHECK(manifest.at("config").contains("recon_digest"));
}

TEST_CASE("recon zero-filled and cardiomm record distinct digests in their manifests") {
    TempDir tmp("cmm_cli_recon2");
    write_text(tmp.path / "spec.json",
               R"({"records": [{"kind": "cine", "count": 1, "grid": 32, "coils": 2, "snr": 40}]})");
    cli::SynthOptions synth;
    synth.spec_file = tmp.path / "spec.json";
    synth.out = tmp.path / "data";
    synth.seed = 15;
    cli::cmd_synth(synth);

    // tiny untrained checkpoint
    ModelConfig mcfg;
    mcfg.phases = 1;
    mcfg.base_channels = 4;
    mcfg.sens_base_channels = 4;
    mcfg.embed_dim = 8;
    mcfg.prompt_components = 2;
    mcfg.prompt_hw = 4;
    mcfg.attention_reduction = 2;
    CardioModel<double> model(mcfg);
    model.save(tmp.path / "ckpt");

    cli::ReconOptions zf;
    zf.input = tmp.path / "data" / "record_00000";
    zf.method = "zero-filled";
    zf.af = 2.0;
    zf.seed = 1;
    zf.out = tmp.path / "zf";
    CHECK(cli::cmd_recon(zf) == 0);

    cli::ReconOptions cm = zf;
    cm.method = "cardiomm";
    cm.checkpoint = tmp.path / "ckpt";
    cm.out = tmp.path / "cm";
    CHECK(cli::cmd_recon(cm) == 0);

    auto mz = nlohmann::json::parse(read_text(zf.out / "run_manifest.json"));
    auto mc = nlohmann::json::parse(read_text(cm.out / "run_manifest.json"));
    CHECK(mz.at("config").at("recon_digest") != mc.at("config").at("recon_digest"));
    CHECK(mc.at("input_digests").contains("checkpoint"));

    // cardiomm without a checkpoint is a validation error
    cli::ReconOptions bad = cm;
    bad.checkpoint.clear();
    CHECK_THROWS_AS(cli::cmd_recon(bad), ValidationError);
}

TEST_CASE("eval over a 3-record set emits exactly 3 per-record rows plus 1 aggregate") {
    TempDir tmp("cmm_cli_eval");
    write_text(tmp.path / "spec.json",
               R"({"records": [{"kind": "cine", "count": 3, "grid": 32, "coils": 2, "snr": 35}]})");
    cli::SynthOptions synth;
    synth.spec_file = tmp.path / "spec.json";
    synth.out = tmp.path / "data";
    synth.seed = 21;
    cli::cmd_synth(synth);

    cli::EvalOptions opt;
    opt.data = tmp.path / "data";
    opt.method = "zero-filled";
    opt.pattern = "uniform";
    opt.af = 4.0;
    opt.seed = 2;
    opt.out = tmp.path / "eval";
    CHECK(cli::cmd_eval(opt) == 0);
    CHECK(count_lines(opt.out / "metrics.csv") == 5); // header + 3 records + aggregate
}

TEST_CASE("train subcommand runs end to end and leaves checkpoints") {
    TempDir tmp("cmm_cli_train");
    write_text(tmp.path / "spec.json",
               R"({"records": [{"kind": "cine", "count": 2, "grid": 32, "coils": 2, "snr": 35}]})");
    cli::SynthOptions synth;
    synth.spec_file = tmp.path / "spec.json";
    synth.out = tmp.path / "data";
    synth.seed = 31;
    cli::cmd_synth(synth);

    write_text(tmp.path / "config.json", R"({
        "model": {"phases": 1, "base_channels": 4, "sens_base_channels": 4, "embed_dim": 8,
                   "prompt_components": 2, "prompt_hw": 4, "attention_reduction": 2},
        "train": {"epochs": 1, "acs_lines": 8, "acs_block": 8, "val_af": 4.0,
                   "grid": [["uniform", 4.0]]}
    })");

    cli::TrainOptions opt;
    opt.data = tmp.path / "data";
    opt.val_data = tmp.path / "data";
    opt.config_file = tmp.path / "config.json";
    opt.out = tmp.path / "run";
    opt.seed = 4;
    opt.precision = "f64";
    CHECK(cli::cmd_train(opt) == 0);
    CHECK(fs::exists(opt.out / "last" / "params.bin"));
    CHECK(fs::exists(opt.out / "best" / "params.bin"));
    CHECK(fs::exists(opt.out / "metrics.csv"));
    CHECK(count_lines(opt.out / "metrics.csv") == 2);
}

TEST_CASE("analyze: phenotypes, fwhm and lvmwt tasks emit their tables") {
    TempDir tmp("cmm_cli_analyze");
    write_text(tmp.path / "spec.json", R"({"records": [
        {"kind": "cine", "count": 1, "grid": 48, "coils": 2, "snr": 200, "frames": 4, "with_masks": true},
        {"kind": "lge", "count": 1, "grid": 48, "coils": 2, "snr": 200, "with_masks": true}
    ]})");
    cli::SynthOptions synth;
    synth.spec_file = tmp.path / "spec.json";
    synth.out = tmp.path / "data";
    synth.seed = 41;
    cli::cmd_synth(synth);

    cli::AnalyzeOptions ph;
    ph.data = tmp.path / "data";
    ph.task = "phenotypes";
    ph.out = tmp.path / "ph";
    ph.seed = 1;
    CHECK(cli::cmd_analyze(ph) == 0);
    CHECK(count_lines(ph.out / "phenotypes.csv") >= 2);

    cli::AnalyzeOptions fw = ph;
    fw.task = "fwhm";
    fw.out = tmp.path / "fw";
    CHECK(cli::cmd_analyze(fw) == 0);
    CHECK(count_lines(fw.out / "lge_mass.csv") >= 2);

    cli::AnalyzeOptions wt = ph;
    wt.task = "lvmwt";
    wt.out = tmp.path / "wt";
    CHECK(cli::cmd_analyze(wt) == 0);
    CHECK(count_lines(wt.out / "lvmwt.csv") >= 2);
    bool bullseye_found = false;
    for (const auto& entry : fs::directory_iterator(wt.out))
        if (entry.path().extension() == ".pgm") bullseye_found = true;
    CHECK(bullseye_found);
}

TEST_CASE("analyze fit-t2 closed loop through the CLI surface") {
    TempDir tmp("cmm_cli_fit");
    write_text(tmp.path / "spec.json", R"({"records": [
        {"kind": "t2map", "count": 1, "grid": 32, "coils": 2, "snr": 10000,
          "timings_ms": [10, 25, 45, 70, 100], "with_masks": true}
    ]})");
    cli::SynthOptions synth;
    synth.spec_file = tmp.path / "spec.json";
    synth.out = tmp.path / "data";
    synth.seed = 51;
    cli::cmd_synth(synth);

    cli::AnalyzeOptions opt;
    opt.data = tmp.path / "data";
    opt.task = "fit-t2";
    opt.out = tmp.path / "fit";
    opt.seed = 1;
    CHECK(cli::cmd_analyze(opt) == 0);
    CHECK(count_lines(opt.out / "t2_summary.csv") == 2);

    // the myocardial median should sit near the phantom's T2 range (40-52 ms)
    std::ifstream in(opt.out / "t2_summary.csv");
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    const auto last_comma = row.rfind(',');
    const auto prev_comma = row.rfind(',', last_comma - 1);
    const double median = std::stod(row.substr(prev_comma + 1, last_comma - prev_comma - 1));
    CHECK(median > 35.0);
    CHECK(median < 60.0);
}

TEST_CASE("embed-dump: one row per unique text, byte-identical reruns") {
    TempDir tmp("cmm_cli_embed");
    write_text(tmp.path / "spec.json", R"({"records": [
        {"kind": "cine", "count": 2, "grid": 32, "coils": 2, "snr": 40},
        {"kind": "lge", "count": 1, "grid": 32, "coils": 2, "snr": 40}
    ]})");
    cli::SynthOptions synth;
    synth.spec_file = tmp.path / "spec.json";
    synth.out = tmp.path / "data";
    synth.seed = 61;
    cli::cmd_synth(synth);

    cli::EmbedDumpOptions opt;
    opt.data = tmp.path / "data";
    opt.out = tmp.path / "embed_a";
    opt.seed = 3;
    CHECK(cli::cmd_embed_dump(opt) == 0);
    // 2 unique metadata texts (cine, lge) + 12 undersampling grid texts + header
    CHECK(count_lines(opt.out / "embeddings.csv") == 15);

    opt.out = tmp.path / "embed_b";
    CHECK(cli::cmd_embed_dump(opt) == 0);
    CHECK(read_text(tmp.path / "embed_a" / "embeddings.csv") ==
          read_text(tmp.path / "embed_b" / "embeddings.csv"));

    // every dumped vector has unit norm
    std::ifstream in(tmp.path / "embed_a" / "embeddings.csv");
    std::string line;
    std::getline(in, line); // header
    while (std::getline(in, line)) {
        double nn = 0;
        size_t pos = 0;
        int field = 0;
        while (pos != std::string::npos) {
            auto next = line.find(',', pos);
            const std::string tok = line.substr(pos, next == std::string::npos ? next : next - pos);
            if (field >= 2) nn += std::stod(tok) * std::stod(tok);
            pos = next == std::string::npos ? next : next + 1;
            ++field;
        }
        CHECK(std::sqrt(nn) == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("inspect prints manifests and errors on junk directories") {
    TempDir tmp("cmm_cli_inspect");
    CHECK_THROWS_AS(cli::cmd_inspect(tmp.path / "nope"), IoError);
}

#pragma once

#include <cstring>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "cardiomm/data/container.hpp"
#include "cardiomm/eval/cardiac.hpp"
#include "cardiomm/eval/metrics.hpp"
#include "cardiomm/eval/relaxometry.hpp"
#include "cardiomm/io/csv.hpp"
#include "cardiomm/io/manifest.hpp"
#include "cardiomm/io/pgm.hpp"
#include "cardiomm/phantom/phantom.hpp"
#include "cardiomm/recon/classic.hpp"
#include "cardiomm/train/trainer.hpp"

namespace cardiomm::cli {

namespace fs = std::filesystem;

inline uint64_t resolve_seed(std::optional<uint64_t> seed, RunManifest& manifest) {
    if (seed) {
        manifest.seed = *seed;
        return *seed;
    }
    std::random_device rd;
    manifest.seed = (uint64_t(rd()) << 32) ^ rd();
    manifest.seed_was_generated = true;
    return manifest.seed;
}

// ---- synth ----

struct SynthGroup {
    std::string kind = "cine"; // cine | lge | t1map | t2map
    int count = 1;
    int grid = 64;
    int coils = 4;
    double snr = 30.0;
    int frames = 1; // cine frames per scan
    std::vector<double> timings_ms; // mapping series
    bool with_masks = false;
};

struct SynthSpec {
    std::vector<SynthGroup> groups;

    static SynthSpec parse(const nlohmann::json& j) {
        SynthSpec s;
        if (!j.contains("records") || !j.at("records").is_array() || j.at("records").empty())
            throw ValidationError("synth spec: missing or empty 'records' array");
        for (const auto& g : j.at("records")) {
            SynthGroup sg;
            sg.kind = g.value("kind", sg.kind);
            if (sg.kind != "cine" && sg.kind != "lge" && sg.kind != "t1map" && sg.kind != "t2map")
                throw ValidationError("synth spec: unknown kind '" + sg.kind + "'");
            sg.count = g.value("count", sg.count);
            if (sg.count < 1) throw ValidationError("synth spec: field 'count' must be >= 1");
            sg.grid = g.value("grid", sg.grid);
            if (sg.grid < 16) throw ValidationError("synth spec: field 'grid' must be >= 16");
            sg.coils = g.value("coils", sg.coils);
            if (sg.coils < 1) throw ValidationError("synth spec: field 'coils' must be >= 1");
            sg.snr = g.value("snr", sg.snr);
            if (sg.snr <= 0) throw ValidationError("synth spec: field 'snr' must be positive");
            sg.frames = g.value("frames", sg.frames);
            if (sg.frames < 1) throw ValidationError("synth spec: field 'frames' must be >= 1");
            if (g.contains("timings_ms")) sg.timings_ms = g.at("timings_ms").get<std::vector<double>>();
            if ((sg.kind == "t1map" || sg.kind == "t2map") && sg.timings_ms.size() < 2)
                throw ValidationError("synth spec: field 'timings_ms' needs >= 2 values for mapping");
            sg.with_masks = g.value("with_masks", sg.with_masks);
            s.groups.push_back(std::move(sg));
        }
        return s;
    }
};

inline PhantomSpec vary_phantom(int grid, uint64_t seed) {
    PhantomSpec spec;
    spec.grid = grid;
    spec.seed = seed;
    Rng vary(derive_seed(seed, 0x76617279ULL));
    spec.lv_cavity_radius = 0.11 + 0.045 * vary.uniform();
    spec.myo_thickness = 0.05 + 0.03 * vary.uniform();
    spec.rv_radius = 0.07 + 0.025 * vary.uniform();
    spec.center_x = 0.01 + 0.03 * vary.uniform();
    spec.center_y = -0.02 + 0.04 * vary.uniform();
    spec.motion_amplitude = 0.18 + 0.12 * vary.uniform();
    spec.t1_myo = 950 + 150 * vary.uniform();
    spec.t2_myo = 40 + 12 * vary.uniform();
    spec.pd_myo = 0.65 + 0.15 * vary.uniform();
    return spec;
}

struct SynthOptions {
    fs::path spec_file;
    fs::path out;
    std::optional<uint64_t> seed;
};

inline int cmd_synth(const SynthOptions& opt) {
    WallClock clock;
    RunManifest manifest;
    manifest.subcommand = "synth";
    const uint64_t seed = resolve_seed(opt.seed, manifest);

    nlohmann::json spec_json = nlohmann::json::parse(detail::read_text_file(opt.spec_file));
    auto spec = SynthSpec::parse(spec_json);
    manifest.config["spec"] = spec_json;
    manifest.add_input("spec_file", opt.spec_file);

    fs::create_directories(opt.out);
    std::vector<std::string> names;
    int index = 0;
    for (size_t gi = 0; gi < spec.groups.size(); ++gi) {
        const auto& g = spec.groups[gi];
        for (int i = 0; i < g.count; ++i) {
            const uint64_t rec_seed = derive_seed(seed, gi, uint64_t(i));
            auto pspec = vary_phantom(g.grid, rec_seed);
            if (g.kind == "lge") pspec.lesion_radius = 0.035;
            pspec.frames = g.kind == "cine" ? g.frames : 1;
            pspec.cycle_frames = pspec.frames;
            auto ph = make_phantom(pspec);

            char scan_id[64];
            std::snprintf(scan_id, sizeof(scan_id), "scan_%03zu_%04d", gi, i);

            auto emit = [&](ScanRecord rec, int frame, int num_frames, double timing) {
                rec.scan_id = scan_id;
                rec.modality = g.kind;
                rec.frame_index = frame;
                rec.num_frames = num_frames;
                rec.timing_ms = timing;
                rec.heart_rate_bpm = 60.0;
                char name[64];
                std::snprintf(name, sizeof(name), "record_%05d", index++);
                container_write(rec, opt.out / name);
                names.push_back(name);
            };

            if (g.kind == "t1map" || g.kind == "t2map") {
                auto series = simulate_weighted_series(ph.frames[0], g.kind, g.timings_ms);
                for (size_t t = 0; t < series.size(); ++t) {
                    auto rec = synthesize_kspace(series[t], g.grid, g.grid, g.coils, g.snr,
                                                 derive_seed(rec_seed, 0x7431ULL, t));
                    if (g.with_masks) {
                        rec.lv_mask = ph.frames[0].lv;
                        rec.rv_mask = ph.frames[0].rv;
                        rec.myo_mask = ph.frames[0].myo;
                    }
                    emit(std::move(rec), int(t), int(series.size()), g.timings_ms[t]);
                }
            } else {
                for (int f = 0; f < pspec.frames; ++f) {
                    auto rec = synthesize_kspace(modality_image(ph.frames[size_t(f)], g.kind), g.grid,
                                                 g.grid, g.coils, g.snr,
                                                 derive_seed(rec_seed, 0x6672ULL, uint64_t(f)));
                    if (g.with_masks) {
                        rec.lv_mask = ph.frames[size_t(f)].lv;
                        rec.rv_mask = ph.frames[size_t(f)].rv;
                        rec.myo_mask = ph.frames[size_t(f)].myo;
                    }
                    emit(std::move(rec), f, pspec.frames, -1.0);
                }
            }
        }
    }
    dataset_write_index(opt.out, names);
    manifest.config["records_written"] = names.size();
    manifest.write(opt.out, clock.seconds());
    return 0;
}

// ---- mask ----

struct MaskOptions {
    std::string pattern = "uniform";
    int ny = 256, nx = 256;
    double af = 8.0;
    int acs_lines = 20;
    int acs_block = 20;
    std::optional<uint64_t> seed;
    fs::path out;
};

inline int cmd_mask(const MaskOptions& opt) {
    WallClock clock;
    RunManifest manifest;
    manifest.subcommand = "mask";
    const uint64_t seed = resolve_seed(opt.seed, manifest);

    UndersamplingMask mask;
    const auto pattern = pattern_from_name(opt.pattern);
    switch (pattern) {
        case MaskPattern::Uniform: mask = gen_uniform(opt.ny, opt.nx, opt.af, opt.acs_lines); break;
        case MaskPattern::Random: mask = gen_random(opt.ny, opt.nx, opt.af, opt.acs_lines, seed); break;
        case MaskPattern::Radial: mask = gen_radial(opt.ny, opt.nx, opt.af, opt.acs_block, opt.acs_block); break;
    }
    fs::create_directories(opt.out);
    const auto rle = mask_to_rle(mask);
    const std::string text = rle.dump(2) + "\n";
    detail::write_file(opt.out / "mask.json", text.data(), text.size());
    std::vector<double> img(mask.grid.begin(), mask.grid.end());
    write_pgm(opt.out / "mask.pgm", img, mask.ny, mask.nx, 0.0, 1.0);

    manifest.config = {{"pattern", opt.pattern}, {"ny", opt.ny},        {"nx", opt.nx},
                       {"af", opt.af},           {"acs_lines", opt.acs_lines},
                       {"acs_block", opt.acs_block}, {"effective_af", effective_af(mask)}};
    manifest.write(opt.out, clock.seconds());
    std::printf("mask %s af %.3g effective %.4f -> %s\n", opt.pattern.c_str(), opt.af,
                effective_af(mask), opt.out.string().c_str());
    return 0;
}

// ---- recon ----

struct ReconOptions {
    fs::path input; // record directory
    std::string method = "zero-filled"; // zero-filled | conventional | cardiomm
    fs::path checkpoint;
    fs::path mask_file; // optional mask.json
    std::string pattern = "uniform";
    double af = 8.0;
    std::optional<uint64_t> seed;
    bool with_ref_metrics = false;
    CgConfig cg;
    fs::path out;
    int threads = 1;
    std::string precision = "f64";
};

namespace detail_cli {

inline UndersamplingMask recon_mask(const ReconOptions& opt, const ScanRecord& rec, uint64_t seed) {
    if (!opt.mask_file.empty())
        return mask_from_rle(nlohmann::json::parse(detail::read_text_file(opt.mask_file)));
    if (rec.has_mask) return rec.mask;
    const auto pattern = pattern_from_name(opt.pattern);
    switch (pattern) {
        case MaskPattern::Uniform: return gen_uniform(rec.ny(), rec.nx(), opt.af, 20);
        case MaskPattern::Random: return gen_random(rec.ny(), rec.nx(), opt.af, 20, seed);
        case MaskPattern::Radial: return gen_radial(rec.ny(), rec.nx(), opt.af, 20, 20);
    }
    throw ValidationError("recon: bad pattern");
}

template <typename T>
std::vector<double> run_cardiomm(const fs::path& checkpoint, const KSpaceVolume<double>& masked,
                                 const UndersamplingMask& mask, const ScanRecord& rec, double af) {
    auto model = CardioModel<T>::load(checkpoint);
    TextBundle texts;
    texts.metadata_text = compose_metadata_text(rec);
    texts.undersampling_text = compose_undersampling_text(mask.pattern, af);
    TextEncoder enc;
    ad::NoGradGuard ng;
    auto out = model.reconstruct(masked, mask, texts, enc);
    return CardioModel<T>::magnitude_image(out);
}

} // namespace detail_cli

inline int cmd_recon(const ReconOptions& opt) {
    WallClock clock;
    RunManifest manifest;
    manifest.subcommand = "recon";
    const uint64_t seed = resolve_seed(opt.seed, manifest);
    math_threads() = std::max(1, opt.threads);

    auto rec = container_read(opt.input);
    manifest.add_input("record", opt.input / "manifest.json");
    auto mask = detail_cli::recon_mask(opt, rec, seed);
    auto masked = apply_mask(rec.kspace, mask);

    std::vector<double> magnitude;
    if (opt.method == "zero-filled") {
        magnitude = sos(zero_filled(masked, mask));
    } else if (opt.method == "conventional") {
        auto sens = estimate_sens_acs(masked, mask);
        auto res = sense_cg(masked, mask, sens, opt.cg);
        magnitude.resize(res.image.v.size());
        for (size_t i = 0; i < magnitude.size(); ++i) magnitude[i] = std::abs(res.image.v[i]);
    } else if (opt.method == "cardiomm") {
        if (opt.checkpoint.empty()) throw ValidationError("recon: --method cardiomm needs --checkpoint");
        manifest.add_input("checkpoint", opt.checkpoint / "params.json");
        const std::string dtype = ad::ParamStore<double>::checkpoint_dtype(opt.checkpoint);
        magnitude = dtype == "f64"
                        ? detail_cli::run_cardiomm<double>(opt.checkpoint, masked, mask, rec, opt.af)
                        : detail_cli::run_cardiomm<float>(opt.checkpoint, masked, mask, rec, opt.af);
    } else {
        throw ValidationError("recon: unknown method '" + opt.method + "'");
    }

    fs::create_directories(opt.out);
    std::vector<float> raw(magnitude.size());
    for (size_t i = 0; i < raw.size(); ++i) raw[i] = float(magnitude[i]);
    detail::write_file(opt.out / "recon.f32", raw.data(), raw.size() * sizeof(float));
    write_pgm(opt.out / "recon.pgm", magnitude, rec.ny(), rec.nx());

    manifest.config = {{"method", opt.method},
                       {"pattern", pattern_name(mask.pattern)},
                       {"nominal_af", mask.nominal_af},
                       {"effective_af", effective_af(mask)},
                       {"precision", opt.precision},
                       {"threads", opt.threads}};
    manifest.config["recon_digest"] = digest_hex(fnv1a64(raw.data(), raw.size() * sizeof(float)));

    if (opt.with_ref_metrics) {
        double mref = 0;
        for (double v : rec.reference) mref = std::max(mref, v);
        std::vector<double> refn(rec.reference.size()), magn(magnitude.size());
        for (size_t i = 0; i < refn.size(); ++i) {
            refn[i] = rec.reference[i] / mref;
            magn[i] = magnitude[i] / mref;
        }
        CsvWriter csv(opt.out / "metrics.csv");
        csv.row({"record", "method", "psnr_db", "ssim"});
        csv.row({rec.scan_id, opt.method, csv_num(psnr(refn, magn)),
                 csv_num(ssim(refn, magn, rec.ny(), rec.nx(), 1.0))});
        std::vector<double> err(magnitude.size());
        for (size_t i = 0; i < err.size(); ++i) err[i] = std::abs(refn[i] - magn[i]);
        write_pgm(opt.out / "error_map.pgm", err, rec.ny(), rec.nx(), 0.0, 0.1);
    }
    manifest.write(opt.out, clock.seconds());
    return 0;
}

// ---- train ----

struct TrainOptions {
    fs::path data;
    fs::path val_data;
    fs::path out;
    fs::path config_file; // JSON {"model": {...}, "train": {...}} overrides
    std::optional<uint64_t> seed;
    std::string precision = "f32";
    int threads = 1;
};

inline std::vector<ScanRecord> load_dataset(const fs::path& dir) {
    std::vector<ScanRecord> out;
    for (const auto& name : dataset_read_index(dir)) out.push_back(container_read(dir / name));
    return out;
}

template <typename T>
int run_train(const TrainOptions& opt, ModelConfig mcfg, TrainConfig tcfg, RunManifest& manifest,
              WallClock& clock) {
    auto train_records = load_dataset(opt.data);
    std::vector<ScanRecord> val_records;
    if (!opt.val_data.empty()) val_records = load_dataset(opt.val_data);

    CardioModel<T> model(mcfg);
    auto result = train(model, train_records, val_records, tcfg, opt.out);

    manifest.config["train_records"] = train_records.size();
    manifest.config["val_records"] = val_records.size();
    manifest.config["best_epoch"] = result.best_epoch;
    manifest.config["best_val_ssim"] = result.best_val_ssim;
    manifest.config["final_loss"] = result.step_losses.empty() ? 0.0 : result.step_losses.back();
    manifest.write(opt.out, clock.seconds());
    return 0;
}

inline int cmd_train(const TrainOptions& opt) {
    WallClock clock;
    RunManifest manifest;
    manifest.subcommand = "train";
    const uint64_t seed = resolve_seed(opt.seed, manifest);
    math_threads() = std::max(1, opt.threads);

    ModelConfig mcfg;
    mcfg.phases = 5; // desk-scale default depth
    TrainConfig tcfg;
    tcfg.epochs = 2;
    nlohmann::json cfg_json = nlohmann::json::object();
    if (!opt.config_file.empty()) {
        cfg_json = nlohmann::json::parse(detail::read_text_file(opt.config_file));
        manifest.add_input("config_file", opt.config_file);
        if (cfg_json.contains("model")) {
            auto base = mcfg.to_json();
            base.update(cfg_json.at("model"));
            mcfg = ModelConfig::from_json(base);
        }
        if (cfg_json.contains("train")) {
            auto merged = tcfg.to_json();
            merged.update(cfg_json.at("train"));
            tcfg = TrainConfig::from_json(merged);
        }
    }
    tcfg.seed = seed;
    mcfg.init_seed = derive_seed(seed, 0x696e6974ULL);

    manifest.add_input("dataset_index", opt.data / "dataset.json");
    manifest.config["model"] = mcfg.to_json();
    manifest.config["train"] = tcfg.to_json();
    manifest.config["precision"] = opt.precision;

    if (opt.precision == "f64") return run_train<double>(opt, mcfg, tcfg, manifest, clock);
    if (opt.precision == "f32") return run_train<float>(opt, mcfg, tcfg, manifest, clock);
    throw ValidationError("train: precision must be f32 or f64");
}

// ---- eval ----

struct EvalOptions {
    fs::path data;
    std::string method = "zero-filled";
    fs::path checkpoint;
    std::string pattern = "uniform";
    double af = 8.0;
    std::optional<uint64_t> seed;
    fs::path out;
    int threads = 1;
};

inline int cmd_eval(const EvalOptions& opt) {
    WallClock clock;
    RunManifest manifest;
    manifest.subcommand = "eval";
    const uint64_t seed = resolve_seed(opt.seed, manifest);
    math_threads() = std::max(1, opt.threads);
    manifest.add_input("dataset_index", opt.data / "dataset.json");

    auto names = dataset_read_index(opt.data);
    fs::create_directories(opt.out);
    CsvWriter csv(opt.out / "metrics.csv");
    csv.row({"record", "method", "pattern", "af", "psnr_db", "ssim"});

    std::vector<double> psnrs, ssims;
    const auto pattern = pattern_from_name(opt.pattern);
    for (size_t i = 0; i < names.size(); ++i) {
        auto rec = container_read(opt.data / names[i]);
        UndersamplingMask mask;
        switch (pattern) {
            case MaskPattern::Uniform: mask = gen_uniform(rec.ny(), rec.nx(), opt.af, 16); break;
            case MaskPattern::Random:
                mask = gen_random(rec.ny(), rec.nx(), opt.af, 16, derive_seed(seed, i));
                break;
            case MaskPattern::Radial: mask = gen_radial(rec.ny(), rec.nx(), opt.af, 16, 16); break;
        }
        auto masked = apply_mask(rec.kspace, mask);

        std::vector<double> magnitude;
        if (opt.method == "zero-filled") {
            magnitude = sos(zero_filled(masked, mask));
        } else if (opt.method == "conventional") {
            auto sens = estimate_sens_acs(masked, mask);
            auto res = sense_cg(masked, mask, sens);
            magnitude.resize(res.image.v.size());
            for (size_t k = 0; k < magnitude.size(); ++k) magnitude[k] = std::abs(res.image.v[k]);
        } else if (opt.method == "cardiomm") {
            if (opt.checkpoint.empty()) throw ValidationError("eval: --method cardiomm needs --checkpoint");
            const std::string dtype = ad::ParamStore<double>::checkpoint_dtype(opt.checkpoint);
            magnitude = dtype == "f64"
                            ? detail_cli::run_cardiomm<double>(opt.checkpoint, masked, mask, rec, opt.af)
                            : detail_cli::run_cardiomm<float>(opt.checkpoint, masked, mask, rec, opt.af);
        } else {
            throw ValidationError("eval: unknown method '" + opt.method + "'");
        }

        double mref = 0;
        for (double v : rec.reference) mref = std::max(mref, v);
        std::vector<double> refn(rec.reference.size()), magn(magnitude.size());
        for (size_t k = 0; k < refn.size(); ++k) {
            refn[k] = rec.reference[k] / mref;
            magn[k] = magnitude[k] / mref;
        }
        const double p = psnr(refn, magn);
        const double s = ssim(refn, magn, rec.ny(), rec.nx(), 1.0);
        psnrs.push_back(p);
        ssims.push_back(s);
        csv.row({rec.scan_id, opt.method, opt.pattern, csv_num(opt.af), csv_num(p), csv_num(s)});
    }
    auto ap = aggregate_metric(psnrs);
    auto as = aggregate_metric(ssims);
    csv.row({"aggregate", opt.method, opt.pattern, csv_num(opt.af),
             csv_num(ap.mean) + " (" + csv_num(ap.ci_lo) + ".." + csv_num(ap.ci_hi) + ")",
             csv_num(as.mean) + " (" + csv_num(as.ci_lo) + ".." + csv_num(as.ci_hi) + ")"});

    manifest.config = {{"method", opt.method}, {"pattern", opt.pattern}, {"af", opt.af},
                       {"records", names.size()}, {"mean_psnr", ap.mean}, {"mean_ssim", as.mean}};
    if (!opt.checkpoint.empty()) manifest.add_input("checkpoint", opt.checkpoint / "params.json");
    manifest.write(opt.out, clock.seconds());
    return 0;
}

// ---- analyze ----

struct AnalyzeOptions {
    fs::path data;
    std::string task = "phenotypes"; // phenotypes | fit-t1 | fit-t2 | fwhm | lvmwt
    double insertion_angle = 0.0;
    fs::path out;
    std::optional<uint64_t> seed;
};

inline int cmd_analyze(const AnalyzeOptions& opt) {
    WallClock clock;
    RunManifest manifest;
    manifest.subcommand = "analyze";
    resolve_seed(opt.seed, manifest);
    manifest.add_input("dataset_index", opt.data / "dataset.json");
    manifest.config = {{"task", opt.task}};

    auto names = dataset_read_index(opt.data);
    std::map<std::string, std::vector<ScanRecord>> scans;
    for (const auto& name : names) {
        auto rec = container_read(opt.data / name);
        scans[rec.scan_id].push_back(std::move(rec));
    }
    fs::create_directories(opt.out);

    if (opt.task == "phenotypes") {
        CsvWriter csv(opt.out / "phenotypes.csv");
        csv.row({"scan_id", "lvedv_ml", "lvesv_ml", "lvsv_ml", "lvef_pct", "lvco_lpm", "lvm_g",
                 "rvedv_ml", "rvesv_ml", "rvsv_ml", "rvef_pct", "ed_frame", "es_frame"});
        for (auto& [scan_id, recs] : scans) {
            std::sort(recs.begin(), recs.end(),
                      [](const ScanRecord& a, const ScanRecord& b) { return a.frame_index < b.frame_index; });
            std::vector<SegFrame> frames;
            for (const auto& r : recs) {
                if (r.lv_mask.empty()) continue;
                SegFrame f;
                f.ny = r.ny();
                f.nx = r.nx();
                f.lv = r.lv_mask;
                f.rv = r.rv_mask;
                f.myo = r.myo_mask;
                frames.push_back(std::move(f));
            }
            if (frames.empty()) continue;
            const auto& g = recs[0].kspace.geometry;
            auto rep = phenotypes(frames, g.pixel_spacing_mm[0], g.pixel_spacing_mm[1],
                                  g.slice_thickness_mm, recs[0].heart_rate_bpm);
            csv.row({scan_id, csv_num(rep.lvedv), csv_num(rep.lvesv), csv_num(rep.lvsv),
                     csv_num(rep.lvef), csv_num(rep.lvco), csv_num(rep.lvm), csv_num(rep.rvedv),
                     csv_num(rep.rvesv), csv_num(rep.rvsv), csv_num(rep.rvef),
                     std::to_string(rep.ed_frame), std::to_string(rep.es_frame)});
        }
    } else if (opt.task == "fit-t1" || opt.task == "fit-t2") {
        const bool t1 = opt.task == "fit-t1";
        CsvWriter csv(opt.out / (t1 ? std::string("t1_summary.csv") : std::string("t2_summary.csv")));
        csv.row({"scan_id", "points", t1 ? "median_myo_t1_ms" : "median_myo_t2_ms", "valid_fraction"});
        for (auto& [scan_id, recs] : scans) {
            std::sort(recs.begin(), recs.end(),
                      [](const ScanRecord& a, const ScanRecord& b) { return a.timing_ms < b.timing_ms; });
            if (recs.size() < (t1 ? 3u : 2u)) continue;
            std::vector<std::vector<double>> series;
            std::vector<double> timings;
            for (const auto& r : recs) {
                series.push_back(r.reference);
                timings.push_back(r.timing_ms);
            }
            const int ny = recs[0].ny(), nx = recs[0].nx();
            auto maps = t1 ? fit_t1(series, timings, ny, nx) : fit_t2(series, timings, ny, nx);

            std::vector<double> in_myo;
            int64_t valid = 0, total = 0;
            for (size_t i = 0; i < maps.value.size(); ++i) {
                const bool inside = recs[0].myo_mask.empty() || recs[0].myo_mask[i];
                if (!inside) continue;
                ++total;
                if (maps.valid[i]) {
                    ++valid;
                    in_myo.push_back(maps.value[i]);
                }
            }
            std::sort(in_myo.begin(), in_myo.end());
            const double median = in_myo.empty() ? 0.0 : in_myo[in_myo.size() / 2];
            csv.row({scan_id, std::to_string(series.size()), csv_num(median),
                     csv_num(total ? double(valid) / double(total) : 0.0)});
            std::vector<double> display(maps.value.size(), 0.0);
            for (size_t i = 0; i < display.size(); ++i)
                display[i] = maps.valid[i] ? maps.value[i] : 0.0;
            write_pgm(opt.out / (scan_id + (t1 ? "_t1.pgm" : "_t2.pgm")), display, ny, nx);
        }
    } else if (opt.task == "fwhm") {
        CsvWriter csv(opt.out / "lge_mass.csv");
        csv.row({"scan_id", "frame", "lge_mass_pct"});
        for (auto& [scan_id, recs] : scans)
            for (const auto& r : recs) {
                if (r.myo_mask.empty()) continue;
                csv.row({scan_id, std::to_string(r.frame_index),
                         csv_num(fwhm_lge_mass(r.reference, r.myo_mask))});
            }
    } else if (opt.task == "lvmwt") {
        CsvWriter csv(opt.out / "lvmwt.csv");
        std::vector<std::string> header = {"scan_id"};
        for (int i = 1; i <= 16; ++i) header.push_back("seg" + std::to_string(i) + "_mm");
        header.push_back("global_mm");
        csv.row(header);
        for (auto& [scan_id, recs] : scans) {
            const ScanRecord* ed = nullptr;
            for (const auto& r : recs)
                if (!r.myo_mask.empty() && (ed == nullptr || r.frame_index < ed->frame_index)) ed = &r;
            if (!ed) continue;
            SegFrame f;
            f.ny = ed->ny();
            f.nx = ed->nx();
            f.nslices = 1;
            f.lv = ed->lv_mask;
            f.rv = ed->rv_mask;
            f.myo = ed->myo_mask;
            auto seg = lvmwt_aha(f, ed->kspace.geometry.pixel_spacing_mm[0], opt.insertion_angle);
            std::vector<std::string> row = {scan_id};
            for (double v : seg) row.push_back(csv_num(v));
            csv.row(row);

            // bullseye chart rasterized as a polar plot
            const int n = 200;
            std::vector<double> bullseye(size_t(n) * n, 0.0);
            for (int y = 0; y < n; ++y)
                for (int x = 0; x < n; ++x) {
                    const double dy = (y + 0.5 - n / 2.0) / (n / 2.0);
                    const double dx = (x + 0.5 - n / 2.0) / (n / 2.0);
                    const double r = std::hypot(dy, dx);
                    if (r > 1.0) continue;
                    double ang = std::atan2(dy, dx) - opt.insertion_angle;
                    ang = std::fmod(std::fmod(ang, 2 * fft::kPi) + 2 * fft::kPi, 2 * fft::kPi);
                    int idx;
                    if (r > 2.0 / 3.0) idx = int(ang / (2 * fft::kPi / 6));
                    else if (r > 1.0 / 3.0) idx = 6 + int(ang / (2 * fft::kPi / 6));
                    else idx = 12 + int(ang / (2 * fft::kPi / 4));
                    const double v = seg[size_t(std::min(idx, 15))];
                    bullseye[size_t(y) * n + x] = std::isnan(v) ? 0.0 : v;
                }
            write_pgm(opt.out / (scan_id + "_bullseye.pgm"), bullseye, n, n);
        }
    } else {
        throw ValidationError("analyze: unknown task '" + opt.task + "'");
    }
    manifest.write(opt.out, clock.seconds());
    return 0;
}

// ---- embed dump ----

struct EmbedDumpOptions {
    fs::path data;
    fs::path checkpoint; // optional; default-initialized heads otherwise
    fs::path out;
    std::optional<uint64_t> seed;
};

inline int cmd_embed_dump(const EmbedDumpOptions& opt) {
    WallClock clock;
    RunManifest manifest;
    manifest.subcommand = "embed-dump";
    const uint64_t seed = resolve_seed(opt.seed, manifest);
    manifest.add_input("dataset_index", opt.data / "dataset.json");

    // unique canonical texts: metadata from records, undersampling from the grid
    std::vector<std::string> meta_texts;
    for (const auto& name : dataset_read_index(opt.data)) {
        auto rec = container_read(opt.data / name);
        auto text = compose_metadata_text(rec);
        if (std::find(meta_texts.begin(), meta_texts.end(), text) == meta_texts.end())
            meta_texts.push_back(text);
    }
    std::vector<std::string> under_texts;
    for (auto p : {MaskPattern::Uniform, MaskPattern::Random, MaskPattern::Radial})
        for (double af : {4.0, 8.0, 16.0, 24.0})
            under_texts.push_back(compose_undersampling_text(p, af));

    ModelConfig mcfg;
    mcfg.phases = 0;
    mcfg.init_seed = derive_seed(seed, 0x656d62ULL);
    std::unique_ptr<CardioModel<double>> model;
    if (!opt.checkpoint.empty()) {
        manifest.add_input("checkpoint", opt.checkpoint / "params.json");
        model = std::make_unique<CardioModel<double>>(CardioModel<double>::load(opt.checkpoint));
    } else {
        model = std::make_unique<CardioModel<double>>(mcfg);
    }

    TextEncoder enc;
    fs::create_directories(opt.out);
    CsvWriter csv(opt.out / "embeddings.csv");
    std::vector<std::string> header = {"kind", "text"};
    for (int i = 0; i < model->cfg.embed_dim; ++i) header.push_back("v" + std::to_string(i));
    csv.row(header);
    auto dump = [&](const std::string& kind, const std::vector<std::string>& texts,
                    const ProjectionHead<double>& head) {
        for (const auto& text : texts) {
            auto v = head.project_values(enc.encode(text));
            std::vector<std::string> row = {kind, text};
            for (double x : v) row.push_back(csv_num(x));
            csv.row(row);
        }
    };
    dump("metadata", meta_texts, model->head_m);
    dump("undersampling", under_texts, model->head_u);

    manifest.config = {{"metadata_texts", meta_texts.size()}, {"undersampling_texts", under_texts.size()}};
    manifest.write(opt.out, clock.seconds());
    return 0;
}

// ---- inspect ----

inline int cmd_inspect(const fs::path& dir) {
    if (fs::exists(dir / "manifest.json"))
        std::printf("%s\n", detail::read_text_file(dir / "manifest.json").c_str());
    else if (fs::exists(dir / "dataset.json")) {
        auto names = dataset_read_index(dir);
        std::printf("dataset with %zu records\n", names.size());
        for (const auto& n : names) std::printf("  %s\n", n.c_str());
    } else if (fs::exists(dir / "run_manifest.json"))
        std::printf("%s\n", detail::read_text_file(dir / "run_manifest.json").c_str());
    else
        throw IoError("inspect: no manifest found in " + dir.string());
    return 0;
}

} // namespace cardiomm::cli

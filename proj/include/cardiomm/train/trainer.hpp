#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cardiomm/data/record.hpp"
#include "cardiomm/eval/metrics.hpp"
#include "cardiomm/io/csv.hpp"
#include "cardiomm/model/net.hpp"
#include "cardiomm/train/optim.hpp"
#include "cardiomm/train/ssim.hpp"

namespace cardiomm {

struct UndersamplingGrid {
    std::vector<std::pair<MaskPattern, double>> cells;

    static UndersamplingGrid standard() {
        UndersamplingGrid g;
        for (auto p : {MaskPattern::Uniform, MaskPattern::Random, MaskPattern::Radial})
            for (double af : {4.0, 8.0})
                g.cells.push_back({p, af});
        return g;
    }

    nlohmann::json to_json() const {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& [p, af] : cells) arr.push_back({pattern_name(p), af});
        return arr;
    }

    static UndersamplingGrid from_json(const nlohmann::json& j) {
        UndersamplingGrid g;
        for (const auto& cell : j)
            g.cells.push_back({pattern_from_name(cell.at(0).get<std::string>()), cell.at(1).get<double>()});
        return g;
    }
};

struct TrainConfig {
    int epochs = 15;
    int start_epoch = 0; // resume point
    double lr0 = 2e-4;
    double lr_decay = 0.3;
    int lr_decay_every = 5;
    double weight_decay = 0.01;
    int batch_size = 1; // spatial dims vary per record, so batches stay at 1
    uint64_t seed = 0;
    UndersamplingGrid grid = UndersamplingGrid::standard();
    int acs_lines = 16;
    int acs_block = 16;
    // validation settings: fixed scenario so epoch scores are comparable
    MaskPattern val_pattern = MaskPattern::Uniform;
    double val_af = 8.0;
    double clip_norm = 1.0; // global gradient-norm clip; <= 0 disables

    void validate() const {
        if (epochs < 1) throw ValidationError("TrainConfig: epochs must be >= 1");
        if (lr0 <= 0) throw ValidationError("TrainConfig: lr0 must be positive");
        if (batch_size != 1) throw ValidationError("TrainConfig: only batch size 1 is supported");
        if (grid.cells.empty()) throw ValidationError("TrainConfig: undersampling grid is empty");
    }

    nlohmann::json to_json() const {
        return {{"epochs", epochs},
                {"start_epoch", start_epoch},
                {"lr0", lr0},
                {"lr_decay", lr_decay},
                {"lr_decay_every", lr_decay_every},
                {"weight_decay", weight_decay},
                {"batch_size", batch_size},
                {"seed", seed},
                {"grid", grid.to_json()},
                {"acs_lines", acs_lines},
                {"acs_block", acs_block},
                {"val_pattern", pattern_name(val_pattern)},
                {"val_af", val_af},
                {"clip_norm", clip_norm}};
    }

    static TrainConfig from_json(const nlohmann::json& j) {
        TrainConfig c;
        c.epochs = j.value("epochs", c.epochs);
        c.start_epoch = j.value("start_epoch", c.start_epoch);
        c.lr0 = j.value("lr0", c.lr0);
        c.lr_decay = j.value("lr_decay", c.lr_decay);
        c.lr_decay_every = j.value("lr_decay_every", c.lr_decay_every);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.seed = j.value("seed", c.seed);
        if (j.contains("grid")) c.grid = UndersamplingGrid::from_json(j.at("grid"));
        c.acs_lines = j.value("acs_lines", c.acs_lines);
        c.acs_block = j.value("acs_block", c.acs_block);
        if (j.contains("val_pattern")) c.val_pattern = pattern_from_name(j.at("val_pattern"));
        c.val_af = j.value("val_af", c.val_af);
        c.clip_norm = j.value("clip_norm", c.clip_norm);
        return c;
    }
};

// seeded uniform draw over the configured pattern x AF grid
inline std::pair<MaskPattern, double> sample_undersampling(Rng& rng, const UndersamplingGrid& grid) {
    if (grid.cells.empty()) throw ValidationError("sample_undersampling: empty grid");
    return grid.cells[size_t(rng.below(grid.cells.size()))];
}

inline UndersamplingMask make_training_mask(MaskPattern pattern, double af, int ny, int nx,
                                            int acs_lines, int acs_block, uint64_t seed) {
    switch (pattern) {
        case MaskPattern::Uniform:
            return gen_uniform(ny, nx, af, acs_lines, int(seed % 37));
        case MaskPattern::Random:
            return gen_random(ny, nx, af, acs_lines, seed);
        case MaskPattern::Radial:
            return gen_radial(ny, nx, af, acs_block, acs_block);
    }
    throw ValidationError("make_training_mask: bad pattern");
}

struct EpochLog {
    int epoch = 0;
    double mean_loss = 0;
    double val_psnr = 0, val_ssim = 0;
    double lr = 0;
};

template <typename T>
struct TrainResult {
    std::vector<EpochLog> epochs;
    std::vector<double> step_losses;
    double best_val_ssim = -1e30;
    int best_epoch = -1;
};

// One training step: mask the record, run the unrolled model, SSIM loss on
// max-normalized SoS magnitudes, backward, AdamW update. Returns the loss.
template <typename T>
double train_step(CardioModel<T>& model, const ScanRecord& rec, const TrainConfig& cfg,
                  const TextEncoder& enc, int epoch, int64_t step_index, double lr) {
    Rng rng(derive_seed(cfg.seed, 0x73746570ULL + uint64_t(epoch), uint64_t(step_index)));
    auto [pattern, af] = sample_undersampling(rng, cfg.grid);
    auto mask = make_training_mask(pattern, af, rec.ny(), rec.nx(), cfg.acs_lines, cfg.acs_block,
                                   rng.next_u64());
    auto masked = apply_mask(rec.kspace, mask);

    TextBundle texts;
    texts.metadata_text = compose_metadata_text(rec);
    texts.undersampling_text = compose_undersampling_text(pattern, af);

    auto out = model.reconstruct(masked, mask, texts, enc);

    double mref = 0;
    for (double v : rec.reference) mref = std::max(mref, v);
    if (mref <= 0) throw NumericalError("train_step: empty reference image");
    std::vector<T> refv(rec.reference.size());
    for (size_t i = 0; i < refv.size(); ++i) refv[i] = T(rec.reference[i] / mref);
    auto ref = ad::Tensor<T>::from({1, 1, rec.ny(), rec.nx()}, std::move(refv));
    auto recon = ad::scale(out.sos_mag, T(out.scale / mref));

    auto loss = ssim_loss(recon, ref, 1.0);
    const double loss_value = double(loss.item());
    if (!std::isfinite(loss_value))
        throw NumericalError("train_step: non-finite loss at epoch " + std::to_string(epoch) +
                             " step " + std::to_string(step_index));

    model.store.zero_grad();
    ad::backward(loss);
    if (cfg.clip_norm > 0) clip_grad_norm(model.store, cfg.clip_norm);
    AdamWConfig opt;
    opt.lr = lr;
    opt.weight_decay = cfg.weight_decay;
    adamw_step(model.store, opt);
    model.store.zero_grad();
    return loss_value;
}

// validation at the fixed scenario; returns (mean psnr, mean ssim)
template <typename T>
std::pair<double, double> validate(CardioModel<T>& model, const std::vector<ScanRecord>& records,
                                   const TrainConfig& cfg, const TextEncoder& enc) {
    ad::NoGradGuard ng;
    std::vector<double> psnrs, ssims;
    for (size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        auto mask = make_training_mask(cfg.val_pattern, cfg.val_af, rec.ny(), rec.nx(), cfg.acs_lines,
                                       cfg.acs_block, derive_seed(cfg.seed, 0x76616cULL, i));
        auto masked = apply_mask(rec.kspace, mask);
        TextBundle texts;
        texts.metadata_text = compose_metadata_text(rec);
        texts.undersampling_text = compose_undersampling_text(cfg.val_pattern, cfg.val_af);
        auto out = model.reconstruct(masked, mask, texts, enc);
        auto mag = CardioModel<T>::magnitude_image(out);
        double mref = 0;
        for (double v : rec.reference) mref = std::max(mref, v);
        std::vector<double> refn(rec.reference.size()), magn(mag.size());
        for (size_t k = 0; k < refn.size(); ++k) {
            refn[k] = rec.reference[k] / mref;
            magn[k] = mag[k] / mref;
        }
        psnrs.push_back(psnr(refn, magn));
        ssims.push_back(ssim(refn, magn, rec.ny(), rec.nx(), 1.0));
    }
    return {aggregate_metric(psnrs).mean, aggregate_metric(ssims).mean};
}

// End-to-end training loop: deterministic in (seed, config, dataset), one
// record per step, per-epoch validation, best-SSIM checkpoint retention.
template <typename T>
TrainResult<T> train(CardioModel<T>& model, const std::vector<ScanRecord>& train_records,
                     const std::vector<ScanRecord>& val_records, const TrainConfig& cfg,
                     const std::filesystem::path& out_dir = {},
                     const TextEncoder& enc = TextEncoder{}) {
    cfg.validate();
    if (train_records.empty()) throw ValidationError("train: no training records");
    for (const auto& r : train_records)
        if (r.reference.empty()) throw ValidationError("train: record lacks a fully sampled reference");

    TrainResult<T> result;
    CsvWriter* log = nullptr;
    std::unique_ptr<CsvWriter> log_holder;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        const bool resuming = cfg.start_epoch > 0;
        log_holder = std::make_unique<CsvWriter>(out_dir / "metrics.csv", resuming);
        log = log_holder.get();
        if (!resuming) log->row({"epoch", "mean_loss", "val_psnr", "val_ssim", "lr"});
    }

    for (int epoch = cfg.start_epoch; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_at(epoch, cfg.lr0, cfg.lr_decay, cfg.lr_decay_every);

        // deterministic shuffle per (seed, epoch)
        std::vector<size_t> order(train_records.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng(derive_seed(cfg.seed, 0x73687566ULL, uint64_t(epoch)));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[size_t(shuffle_rng.below(i))]);

        double loss_sum = 0;
        for (size_t si = 0; si < order.size(); ++si) {
            double loss = 0;
            try {
                loss = train_step(model, train_records[order[si]], cfg, enc, epoch,
                                  int64_t(order[si]), lr);
            } catch (const NumericalError&) {
                // abort with a state dump so the failure can be inspected
                if (!out_dir.empty()) model.save(out_dir / "abort_state");
                throw;
            }
            loss_sum += loss;
            result.step_losses.push_back(loss);
        }

        EpochLog el;
        el.epoch = epoch;
        el.mean_loss = loss_sum / double(order.size());
        el.lr = lr;
        if (!val_records.empty()) {
            auto [vp, vs] = validate(model, val_records, cfg, enc);
            el.val_psnr = vp;
            el.val_ssim = vs;
            if (vs > result.best_val_ssim) {
                result.best_val_ssim = vs;
                result.best_epoch = epoch;
                if (!out_dir.empty()) model.save(out_dir / "best");
            }
        }
        result.epochs.push_back(el);
        if (log)
            log->row({std::to_string(epoch), csv_num(el.mean_loss), csv_num(el.val_psnr),
                      csv_num(el.val_ssim), csv_num(el.lr)});
        if (!out_dir.empty()) model.save(out_dir / "last");
    }
    return result;
}

} // namespace cardiomm

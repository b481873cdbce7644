#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "cardiomm/data/container.hpp"
#include "cardiomm/phantom/phantom.hpp"

using namespace cardiomm;

TEST_CASE("zero motion amplitude gives identical frames") {
    PhantomSpec spec;
    spec.frames = 5;
    spec.motion_amplitude = 0.0;
    auto ph = make_phantom(spec);
    for (int f = 1; f < 5; ++f) {
        CHECK(ph.frames[size_t(f)].pd == ph.frames[0].pd);
        CHECK(ph.frames[size_t(f)].lv == ph.frames[0].lv);
    }
}

TEST_CASE("cardiac motion is periodic: frame 0 equals frame N of an N-frame cycle") {
    PhantomSpec spec;
    spec.frames = 9;       // materialize the wrap frame
    spec.cycle_frames = 8; // one full cycle
    spec.motion_amplitude = 0.3;
    auto ph = make_phantom(spec);
    CHECK(ph.frames[8].lv == ph.frames[0].lv);
    CHECK(ph.frames[8].pd == ph.frames[0].pd);
    // and systole differs from diastole
    CHECK(ph.frames[4].lv != ph.frames[0].lv);
}

TEST_CASE("rasterized myocardium pixel count matches the analytic annulus area within 2%") {
    PhantomSpec spec;
    spec.grid = 256;
    spec.frames = 1;
    auto ph = make_phantom(spec);
    const auto& fr = ph.frames[0];
    int64_t count = 0;
    for (auto v : fr.myo) count += v;
    const double analytic =
        fft::kPi * (fr.epi_radius_px * fr.epi_radius_px - fr.cavity_radius_px * fr.cavity_radius_px);
    CHECK(std::abs(double(count) - analytic) / analytic < 0.02);
}

TEST_CASE("segmentation masks are mutually disjoint and inside the torso") {
    PhantomSpec spec;
    spec.grid = 96;
    spec.frames = 3;
    spec.lesion_radius = 0.03;
    auto ph = make_phantom(spec);
    for (const auto& fr : ph.frames)
        for (size_t i = 0; i < fr.pd.size(); ++i) {
            CHECK(int(fr.lv[i]) + int(fr.rv[i]) + int(fr.myo[i]) <= 1);
            if (fr.lv[i] || fr.rv[i] || fr.myo[i]) CHECK(fr.torso[i] == 1);
            if (fr.lesion[i]) CHECK(fr.myo[i] == 1);
        }
}

TEST_CASE("geometry overflow raises a validation error") {
    PhantomSpec spec;
    spec.lv_cavity_radius = 0.30;
    spec.myo_thickness = 0.15;
    CHECK_THROWS_AS(make_phantom(spec), ValidationError);
}

TEST_CASE("simulate_coils: single coil normalizes to constant magnitude") {
    auto sens = simulate_coils(1, 32, 32, 5);
    for (const auto& z : sens.maps.v) CHECK(std::abs(z) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("simulate_coils maps are smooth with a gradient bound tied to the profile") {
    const int n = 64;
    auto sens = simulate_coils(6, n, n, 7);
    // quadratic magnitude over radius R=0.85n and linear/quadratic phase imply
    // |S(p+1) - S(p)| well below this loose analytic bound per pixel step
    const double bound = 0.15;
    double worst = 0;
    for (int c = 0; c < 6; ++c)
        for (int y = 0; y < n - 1; ++y)
            for (int x = 0; x < n - 1; ++x) {
                worst = std::max(worst, std::abs(sens.maps.at(c, y + 1, x) - sens.maps.at(c, y, x)));
                worst = std::max(worst, std::abs(sens.maps.at(c, y, x + 1) - sens.maps.at(c, y, x)));
            }
    CHECK(worst < bound);
}

TEST_CASE("simulate_coils normalization holds everywhere") {
    auto sens = simulate_coils(8, 48, 40, 11);
    CHECK(sens.normalization_error() < 1e-6);
}

TEST_CASE("synthesize_kspace: noiseless SoS reconstruction equals the input magnitude") {
    PhantomSpec spec;
    auto ph = make_phantom(spec);
    auto mag = modality_image(ph.frames[0], "cine");
    auto rec = synthesize_kspace(mag, spec.grid, spec.grid, 4,
                                 std::numeric_limits<double>::infinity(), 3);
    double worst = 0;
    for (size_t i = 0; i < mag.size(); ++i) worst = std::max(worst, std::abs(rec.reference[i] - mag[i]));
    CHECK(worst < 1e-6);
    CHECK(rec.reference_consistency_error() < 1e-6);
}

TEST_CASE("synthesize_kspace hits the requested SNR within 15% over 20 seeds") {
    PhantomSpec spec;
    spec.grid = 48;
    auto ph = make_phantom(spec);
    auto mag = modality_image(ph.frames[0], "cine");
    const double want = 30.0;

    double peak = 0;
    for (double v : mag) peak = std::max(peak, v);
    double signal_power = 0;
    int64_t support = 0;
    for (double v : mag)
        if (v > 1e-6 * peak) {
            signal_power += v * v;
            ++support;
        }
    signal_power /= double(support);

    // measured on the combined image: signal rms over the support against the
    // full complex noise power read off the signal-free background region
    double ratio_sum = 0;
    for (uint64_t seed = 0; seed < 20; ++seed) {
        auto noisy = synthesize_kspace(mag, 48, 48, 4, want, seed);
        double noise_power = 0;
        int64_t nbg = 0;
        for (size_t i = 0; i < mag.size(); ++i) {
            if (mag[i] > 1e-6 * peak) continue;
            noise_power += noisy.reference[i] * noisy.reference[i];
            ++nbg;
        }
        REQUIRE(nbg > 100);
        noise_power /= double(nbg);
        ratio_sum += std::sqrt(signal_power / noise_power);
    }
    const double measured = ratio_sum / 20.0;
    CHECK(std::abs(measured - want) / want < 0.15);
}

TEST_CASE("synthesize_kspace is deterministic per seed and validates inputs") {
    std::vector<double> mag(32 * 32, 0.5);
    auto a = synthesize_kspace(mag, 32, 32, 3, 20.0, 9);
    auto b = synthesize_kspace(mag, 32, 32, 3, 20.0, 9);
    CHECK(a.kspace.data.v == b.kspace.data.v);
    CHECK_THROWS_AS(synthesize_kspace(mag, 32, 32, 3, 0.0, 9), ValidationError);
    CHECK_THROWS_AS(synthesize_kspace(mag, 16, 16, 3, 20.0, 9), ValidationError);
}

TEST_CASE("weighted series: TE=0 returns PD exactly and T2 decay is monotone") {
    PhantomSpec spec;
    spec.grid = 48;
    auto ph = make_phantom(spec);
    const auto& fr = ph.frames[0];
    auto series = simulate_weighted_series(fr, "t2map", {0.0, 25.0, 50.0, 80.0});
    for (size_t i = 0; i < fr.pd.size(); ++i) CHECK(series[0][i] == doctest::Approx(fr.pd[i]));
    for (size_t t = 1; t < series.size(); ++t)
        for (size_t i = 0; i < fr.pd.size(); ++i)
            if (fr.pd[i] > 1e-3) CHECK(series[t][i] < series[t - 1][i]);
    CHECK_THROWS_AS(simulate_weighted_series(fr, "t2map", {10.0, 5.0}), ValidationError);
}

TEST_CASE("container: write/read roundtrip is bit-exact") {
    PhantomSpec spec;
    spec.grid = 32;
    spec.lesion_radius = 0.03;
    auto ph = make_phantom(spec);
    auto mag = modality_image(ph.frames[0], "cine");
    auto rec = synthesize_kspace(mag, 32, 32, 3, 25.0, 13);
    rec.scan_id = "phantom-013";
    rec.lv_mask = ph.frames[0].lv;
    rec.rv_mask = ph.frames[0].rv;
    rec.myo_mask = ph.frames[0].myo;
    rec.mask = gen_uniform(32, 32, 4.0, 8);
    rec.has_mask = true;

    auto dir = std::filesystem::temp_directory_path() / "cmm_container_test" / "rec";
    std::filesystem::remove_all(dir.parent_path());
    container_write(rec, dir);
    auto back = container_read(dir);

    // storage is float32, so compare against the float-rounded original
    CHECK(back.kspace.data.v.size() == rec.kspace.data.v.size());
    for (size_t i = 0; i < back.kspace.data.v.size(); ++i) {
        CHECK(back.kspace.data.v[i].real() == double(float(rec.kspace.data.v[i].real())));
        CHECK(back.kspace.data.v[i].imag() == double(float(rec.kspace.data.v[i].imag())));
    }
    CHECK(back.scan_id == rec.scan_id);
    CHECK(back.lv_mask == rec.lv_mask);
    CHECK(back.has_mask);
    CHECK(back.mask.grid == rec.mask.grid);

    // writing the read-back record reproduces identical digests
    auto dir2 = dir.parent_path() / "rec2";
    container_write(back, dir2);
    auto m1 = nlohmann::json::parse(detail::read_text_file(dir / "manifest.json"));
    auto m2 = nlohmann::json::parse(detail::read_text_file(dir2 / "manifest.json"));
    CHECK(m1.at("blobs") == m2.at("blobs"));
    std::filesystem::remove_all(dir.parent_path());
}

TEST_CASE("container: tampered blob fails the digest check") {
    std::vector<double> mag(24 * 24, 0.4);
    auto rec = synthesize_kspace(mag, 24, 24, 2, 40.0, 15);
    rec.scan_id = "tamper";
    auto dir = std::filesystem::temp_directory_path() / "cmm_tamper_test";
    std::filesystem::remove_all(dir);
    container_write(rec, dir);

    FILE* f = std::fopen((dir / "kspace.c64").string().c_str(), "r+b");
    REQUIRE(f);
    float poison = 1e6f;
    std::fwrite(&poison, sizeof(float), 1, f);
    std::fclose(f);

    CHECK_THROWS_AS(container_read(dir), IoError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("container: a 10-record dataset enumerates in stable order") {
    auto dir = std::filesystem::temp_directory_path() / "cmm_dataset_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    std::vector<std::string> names;
    for (int i = 0; i < 10; ++i) {
        std::vector<double> mag(16 * 16, 0.1 * (i + 1));
        auto rec = synthesize_kspace(mag, 16, 16, 2, 50.0, uint64_t(i));
        char buf[32];
        std::snprintf(buf, sizeof(buf), "record_%04d", i);
        rec.scan_id = buf;
        container_write(rec, dir / buf);
        names.push_back(buf);
    }
    dataset_write_index(dir, names);
    auto listed = dataset_read_index(dir);
    CHECK(listed == names);
    auto again = dataset_read_index(dir);
    CHECK(again == listed);
    for (size_t i = 0; i < listed.size(); ++i)
        CHECK(container_read(dir / listed[i]).scan_id == listed[i]);
    std::filesystem::remove_all(dir);
}

TEST_CASE("missing blob raises an IO error") {
    std::vector<double> mag(16 * 16, 0.3);
    auto rec = synthesize_kspace(mag, 16, 16, 2, 30.0, 21);
    rec.scan_id = "missing";
    auto dir = std::filesystem::temp_directory_path() / "cmm_missing_test";
    std::filesystem::remove_all(dir);
    container_write(rec, dir);
    std::filesystem::remove(dir / "reference.f32");
    CHECK_THROWS_AS(container_read(dir), IoError);
    std::filesystem::remove_all(dir);
}

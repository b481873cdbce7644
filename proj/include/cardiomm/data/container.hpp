#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cardiomm/core/errors.hpp"
#include "cardiomm/data/record.hpp"

namespace cardiomm {

// 64-bit FNV-1a content hash; fast and deterministic, not cryptographic.
inline uint64_t fnv1a64(const void* data, size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = 0xCBF29CE484222325ULL;
    for (size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline std::string digest_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace detail {

inline void write_file(const std::filesystem::path& p, const void* data, size_t bytes) {
    FILE* f = std::fopen(p.string().c_str(), "wb");
    if (!f) throw IoError("cannot write " + p.string());
    if (bytes && std::fwrite(data, 1, bytes, f) != bytes) {
        std::fclose(f);
        throw IoError("short write on " + p.string());
    }
    std::fclose(f);
}

inline std::vector<unsigned char> read_file(const std::filesystem::path& p) {
    FILE* f = std::fopen(p.string().c_str(), "rb");
    if (!f) throw IoError("missing blob " + p.string());
    std::fseek(f, 0, SEEK_END);
    const long bytes = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    std::vector<unsigned char> v(static_cast<size_t>(bytes));
    if (!v.empty() && std::fread(v.data(), 1, v.size(), f) != v.size()) {
        std::fclose(f);
        throw IoError("short read on " + p.string());
    }
    std::fclose(f);
    return v;
}

inline std::string read_text_file(const std::filesystem::path& p) {
    auto v = read_file(p);
    return std::string(v.begin(), v.end());
}

} // namespace detail

constexpr int kContainerVersion = 1;

// run-length encoding of mask rows: per row, [start, run] pairs of ones
inline nlohmann::json mask_to_rle(const UndersamplingMask& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (int y = 0; y < m.ny; ++y) {
        nlohmann::json row = nlohmann::json::array();
        int x = 0;
        while (x < m.nx) {
            if (m.at(y, x)) {
                int start = x;
                while (x < m.nx && m.at(y, x)) ++x;
                row.push_back({start, x - start});
            } else {
                ++x;
            }
        }
        rows.push_back(row);
    }
    nlohmann::json j;
    j["ny"] = m.ny;
    j["nx"] = m.nx;
    j["pattern"] = pattern_name(m.pattern);
    j["nominal_af"] = m.nominal_af;
    j["acs_is_block"] = m.acs_is_block;
    j["acs_h"] = m.acs_h;
    j["acs_w"] = m.acs_w;
    j["seed"] = m.seed;
    j["rows"] = rows;
    return j;
}

inline UndersamplingMask mask_from_rle(const nlohmann::json& j) {
    UndersamplingMask m;
    m.ny = j.at("ny").get<int>();
    m.nx = j.at("nx").get<int>();
    m.grid.assign(size_t(m.ny) * m.nx, 0);
    m.pattern = pattern_from_name(j.at("pattern").get<std::string>());
    m.nominal_af = j.at("nominal_af").get<double>();
    m.acs_is_block = j.at("acs_is_block").get<bool>();
    m.acs_h = j.at("acs_h").get<int>();
    m.acs_w = j.at("acs_w").get<int>();
    m.seed = j.at("seed").get<uint64_t>();
    const auto& rows = j.at("rows");
    for (int y = 0; y < m.ny; ++y)
        for (const auto& run : rows.at(size_t(y))) {
            const int start = run.at(0).get<int>();
            const int len = run.at(1).get<int>();
            for (int x = start; x < start + len; ++x) m.at(y, x) = 1;
        }
    return m;
}

// On-disk record: manifest.json plus one little-endian blob per array
// (complex64 for complex data, float32 for real images, u8 for masks).
// The write is atomic per record (temp dir + rename) and reads validate
// content digests.
inline void container_write(const ScanRecord& rec, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    const fs::path tmp = dir.string() + ".tmp";
    fs::remove_all(tmp);
    fs::create_directories(tmp);

    nlohmann::json manifest;
    manifest["container_version"] = kContainerVersion;
    manifest["scan_id"] = rec.scan_id;
    manifest["modality"] = rec.modality;
    manifest["view"] = rec.view;
    manifest["field_strength"] = rec.field_strength;
    manifest["vendor"] = rec.vendor;
    manifest["frame_index"] = rec.frame_index;
    manifest["num_frames"] = rec.num_frames;
    manifest["timing_ms"] = rec.timing_ms;
    manifest["heart_rate_bpm"] = rec.heart_rate_bpm;
    manifest["coils"] = rec.kspace.data.coils;
    manifest["ny"] = rec.ny();
    manifest["nx"] = rec.nx();
    manifest["pixel_spacing_mm"] = {rec.kspace.geometry.pixel_spacing_mm[0],
                                    rec.kspace.geometry.pixel_spacing_mm[1]};
    manifest["slice_thickness_mm"] = rec.kspace.geometry.slice_thickness_mm;
    manifest["provenance"] = rec.kspace.provenance;

    nlohmann::json blobs = nlohmann::json::object();
    auto add_c64 = [&](const std::string& role, const std::vector<std::complex<double>>& v) {
        std::vector<float> raw(v.size() * 2);
        for (size_t i = 0; i < v.size(); ++i) {
            raw[2 * i] = float(v[i].real());
            raw[2 * i + 1] = float(v[i].imag());
        }
        const auto path = tmp / (role + ".c64");
        detail::write_file(path, raw.data(), raw.size() * sizeof(float));
        blobs[role] = {{"dtype", "complex64"}, {"count", v.size()},
                       {"digest", digest_hex(fnv1a64(raw.data(), raw.size() * sizeof(float)))}};
    };
    auto add_f32 = [&](const std::string& role, const std::vector<double>& v) {
        std::vector<float> raw(v.size());
        for (size_t i = 0; i < v.size(); ++i) raw[i] = float(v[i]);
        const auto path = tmp / (role + ".f32");
        detail::write_file(path, raw.data(), raw.size() * sizeof(float));
        blobs[role] = {{"dtype", "float32"}, {"count", v.size()},
                       {"digest", digest_hex(fnv1a64(raw.data(), raw.size() * sizeof(float)))}};
    };
    auto add_u8 = [&](const std::string& role, const std::vector<uint8_t>& v) {
        const auto path = tmp / (role + ".u8");
        detail::write_file(path, v.data(), v.size());
        blobs[role] = {{"dtype", "u8"}, {"count", v.size()},
                       {"digest", digest_hex(fnv1a64(v.data(), v.size()))}};
    };

    add_c64("kspace", rec.kspace.data.v);
    add_f32("reference", rec.reference);
    if (rec.sens.maps.coils > 0) add_c64("sens", rec.sens.maps.v);
    if (!rec.lv_mask.empty()) add_u8("lv", rec.lv_mask);
    if (!rec.rv_mask.empty()) add_u8("rv", rec.rv_mask);
    if (!rec.myo_mask.empty()) add_u8("myo", rec.myo_mask);
    manifest["blobs"] = blobs;
    if (rec.has_mask) manifest["undersampling_mask"] = mask_to_rle(rec.mask);

    const std::string text = manifest.dump(2) + "\n";
    detail::write_file(tmp / "manifest.json", text.data(), text.size());

    fs::remove_all(dir);
    fs::rename(tmp, dir);
}

inline ScanRecord container_read(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    nlohmann::json manifest = nlohmann::json::parse(detail::read_text_file(dir / "manifest.json"));
    if (manifest.at("container_version").get<int>() != kContainerVersion)
        throw IoError("container version mismatch in " + dir.string());

    ScanRecord rec;
    rec.scan_id = manifest.at("scan_id").get<std::string>();
    rec.modality = manifest.at("modality").get<std::string>();
    rec.view = manifest.at("view").get<std::string>();
    rec.field_strength = manifest.at("field_strength").get<std::string>();
    rec.vendor = manifest.at("vendor").get<std::string>();
    rec.frame_index = manifest.at("frame_index").get<int>();
    rec.num_frames = manifest.at("num_frames").get<int>();
    rec.timing_ms = manifest.at("timing_ms").get<double>();
    rec.heart_rate_bpm = manifest.at("heart_rate_bpm").get<double>();
    const int coils = manifest.at("coils").get<int>();
    const int ny = manifest.at("ny").get<int>();
    const int nx = manifest.at("nx").get<int>();
    rec.kspace.geometry.pixel_spacing_mm[0] = manifest.at("pixel_spacing_mm").at(0).get<double>();
    rec.kspace.geometry.pixel_spacing_mm[1] = manifest.at("pixel_spacing_mm").at(1).get<double>();
    rec.kspace.geometry.slice_thickness_mm = manifest.at("slice_thickness_mm").get<double>();
    rec.kspace.geometry.frame_index = rec.frame_index;
    rec.kspace.provenance = manifest.at("provenance").get<std::string>();

    const auto& blobs = manifest.at("blobs");
    auto load_checked = [&](const std::string& role, const std::string& ext) {
        auto raw = detail::read_file(dir / (role + ext));
        const std::string want = blobs.at(role).at("digest").get<std::string>();
        const std::string got = digest_hex(fnv1a64(raw.data(), raw.size()));
        if (want != got)
            throw IoError("digest mismatch on blob '" + role + "' in " + dir.string() + " (expected " +
                          want + ", got " + got + ")");
        return raw;
    };
    auto get_c64 = [&](const std::string& role, std::vector<std::complex<double>>& out) {
        auto raw = load_checked(role, ".c64");
        const auto* f = reinterpret_cast<const float*>(raw.data());
        out.resize(raw.size() / (2 * sizeof(float)));
        for (size_t i = 0; i < out.size(); ++i) out[i] = {double(f[2 * i]), double(f[2 * i + 1])};
    };
    auto get_f32 = [&](const std::string& role, std::vector<double>& out) {
        auto raw = load_checked(role, ".f32");
        const auto* f = reinterpret_cast<const float*>(raw.data());
        out.resize(raw.size() / sizeof(float));
        for (size_t i = 0; i < out.size(); ++i) out[i] = double(f[i]);
    };

    rec.kspace.data = CStack<double>(coils, ny, nx);
    get_c64("kspace", rec.kspace.data.v);
    get_f32("reference", rec.reference);
    if (blobs.contains("sens")) {
        rec.sens.maps = CStack<double>(coils, ny, nx);
        get_c64("sens", rec.sens.maps.v);
    }
    auto get_u8 = [&](const std::string& role, std::vector<uint8_t>& out) {
        if (!blobs.contains(role)) return;
        auto raw = load_checked(role, ".u8");
        out.assign(raw.begin(), raw.end());
    };
    get_u8("lv", rec.lv_mask);
    get_u8("rv", rec.rv_mask);
    get_u8("myo", rec.myo_mask);
    if (manifest.contains("undersampling_mask")) {
        rec.mask = mask_from_rle(manifest.at("undersampling_mask"));
        rec.has_mask = true;
    }
    return rec;
}

// A dataset is a directory of record subdirectories plus an index with
// stable ordering.
inline void dataset_write_index(const std::filesystem::path& dir,
                                const std::vector<std::string>& record_dirs) {
    nlohmann::json j;
    j["container_version"] = kContainerVersion;
    j["records"] = record_dirs;
    const std::string text = j.dump(2) + "\n";
    detail::write_file(dir / "dataset.json", text.data(), text.size());
}

inline std::vector<std::string> dataset_read_index(const std::filesystem::path& dir) {
    nlohmann::json j = nlohmann::json::parse(detail::read_text_file(dir / "dataset.json"));
    if (j.at("container_version").get<int>() != kContainerVersion)
        throw IoError("dataset version mismatch in " + dir.string());
    return j.at("records").get<std::vector<std::string>>();
}

} // namespace cardiomm

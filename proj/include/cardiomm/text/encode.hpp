#pragma once

#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cardiomm/core/errors.hpp"
#include "cardiomm/data/record.hpp"

namespace cardiomm {

constexpr int kRawEmbedDim = 512;

// lowercase, single-space separators, trimmed
inline std::string canonicalize_text(const std::string& s) {
    std::string out;
    bool pending_space = false;
    for (char ch : s) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out += ' ';
            pending_space = false;
        }
        out += char(std::tolower(static_cast<unsigned char>(ch)));
    }
    return out;
}

struct TextBundle {
    std::string metadata_text;
    std::string undersampling_text;

    void validate() const {
        if (metadata_text.empty() || undersampling_text.empty())
            throw ValidationError("TextBundle: texts must be non-empty");
        if (metadata_text != canonicalize_text(metadata_text) ||
            undersampling_text != canonicalize_text(undersampling_text))
            throw ValidationError("TextBundle: texts must be canonicalized");
    }
};

// Deterministic template for the metadata text channel; absent fields render
// as "unknown".
inline std::string compose_metadata_text(const ScanRecord& rec) {
    auto field = [](const std::string& v) { return v.empty() ? std::string("unknown") : v; };
    std::string s = "modality " + field(rec.modality) + "; view " + field(rec.view) + "; field " +
                    field(rec.field_strength) + "t; vendor " + field(rec.vendor);
    return canonicalize_text(s);
}

namespace detail {

inline uint64_t fnv1a(const std::string& s) {
    uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

} // namespace detail

// Signed token n-gram feature hashing into kRawEmbedDim bins, unit norm.
// Vocabulary-free, so unseen text still maps to a valid embedding.
inline std::vector<double> encode_text_hashed(const std::string& canonical) {
    if (canonical.empty()) throw ValidationError("encode_text: empty text");
    std::vector<std::string> tokens;
    std::string tok;
    for (char ch : canonical) {
        if (ch == ' ') {
            if (!tok.empty()) tokens.push_back(tok);
            tok.clear();
        } else {
            tok += ch;
        }
    }
    if (!tok.empty()) tokens.push_back(tok);
    if (tokens.empty()) throw ValidationError("encode_text: empty text");

    std::vector<double> v(kRawEmbedDim, 0.0);
    auto bump = [&](const std::string& ngram) {
        const uint64_t h = detail::fnv1a(ngram);
        const size_t bin = size_t(h % kRawEmbedDim);
        v[bin] += (h >> 63) ? -1.0 : 1.0;
    };
    for (size_t i = 0; i < tokens.size(); ++i) {
        bump(tokens[i]);
        if (i + 1 < tokens.size()) bump(tokens[i] + "_" + tokens[i + 1]);
        if (i + 2 < tokens.size()) bump(tokens[i] + "_" + tokens[i + 1] + "_" + tokens[i + 2]);
    }
    double nn = 0;
    for (double x : v) nn += x * x;
    nn = std::sqrt(nn);
    if (nn == 0) throw ValidationError("encode_text: degenerate embedding");
    for (double& x : v) x /= nn;
    return v;
}

// Precomputed-embedding backend: a JSON manifest mapping canonical text to an
// offset into a little-endian float32 array file. Lets an external encoder's
// outputs drop in without code changes.
class PrecomputedEmbeddings {
public:
    static PrecomputedEmbeddings load(const std::filesystem::path& manifest_path) {
        PrecomputedEmbeddings pe;
        FILE* f = std::fopen(manifest_path.string().c_str(), "rb");
        if (!f) throw IoError("cannot read embedding manifest " + manifest_path.string());
        std::string text;
        char buf[65536];
        size_t n;
        while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) text.append(buf, n);
        std::fclose(f);
        nlohmann::json j = nlohmann::json::parse(text);
        const auto bin_path = manifest_path.parent_path() / j.at("data_file").get<std::string>();
        FILE* fb = std::fopen(bin_path.string().c_str(), "rb");
        if (!fb) throw IoError("cannot read embedding data " + bin_path.string());
        std::fseek(fb, 0, SEEK_END);
        const long bytes = std::ftell(fb);
        std::fseek(fb, 0, SEEK_SET);
        std::vector<float> raw(size_t(bytes) / sizeof(float));
        if (!raw.empty() && std::fread(raw.data(), sizeof(float), raw.size(), fb) != raw.size()) {
            std::fclose(fb);
            throw IoError("short read on " + bin_path.string());
        }
        std::fclose(fb);
        pe.data_ = std::move(raw);
        for (auto& [key, off] : j.at("entries").items()) pe.offsets_[key] = off.get<int64_t>();
        return pe;
    }

    static void save(const std::filesystem::path& manifest_path,
                     const std::map<std::string, std::vector<double>>& table) {
        nlohmann::json j;
        j["data_file"] = "embeddings.bin";
        nlohmann::json entries;
        std::vector<float> flat;
        for (const auto& [key, vec] : table) {
            entries[key] = int64_t(flat.size());
            for (double v : vec) flat.push_back(float(v));
        }
        j["entries"] = entries;
        std::filesystem::create_directories(manifest_path.parent_path());
        FILE* f = std::fopen(manifest_path.string().c_str(), "wb");
        if (!f) throw IoError("cannot write " + manifest_path.string());
        const std::string text = j.dump(2) + "\n";
        std::fwrite(text.data(), 1, text.size(), f);
        std::fclose(f);
        const auto bin_path = manifest_path.parent_path() / "embeddings.bin";
        FILE* fb = std::fopen(bin_path.string().c_str(), "wb");
        if (!fb) throw IoError("cannot write " + bin_path.string());
        if (!flat.empty()) std::fwrite(flat.data(), sizeof(float), flat.size(), fb);
        std::fclose(fb);
    }

    std::vector<double> lookup(const std::string& canonical) const {
        auto it = offsets_.find(canonical);
        if (it == offsets_.end())
            throw ValidationError("precomputed embedding missing for text: " + canonical);
        if (it->second + kRawEmbedDim > int64_t(data_.size()))
            throw IoError("embedding table truncated at " + canonical);
        std::vector<double> v(kRawEmbedDim);
        for (int i = 0; i < kRawEmbedDim; ++i) v[size_t(i)] = double(data_[size_t(it->second + i)]);
        return v;
    }

private:
    std::map<std::string, int64_t> offsets_;
    std::vector<float> data_;
};

// Pluggable encoder: deterministic hashing by default, precomputed table
// when provided.
class TextEncoder {
public:
    TextEncoder() = default;
    explicit TextEncoder(PrecomputedEmbeddings table) : table_(std::move(table)), use_table_(true) {}

    std::vector<double> encode(const std::string& text) const {
        const std::string canonical = canonicalize_text(text);
        if (canonical.empty()) throw ValidationError("encode_text: empty text");
        if (use_table_) return table_.lookup(canonical);
        return encode_text_hashed(canonical);
    }

private:
    PrecomputedEmbeddings table_;
    bool use_table_ = false;
};

} // namespace cardiomm

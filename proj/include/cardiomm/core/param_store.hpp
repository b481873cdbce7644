#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cardiomm/core/errors.hpp"
#include "cardiomm/core/rng.hpp"
#include "cardiomm/core/tensor.hpp"

namespace cardiomm::ad {

template <typename T>
constexpr const char* dtype_name() {
    if constexpr (sizeof(T) == 8)
        return "f64";
    else
        return "f32";
}

// Owns every trainable tensor by hierarchical name, together with its AdamW
// moment state. Iteration order is the lexicographic name order, which keeps
// serialization and optimizer sweeps deterministic.
template <typename T>
class ParamStore {
public:
    struct Entry {
        Tensor<T> param;
        std::vector<T> m, v; // first/second moments, sized on first optimizer step
        int64_t step = 0;
    };

    Tensor<T> create(const std::string& name, Shape shape, std::vector<T> values) {
        if (entries_.count(name)) throw ValidationError("ParamStore: duplicate parameter name " + name);
        auto t = Tensor<T>::from(std::move(shape), std::move(values), true);
        entries_[name] = Entry{t, {}, {}, 0};
        return t;
    }

    Tensor<T> create_uniform(const std::string& name, Shape shape, Rng& rng, double lo, double hi) {
        std::vector<T> v(size_t(shape_numel(shape)));
        for (auto& x : v) x = T(rng.uniform(lo, hi));
        return create(name, std::move(shape), std::move(v));
    }

    Tensor<T> create_const(const std::string& name, Shape shape, T value) {
        return create(name, shape, std::vector<T>(size_t(shape_numel(shape)), value));
    }

    bool has(const std::string& name) const { return entries_.count(name) != 0; }

    Tensor<T> get(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw ValidationError("ParamStore: unknown parameter " + name);
        return it->second.param;
    }

    std::map<std::string, Entry>& entries() { return entries_; }
    const std::map<std::string, Entry>& entries() const { return entries_; }

    size_t count() const { return entries_.size(); }

    int64_t total_scalars() const {
        int64_t n = 0;
        for (const auto& [k, e] : entries_) n += e.param.numel();
        return n;
    }

    void zero_grad() {
        for (auto& [k, e] : entries_) e.param.zero_grad();
    }

    // manifest + little-endian binary sidecar; optimizer moments ride in a
    // second sidecar so a checkpoint can resume mid-run
    void save(const std::filesystem::path& dir, bool with_optimizer = true) const {
        namespace fs = std::filesystem;
        fs::create_directories(dir);
        nlohmann::json manifest;
        manifest["format_version"] = 1;
        manifest["dtype"] = dtype_name<T>();
        manifest["optimizer_state"] = with_optimizer;
        nlohmann::json plist = nlohmann::json::array();
        int64_t offset = 0;
        for (const auto& [name, e] : entries_) {
            nlohmann::json p;
            p["name"] = name;
            p["shape"] = e.param.shape();
            p["offset"] = offset;
            offset += e.param.numel();
            plist.push_back(p);
        }
        manifest["params"] = plist;
        manifest["total_scalars"] = offset;
        write_text(dir / "params.json", manifest.dump(2) + "\n");

        std::vector<T> flat;
        flat.reserve(size_t(offset));
        for (const auto& [name, e] : entries_)
            flat.insert(flat.end(), e.param.value().begin(), e.param.value().end());
        write_blob(dir / "params.bin", flat);

        if (with_optimizer) {
            std::vector<T> opt;
            std::vector<int64_t> steps;
            for (const auto& [name, e] : entries_) {
                const size_t n = e.param.value().size();
                if (e.m.size() == n) {
                    opt.insert(opt.end(), e.m.begin(), e.m.end());
                    opt.insert(opt.end(), e.v.begin(), e.v.end());
                } else {
                    opt.insert(opt.end(), 2 * n, T(0));
                }
                steps.push_back(e.step);
            }
            write_blob(dir / "optim.bin", opt);
            write_blob(dir / "steps.bin", steps);
        }
    }

    static ParamStore load(const std::filesystem::path& dir) {
        nlohmann::json manifest = nlohmann::json::parse(read_text(dir / "params.json"));
        if (manifest.at("format_version").get<int>() != 1)
            throw IoError("ParamStore: unsupported checkpoint format version");
        const std::string dtype = manifest.at("dtype").get<std::string>();
        if (dtype != dtype_name<T>())
            throw IoError("ParamStore: checkpoint dtype " + dtype + " does not match requested " +
                          dtype_name<T>());
        ParamStore out;
        std::vector<T> flat = read_blob<T>(dir / "params.bin");
        const bool with_opt = manifest.value("optimizer_state", false);
        std::vector<T> opt;
        std::vector<int64_t> steps;
        if (with_opt) {
            opt = read_blob<T>(dir / "optim.bin");
            steps = read_blob<int64_t>(dir / "steps.bin");
        }
        size_t opt_off = 0, pidx = 0;
        for (const auto& p : manifest.at("params")) {
            const std::string name = p.at("name").get<std::string>();
            Shape shape = p.at("shape").get<Shape>();
            const int64_t off = p.at("offset").get<int64_t>();
            const int64_t n = shape_numel(shape);
            if (off + n > int64_t(flat.size())) throw IoError("ParamStore: params.bin truncated");
            std::vector<T> vals(flat.begin() + off, flat.begin() + off + n);
            out.create(name, shape, std::move(vals));
            if (with_opt) {
                auto& e = out.entries_[name];
                e.m.assign(opt.begin() + opt_off, opt.begin() + opt_off + n);
                e.v.assign(opt.begin() + opt_off + n, opt.begin() + opt_off + 2 * n);
                e.step = steps.at(pidx);
                opt_off += 2 * size_t(n);
            }
            ++pidx;
        }
        return out;
    }

    static std::string checkpoint_dtype(const std::filesystem::path& dir) {
        nlohmann::json manifest = nlohmann::json::parse(read_text(dir / "params.json"));
        return manifest.at("dtype").get<std::string>();
    }

private:
    static void write_text(const std::filesystem::path& p, const std::string& s) {
        FILE* f = std::fopen(p.string().c_str(), "wb");
        if (!f) throw IoError("cannot write " + p.string());
        std::fwrite(s.data(), 1, s.size(), f);
        std::fclose(f);
    }

    static std::string read_text(const std::filesystem::path& p) {
        FILE* f = std::fopen(p.string().c_str(), "rb");
        if (!f) throw IoError("cannot read " + p.string());
        std::string s;
        char buf[65536];
        size_t n;
        while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) s.append(buf, n);
        std::fclose(f);
        return s;
    }

    template <typename U>
    static void write_blob(const std::filesystem::path& p, const std::vector<U>& v) {
        FILE* f = std::fopen(p.string().c_str(), "wb");
        if (!f) throw IoError("cannot write " + p.string());
        if (!v.empty()) std::fwrite(v.data(), sizeof(U), v.size(), f);
        std::fclose(f);
    }

    template <typename U>
    static std::vector<U> read_blob(const std::filesystem::path& p) {
        FILE* f = std::fopen(p.string().c_str(), "rb");
        if (!f) throw IoError("cannot read " + p.string());
        std::fseek(f, 0, SEEK_END);
        const long bytes = std::ftell(f);
        std::fseek(f, 0, SEEK_SET);
        std::vector<U> v(size_t(bytes) / sizeof(U));
        if (!v.empty() && std::fread(v.data(), sizeof(U), v.size(), f) != v.size()) {
            std::fclose(f);
            throw IoError("short read on " + p.string());
        }
        std::fclose(f);
        return v;
    }

    std::map<std::string, Entry> entries_;
};

} // namespace cardiomm::ad

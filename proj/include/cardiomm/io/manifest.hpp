#pragma once

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "cardiomm/data/container.hpp"

namespace cardiomm {

constexpr const char* kToolVersion = "0.1.0";

// Every CLI run emits one manifest describing the resolved configuration,
// seeds and input digests. Timing is recorded in a sidecar (timing.txt) so
// manifests from identical reruns are byte-identical.
struct RunManifest {
    std::string subcommand;
    nlohmann::json config = nlohmann::json::object();
    uint64_t seed = 0;
    bool seed_was_generated = false;
    std::map<std::string, std::string> input_digests;

    void add_input(const std::string& label, const std::filesystem::path& file) {
        auto raw = detail::read_file(file);
        input_digests[label] = digest_hex(fnv1a64(raw.data(), raw.size()));
    }

    void write(const std::filesystem::path& out_dir, double wall_seconds) const {
        std::filesystem::create_directories(out_dir);
        nlohmann::json j;
        j["subcommand"] = subcommand;
        j["config"] = config;
        j["seed"] = seed;
        j["seed_was_generated"] = seed_was_generated;
        j["input_digests"] = input_digests;
        j["tool_version"] = kToolVersion;
        const std::string text = j.dump(2) + "\n";
        detail::write_file(out_dir / "run_manifest.json", text.data(), text.size());

        char buf[64];
        std::snprintf(buf, sizeof(buf), "wall_clock_s %.3f\n", wall_seconds);
        detail::write_file(out_dir / "timing.txt", buf, std::strlen(buf));
    }
};

class WallClock {
public:
    WallClock() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

} // namespace cardiomm

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace amlm {

inline constexpr std::string_view kToolName = "amlm";
inline constexpr std::string_view kToolVersion = "0.1.0";

// FNV-1a over the file's bytes, streamed. Throws IoError.
uint64_t digest_file(const std::string& path);

std::string iso8601_utc_now();

// Provenance record written to the run directory before training starts, so
// a crashed or diverged run still documents what it consumed.
struct RunManifest {
    std::string version{kToolVersion};
    std::string created;  // wall clock; excluded from reproducibility checks
    uint64_t seed = 0;
    std::vector<std::pair<std::string, std::string>> config;     // key -> value
    std::vector<std::pair<std::string, std::string>> inputs;     // label -> path
    std::vector<std::pair<std::string, uint64_t>> input_digests; // label -> fnv1a64
    std::vector<std::pair<std::string, std::string>> artifacts;  // label -> relative path

    void save(const std::string& path) const;
    static RunManifest load(const std::string& path);
};

}  // namespace amlm

#include "amlm/manifest.hpp"

#include <cstdio>
#include <ctime>
#include <fstream>

#include <json.hpp>

#include "amlm/errors.hpp"

namespace amlm {

namespace {

std::string hex64(uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

uint64_t digest_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for digesting");
    uint64_t h = 1469598103934665603ull;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        std::streamsize n = in.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
    }
    return h;
}

std::string iso8601_utc_now() {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void RunManifest::save(const std::string& path) const {
    nlohmann::ordered_json j;
    j["tool"] = kToolName;
    j["version"] = version;
    j["created"] = created;
    j["seed"] = seed;
    nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
    for (const auto& [k, v] : config) cfg[k] = v;
    j["config"] = std::move(cfg);
    nlohmann::ordered_json ins = nlohmann::ordered_json::object();
    for (size_t i = 0; i < inputs.size(); ++i) {
        ins[inputs[i].first] = {{"path", inputs[i].second},
                                {"fnv1a64", hex64(input_digests[i].second)}};
    }
    j["inputs"] = std::move(ins);
    nlohmann::ordered_json arts = nlohmann::ordered_json::object();
    for (const auto& [k, v] : artifacts) arts[k] = v;
    j["artifacts"] = std::move(arts);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write manifest '" + path + "'");
    out << j.dump(2) << '\n';
    out.flush();
    if (!out) throw IoError("short write to manifest '" + path + "'");
}

RunManifest RunManifest::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open manifest '" + path + "'");
    nlohmann::ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed manifest '" + path + "': " + e.what());
    }
    RunManifest m;
    try {
        m.version = j.at("version").get<std::string>();
        m.created = j.value("created", std::string());
        m.seed = j.at("seed").get<uint64_t>();
        for (const auto& [k, v] : j.at("config").items()) {
            m.config.emplace_back(k, v.get<std::string>());
        }
        for (const auto& [k, v] : j.at("inputs").items()) {
            m.inputs.emplace_back(k, v.at("path").get<std::string>());
            m.input_digests.emplace_back(
                k, std::stoull(v.at("fnv1a64").get<std::string>(), nullptr, 16));
        }
        for (const auto& [k, v] : j.at("artifacts").items()) {
            m.artifacts.emplace_back(k, v.get<std::string>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("manifest '" + path + "' is missing fields: " + e.what());
    }
    return m;
}

}  // namespace amlm

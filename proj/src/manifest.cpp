#include "grrhdr/manifest.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "grrhdr/image.hpp"

namespace grrhdr {

std::string sha256_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw format_error("cannot open for hashing: " + path);
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw format_error("cannot initialize SHA-256");
    }
    char buf[65536];
    while (f) {
        f.read(buf, sizeof buf);
        if (f.gcount() > 0)
            EVP_DigestUpdate(ctx, buf, static_cast<size_t>(f.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xf]);
    }
    return out;
}

void write_run_manifest(const std::string& path, const RunManifest& m) {
    nlohmann::json j;
    j["grrhdr_manifest"] = kManifestFormatVersion;
    j["tool_version"] = kToolVersion;
    j["command"] = m.command;
    j["args"] = m.args;
    j["parameters"] = m.parameters;
    auto files = [](const std::vector<HashedFile>& v) {
        nlohmann::json arr = nlohmann::json::array();
        for (const HashedFile& f : v)
            arr.push_back({{"path", f.path}, {"sha256", f.sha256}});
        return arr;
    };
    j["inputs"] = files(m.inputs);
    j["outputs"] = files(m.outputs);

    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw format_error("cannot open for writing: " + tmp);
        f << j.dump(2) << "\n";
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw format_error("cannot move into place: " + path);
}

RunManifest read_run_manifest(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw format_error("cannot open: " + path);
    nlohmann::json j;
    try {
        f >> j;
        if (j.value("grrhdr_manifest", 0) != kManifestFormatVersion)
            throw format_error("not a manifest file: " + path);
        RunManifest m;
        m.command = j.at("command").get<std::string>();
        m.args = j.at("args").get<std::vector<std::string>>();
        m.parameters = j.value("parameters", nlohmann::json::object());
        for (const auto& e : j.value("inputs", nlohmann::json::array()))
            m.inputs.push_back({e.at("path"), e.at("sha256")});
        for (const auto& e : j.value("outputs", nlohmann::json::array()))
            m.outputs.push_back({e.at("path"), e.at("sha256")});
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw format_error("bad manifest: " + std::string(e.what()));
    }
}

}  // namespace grrhdr

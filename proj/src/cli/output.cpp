#include "output.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <openssl/evp.h>

#include "nvform/cli/app.hpp"
#include "nvform/errors.hpp"

namespace nvform::cli {

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 digest failed");
    std::string hex;
    hex.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
    return hex;
}

std::string file_sha256(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput(fmt::format("cannot open '{}'", path.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    return sha256_hex(ss.str());
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(now)));
}

OutputSet::OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw InvalidInput(fmt::format("cannot create output directory '{}': {}", dir_.string(), ec.message()));
}

void OutputSet::write(const std::string& name, std::string_view content) {
    const auto path = dir_ / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw InvalidInput(fmt::format("cannot write '{}'", path.string()));
    files_.emplace_back(name, sha256_hex(content));
}

void OutputSet::write_manifest(nlohmann::ordered_json manifest) {
    auto list = nlohmann::ordered_json::array();
    for (const auto& [name, sha] : files_) list.push_back({{"file", name}, {"sha256", sha}});
    manifest["outputs"] = list;
    const auto text = manifest.dump(2) + "\n";
    std::ofstream out(dir_ / "manifest.json", std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw InvalidInput("cannot write manifest.json");
}

}  // namespace nvform::cli

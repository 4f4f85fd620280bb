#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace nvform::cli {

/// Files emitted by one command, each recorded with its SHA-256 for the manifest.
class OutputSet {
public:
    explicit OutputSet(std::filesystem::path dir);

    void write(const std::string& name, std::string_view content);
    /// Writes manifest.json listing every file written so far.
    void write_manifest(nlohmann::ordered_json manifest);
    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
    std::vector<std::pair<std::string, std::string>> files_;
};

std::string utc_now();
std::string file_sha256(const std::filesystem::path& path);

}  // namespace nvform::cli

#include "pspc/manifest.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "pspc/csv.hpp"
#include "pspc/errors.hpp"

namespace pspc {

RunManifest::RunManifest() { entries_["tool_version"] = std::string(tool_version); }

void RunManifest::set(std::string key, std::string value) {
    if (key.empty() || key.find_first_of("=\n\r") != std::string::npos) {
        throw ConfigError("invalid manifest key '" + key + "'");
    }
    if (value.find_first_of("\n\r") != std::string::npos) {
        throw ConfigError("manifest value for '" + key + "' contains a line break");
    }
    entries_[std::move(key)] = std::move(value);
}

void RunManifest::set(std::string key, double value) { set(std::move(key), format_number(value)); }

void RunManifest::set(std::string key, std::uint64_t value) { set(std::move(key), std::to_string(value)); }

bool RunManifest::contains(std::string_view key) const { return entries_.find(key) != entries_.end(); }

const std::string& RunManifest::get(std::string_view key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) {
        throw MissingData("manifest has no key '" + std::string(key) + "'");
    }
    return it->second;
}

std::optional<std::string> RunManifest::find(std::string_view key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

double RunManifest::get_double(std::string_view key) const {
    const auto& text = get(key);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw FormatError("manifest key '" + std::string(key) + "' is not a number");
    }
    return value;
}

std::uint64_t RunManifest::get_uint(std::string_view key) const {
    const auto& text = get(key);
    std::uint64_t value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw FormatError("manifest key '" + std::string(key) + "' is not an unsigned integer");
    }
    return value;
}

std::string RunManifest::to_text() const {
    std::string out;
    for (const auto& [k, v] : entries_) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

RunManifest RunManifest::parse(std::string_view text) {
    RunManifest manifest;
    manifest.entries_.clear();
    std::size_t start = 0;
    while (start < text.size()) {
        auto pos = text.find('\n', start);
        auto line = text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
        start = pos == std::string_view::npos ? text.size() : pos + 1;
        if (line.empty() || line.front() == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string_view::npos || eq == 0) {
            throw FormatError("manifest line without key=value: " + std::string(line));
        }
        manifest.entries_[std::string(line.substr(0, eq))] = std::string(line.substr(eq + 1));
    }
    return manifest;
}

void RunManifest::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw FormatError("cannot open " + path.string() + " for writing");
    }
    out << to_text();
}

RunManifest RunManifest::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str());
}

}  // namespace pspc

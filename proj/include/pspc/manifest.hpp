#ifndef PSPC_MANIFEST_HPP
#define PSPC_MANIFEST_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace pspc {

inline constexpr std::string_view tool_version = "0.1.0";

/**
 * Flat key=value record written beside every output of a run.
 *
 * Keys are sorted on output so that identical manifests serialize to
 * identical bytes. Numbers are stored with 17 significant digits.
 */
class RunManifest {
public:
    RunManifest();

    void set(std::string key, std::string value);
    void set(std::string key, double value);
    void set(std::string key, std::uint64_t value);

    bool contains(std::string_view key) const;
    const std::string& get(std::string_view key) const;
    std::optional<std::string> find(std::string_view key) const;
    double get_double(std::string_view key) const;
    std::uint64_t get_uint(std::string_view key) const;

    std::uint64_t seed() const { return get_uint("seed"); }

    const std::map<std::string, std::string, std::less<>>& entries() const { return entries_; }

    std::string to_text() const;
    static RunManifest parse(std::string_view text);

    void save(const std::filesystem::path& path) const;
    static RunManifest load(const std::filesystem::path& path);

    bool operator==(const RunManifest&) const = default;

private:
    std::map<std::string, std::string, std::less<>> entries_;
};

}  // namespace pspc

#endif

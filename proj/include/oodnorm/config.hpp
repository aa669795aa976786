#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "oodnorm/synth.hpp"

namespace oodnorm {

std::uint64_t fnv1a64(const std::string& text);

/// INI-style configuration: [section] headers, key = value lines, # or ;
/// comments. Values are kept verbatim (they may contain spaces, e.g. scenario
/// strings); later duplicates win. The canonical dump sorts sections and keys
/// so the config hash is independent of file layout.
class Config {
public:
    Config() = default;
    static Config from_file(const std::string& path);
    static Config from_string(const std::string& text);

    /// Command-line override "section.key=value".
    void apply_override(const std::string& assignment);

    bool has(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key,
                    const std::string& fallback) const;
    std::string require(const std::string& section, const std::string& key) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    std::size_t get_size(const std::string& section, const std::string& key,
                         std::size_t fallback) const;
    std::uint64_t get_u64(const std::string& section, const std::string& key,
                          std::uint64_t fallback) const;

    std::string canonical() const;
    /// 16 hex digits over the canonical dump; recorded in run manifests so
    /// outputs can be traced back to the exact configuration.
    std::string hash() const;

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

/// "name key=value key=value ..." with numeric values; n and seed are left to
/// the caller. Unknown syntax or duplicate keys raise ConfigError.
ScenarioSpec parse_scenario(const std::string& text);

} // namespace oodnorm

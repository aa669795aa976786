#include "oodnorm/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "oodnorm/errors.hpp"

namespace oodnorm {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t");
    return s.substr(first, last - first + 1);
}

double parse_double_value(const std::string& text, const std::string& what) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw ConfigError(what + ": expected a number, got '" + text + "'");
    }
    return v;
}

std::uint64_t parse_u64_value(const std::string& text, const std::string& what) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw ConfigError(what + ": expected a non-negative integer, got '" + text + "'");
    }
    return v;
}

} // namespace

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

Config Config::from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return from_string(text.str());
}

Config Config::from_string(const std::string& text) {
    Config cfg;
    std::string section;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) {
                throw ConfigError("config line " + std::to_string(line_no) +
                                  ": malformed section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) {
                throw ConfigError("config line " + std::to_string(line_no) + ": empty section name");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        }
        if (section.empty()) {
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": key outside any [section]");
        }
        cfg.sections_[section][key] = value;
    }
    return cfg;
}

void Config::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw ConfigError("override '" + assignment + "': expected section.key=value");
    }
    const std::string target = trim(assignment.substr(0, eq));
    const std::string value = trim(assignment.substr(eq + 1));
    const auto dot = target.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == target.size()) {
        throw ConfigError("override '" + assignment + "': expected section.key=value");
    }
    sections_[target.substr(0, dot)][target.substr(dot + 1)] = value;
}

bool Config::has(const std::string& section, const std::string& key) const {
    const auto sit = sections_.find(section);
    return sit != sections_.end() && sit->second.contains(key);
}

std::string Config::get(const std::string& section, const std::string& key,
                        const std::string& fallback) const {
    const auto sit = sections_.find(section);
    if (sit == sections_.end()) return fallback;
    const auto kit = sit->second.find(key);
    return kit == sit->second.end() ? fallback : kit->second;
}

std::string Config::require(const std::string& section, const std::string& key) const {
    if (!has(section, key)) {
        throw ConfigError("config: missing required key '" + section + "." + key + "'");
    }
    return sections_.at(section).at(key);
}

double Config::get_double(const std::string& section, const std::string& key,
                          double fallback) const {
    if (!has(section, key)) return fallback;
    return parse_double_value(sections_.at(section).at(key),
                              "config '" + section + "." + key + "'");
}

std::size_t Config::get_size(const std::string& section, const std::string& key,
                             std::size_t fallback) const {
    if (!has(section, key)) return fallback;
    const std::uint64_t v =
        parse_u64_value(sections_.at(section).at(key), "config '" + section + "." + key + "'");
    return static_cast<std::size_t>(v);
}

std::uint64_t Config::get_u64(const std::string& section, const std::string& key,
                              std::uint64_t fallback) const {
    if (!has(section, key)) return fallback;
    return parse_u64_value(sections_.at(section).at(key), "config '" + section + "." + key + "'");
}

std::string Config::canonical() const {
    std::ostringstream out;
    for (const auto& [section, entries] : sections_) {
        out << '[' << section << "]\n";
        for (const auto& [key, value] : entries) out << key << '=' << value << '\n';
    }
    return out.str();
}

std::string Config::hash() const {
    const std::uint64_t h = fnv1a64(canonical());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

ScenarioSpec parse_scenario(const std::string& text) {
    std::istringstream in(text);
    ScenarioSpec spec;
    if (!(in >> spec.name)) {
        throw ConfigError("scenario: empty specification");
    }
    std::string token;
    while (in >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == token.size()) {
            throw ConfigError("scenario '" + spec.name + "': expected key=value, got '" + token +
                              "'");
        }
        const std::string key = token.substr(0, eq);
        if (spec.params.contains(key)) {
            throw ConfigError("scenario '" + spec.name + "': duplicate parameter '" + key + "'");
        }
        spec.params[key] =
            parse_double_value(token.substr(eq + 1), "scenario parameter '" + key + "'");
    }
    return spec;
}

} // namespace oodnorm

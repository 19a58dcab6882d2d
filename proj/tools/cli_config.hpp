#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "roughdev/devlab/devlab.hpp"

namespace roughdev::cli {

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view text);

/// Flat key = value configuration. '#' starts a comment; blank lines are skipped.
class Config {
public:
    static Config parse(std::istream& is);
    static Config load(const std::string& path);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::string str(const std::string& key, const std::string& fallback) const;
    double num(const std::string& key, double fallback) const;
    std::size_t count(const std::string& key, std::size_t fallback) const;
    bool flag(const std::string& key, bool fallback) const;
    std::vector<double> list(const std::string& key, std::vector<double> fallback) const;

    /// Throws on keys outside the given set.
    void check_known(const std::set<std::string>& known) const;
    /// Sorted "key = value" lines; the hash is taken over this text.
    std::string canonical() const;
    std::uint64_t hash() const { return fnv1a(canonical()); }
    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

/// Every key the CLI understands.
const std::set<std::string>& known_keys();

/// Deviation setup from the built-in model palette (linear, ou, polynomial, sine; ou for the slow-fast base).
devlab::DeviationSpec build_spec(const Config& cfg);

}  // namespace roughdev::cli

#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

namespace cmda {

// Bad configuration input (missing file, malformed line, unknown key, bad
// value). The CLI treats this as a usage error.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Plain-text key=value run configuration ('#' comments, blank lines
// ignored). Typed getters record every key they resolve together with its
// effective value, so a run can echo its fully resolved configuration and
// reject keys nothing ever asked for.
class RunConfig {
public:
    RunConfig() = default;
    static RunConfig parse_file(const std::string& path);
    static RunConfig parse_text(const std::string& text, const std::string& origin = "<config>");

    void set(const std::string& key, const std::string& value);  // CLI overrides
    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    std::string get_str(const std::string& key, const std::string& dflt) const;
    long long get_int(const std::string& key, long long dflt) const;
    double get_double(const std::string& key, double dflt) const;
    uint64_t get_u64(const std::string& key, uint64_t dflt) const;
    bool get_bool(const std::string& key, bool dflt) const;

    // key=value lines for every key resolved so far, sorted.
    std::string resolved_echo() const;

    // Errors on any provided key that no getter consumed.
    void reject_unconsumed() const;

private:
    std::string origin_ = "<config>";
    std::map<std::string, std::string> kv_;
    mutable std::map<std::string, std::string> resolved_;
};

}  // namespace cmda

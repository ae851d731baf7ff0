#include "cmda/config.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <sstream>

#include "cmda/common.hpp"

namespace cmda {

namespace {

template <typename... Args>
[[noreturn]] void config_fail(const Args&... args) {
    throw ConfigError(strmsg(args...));
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

RunConfig RunConfig::parse_file(const std::string& path) {
    if (!std::filesystem::exists(path)) config_fail("config file not found: ", path);
    return parse_text(read_text_file(path), path);
}

RunConfig RunConfig::parse_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    int ln = 0;
    while (std::getline(in, line)) {
        ++ln;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos)
            config_fail(origin, ":", ln, ": expected key=value, got \"", t, "\"");
        std::string key = trim(t.substr(0, eq));
        std::string val = trim(t.substr(eq + 1));
        if (key.empty()) config_fail(origin, ":", ln, ": empty key");
        if (cfg.kv_.count(key)) config_fail(origin, ":", ln, ": duplicate key ", key);
        cfg.kv_[key] = val;
    }
    return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) { kv_[key] = value; }

std::string RunConfig::get_str(const std::string& key, const std::string& dflt) const {
    auto it = kv_.find(key);
    std::string v = it == kv_.end() ? dflt : it->second;
    resolved_[key] = v;
    return v;
}

long long RunConfig::get_int(const std::string& key, long long dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) {
        resolved_[key] = std::to_string(dflt);
        return dflt;
    }
    try {
        size_t pos = 0;
        long long v = std::stoll(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("");
        resolved_[key] = it->second;
        return v;
    } catch (const std::exception&) {
        config_fail(origin_, ": key ", key, ": \"", it->second, "\" is not an integer");
    }
}

double RunConfig::get_double(const std::string& key, double dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) {
        std::ostringstream os;
        os << dflt;
        resolved_[key] = os.str();
        return dflt;
    }
    try {
        size_t pos = 0;
        double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("");
        resolved_[key] = it->second;
        return v;
    } catch (const std::exception&) {
        config_fail(origin_, ": key ", key, ": \"", it->second, "\" is not a number");
    }
}

uint64_t RunConfig::get_u64(const std::string& key, uint64_t dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) {
        resolved_[key] = std::to_string(dflt);
        return dflt;
    }
    try {
        size_t pos = 0;
        uint64_t v = std::stoull(it->second, &pos);
        if (pos != it->second.size() || it->second[0] == '-') throw std::invalid_argument("");
        resolved_[key] = it->second;
        return v;
    } catch (const std::exception&) {
        config_fail(origin_, ": key ", key, ": \"", it->second, "\" is not an unsigned integer");
    }
}

bool RunConfig::get_bool(const std::string& key, bool dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) {
        resolved_[key] = dflt ? "true" : "false";
        return dflt;
    }
    std::string v = it->second;
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "true" || v == "1" || v == "yes") {
        resolved_[key] = "true";
        return true;
    }
    if (v == "false" || v == "0" || v == "no") {
        resolved_[key] = "false";
        return false;
    }
    config_fail(origin_, ": key ", key, ": \"", it->second, "\" is not a boolean");
}

std::string RunConfig::resolved_echo() const {
    std::ostringstream os;
    for (const auto& [k, v] : resolved_) os << k << "=" << v << "\n";
    return os.str();
}

void RunConfig::reject_unconsumed() const {
    for (const auto& [k, v] : kv_)
        if (!resolved_.count(k))
            config_fail(origin_, ": unknown config key \"", k, "\" (value \"", v, "\")");
}

}  // namespace cmda

#pragma once

#include <map>
#include <stdexcept>
#include <string>

namespace seqdiff {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flat key=value configuration. '#' starts a comment. Environment variables
// prefixed SEQDIFF_ override file values (SEQDIFF_EMBED_DIM=8 sets embed_dim).
class Config {
public:
    Config() = default;

    static Config parse(const std::string& text);
    static Config load(const std::string& path);

    void apply_env_overrides();

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    std::string get_str(const std::string& key, const std::string& fallback) const;
    int64_t get_int(const std::string& key, int64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    // Canonical sorted key=value text; hashed into run manifests.
    std::string text() const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace seqdiff

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "hpe/errors.hpp"

namespace hpe {

// Flat key=value text config. '#' starts a comment; keys validate against a
// typed schema so an unknown or mistyped key fails loudly.
class KeyValueConfig {
public:
    enum class Type { integer, real, boolean, text };

    struct SchemaEntry {
        std::string key;
        Type type;
    };
    using Schema = std::vector<SchemaEntry>;

    static KeyValueConfig parse_file(const std::filesystem::path& path);
    static KeyValueConfig parse_string(const std::string& text, const std::string& origin = "<string>");

    void validate(const Schema& schema) const;

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_text(const std::string& key, const std::string& fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    double get_real(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    void print(std::ostream& os) const;

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;
    std::string origin_;
};

}  // namespace hpe

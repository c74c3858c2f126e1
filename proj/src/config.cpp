#include "hpe/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace hpe {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) {
        return "";
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open config file: " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str(), path.string());
}

KeyValueConfig KeyValueConfig::parse_string(const std::string& text, const std::string& origin) {
    KeyValueConfig cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError(origin + ":" + std::to_string(line_no) + ": expected key=value, got '" + line +
                             "'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ParseError(origin + ":" + std::to_string(line_no) + ": empty key");
        }
        if (cfg.values_.count(key)) {
            throw ParseError(origin + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
        }
        cfg.values_[key] = value;
    }
    return cfg;
}

void KeyValueConfig::validate(const Schema& schema) const {
    for (const auto& [key, value] : values_) {
        const auto it = std::find_if(schema.begin(), schema.end(),
                                     [&](const SchemaEntry& e) { return e.key == key; });
        if (it == schema.end()) {
            throw ParseError(origin_ + ": unknown key '" + key + "'");
        }
        switch (it->type) {
            case Type::integer: {
                char* end = nullptr;
                std::strtoll(value.c_str(), &end, 10);
                if (end == value.c_str() || *end != '\0') {
                    throw ParseError(origin_ + ": key '" + key + "' expects an integer, got '" + value + "'");
                }
                break;
            }
            case Type::real: {
                char* end = nullptr;
                std::strtod(value.c_str(), &end);
                if (end == value.c_str() || *end != '\0') {
                    throw ParseError(origin_ + ": key '" + key + "' expects a number, got '" + value + "'");
                }
                break;
            }
            case Type::boolean: {
                if (value != "on" && value != "off" && value != "true" && value != "false") {
                    throw ParseError(origin_ + ": key '" + key + "' expects on/off, got '" + value + "'");
                }
                break;
            }
            case Type::text:
                break;
        }
    }
}

std::string KeyValueConfig::get_text(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
        return fallback;
    }
    char* end = nullptr;
    const long long v = std::strtoll(it->second.c_str(), &end, 10);
    if (end == it->second.c_str() || *end != '\0') {
        throw ParseError(origin_ + ": key '" + key + "' is not an integer: '" + it->second + "'");
    }
    return v;
}

double KeyValueConfig::get_real(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
        return fallback;
    }
    char* end = nullptr;
    const double v = std::strtod(it->second.c_str(), &end);
    if (end == it->second.c_str() || *end != '\0') {
        throw ParseError(origin_ + ": key '" + key + "' is not a number: '" + it->second + "'");
    }
    return v;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
        return fallback;
    }
    if (it->second == "on" || it->second == "true") {
        return true;
    }
    if (it->second == "off" || it->second == "false") {
        return false;
    }
    throw ParseError(origin_ + ": key '" + key + "' is not on/off: '" + it->second + "'");
}

void KeyValueConfig::print(std::ostream& os) const {
    for (const auto& [key, value] : values_) {
        os << key << "=" << value << "\n";
    }
}

}  // namespace hpe

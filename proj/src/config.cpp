#include "dd/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace dd {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open config file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str(), path);
}

KeyValueConfig KeyValueConfig::parse_string(const std::string& text, const std::string& name) {
    KeyValueConfig cfg;
    cfg.name_ = name;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError(name + ":" + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty()) throw ConfigError(name + ":" + std::to_string(lineno) + ": empty key");
        for (char c : key)
            if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '_' && c != '-')
                throw ConfigError(name + ":" + std::to_string(lineno) + ": bad character in key '" + key + "'");
        if (cfg.entries_.count(key))
            throw ConfigError(name + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
        cfg.entries_[key] = Entry{value, lineno, false};
    }
    return cfg;
}

const KeyValueConfig::Entry* KeyValueConfig::find(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return nullptr;
    it->second.used = true;
    return &it->second;
}

const KeyValueConfig::Entry& KeyValueConfig::require(const std::string& key) const {
    const Entry* e = find(key);
    if (!e) throw ConfigError(name_ + ": missing required key '" + key + "'");
    return *e;
}

bool KeyValueConfig::has(const std::string& key) const { return find(key) != nullptr; }

void KeyValueConfig::fail(const std::string& key, const std::string& message) const {
    auto it = entries_.find(key);
    const int line = it == entries_.end() ? 0 : it->second.line;
    throw ConfigError(name_ + ":" + std::to_string(line) + ": " + message);
}

std::string KeyValueConfig::get_string(const std::string& key) const { return require(key).value; }

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
    const Entry* e = find(key);
    return e ? e->value : fallback;
}

std::int64_t KeyValueConfig::get_int(const std::string& key) const {
    const Entry& e = require(key);
    try {
        std::size_t pos = 0;
        const std::int64_t v = std::stoll(e.value, &pos);
        if (pos != e.value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        fail(key, "expected integer for '" + key + "', got '" + e.value + "'");
    }
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) const {
    return find(key) ? get_int(key) : fallback;
}

std::uint64_t KeyValueConfig::get_uint(const std::string& key) const {
    const Entry& e = require(key);
    try {
        std::size_t pos = 0;
        const std::uint64_t v = std::stoull(e.value, &pos);
        if (pos != e.value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        fail(key, "expected unsigned integer for '" + key + "', got '" + e.value + "'");
    }
}

std::uint64_t KeyValueConfig::get_uint(const std::string& key, std::uint64_t fallback) const {
    return find(key) ? get_uint(key) : fallback;
}

double KeyValueConfig::get_double(const std::string& key) const {
    const Entry& e = require(key);
    try {
        std::size_t pos = 0;
        const double v = std::stod(e.value, &pos);
        if (pos != e.value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        fail(key, "expected number for '" + key + "', got '" + e.value + "'");
    }
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    return find(key) ? get_double(key) : fallback;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    const Entry* e = find(key);
    if (!e) return fallback;
    if (e->value == "true" || e->value == "1") return true;
    if (e->value == "false" || e->value == "0") return false;
    fail(key, "expected true/false for '" + key + "', got '" + e->value + "'");
}

std::vector<std::size_t> KeyValueConfig::get_size_list(const std::string& key) const {
    const Entry& e = require(key);
    std::vector<std::size_t> out;
    std::istringstream ss(e.value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(static_cast<std::size_t>(std::stoull(trim(item))));
        } catch (const std::exception&) {
            fail(key, "expected comma-separated sizes for '" + key + "', got '" + e.value + "'");
        }
    }
    if (out.empty()) fail(key, "empty list for '" + key + "'");
    return out;
}

std::vector<double> KeyValueConfig::get_double_list(const std::string& key) const {
    const Entry& e = require(key);
    std::vector<double> out;
    std::istringstream ss(e.value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stod(trim(item)));
        } catch (const std::exception&) {
            fail(key, "expected comma-separated numbers for '" + key + "', got '" + e.value + "'");
        }
    }
    if (out.empty()) fail(key, "empty list for '" + key + "'");
    return out;
}

void KeyValueConfig::reject_unknown_keys() const {
    for (const auto& [key, e] : entries_)
        if (!e.used)
            throw ConfigError(name_ + ":" + std::to_string(e.line) + ": unknown key '" + key + "'");
}

}  // namespace dd

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dd/errors.hpp"

namespace dd {

// Flat key = value config with dotted section prefixes, '#' comments and
// blank lines. Errors carry "file:line:" anchors. Typed getters track which
// keys were read so a run can reject unknown (usually misspelled) keys.
class KeyValueConfig {
public:
    static KeyValueConfig parse_file(const std::string& path);
    static KeyValueConfig parse_string(const std::string& text, const std::string& name = "<string>");

    bool has(const std::string& key) const;

    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::int64_t get_int(const std::string& key) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    std::uint64_t get_uint(const std::string& key) const;
    std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::size_t> get_size_list(const std::string& key) const;  // comma separated
    std::vector<double> get_double_list(const std::string& key) const;

    // Throws ConfigError naming the first key that was never read.
    void reject_unknown_keys() const;

    [[noreturn]] void fail(const std::string& key, const std::string& message) const;

private:
    struct Entry {
        std::string value;
        int line = 0;
        mutable bool used = false;
    };
    std::string name_;
    std::map<std::string, Entry> entries_;

    const Entry* find(const std::string& key) const;
    const Entry& require(const std::string& key) const;
};

}  // namespace dd

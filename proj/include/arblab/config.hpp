#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "arblab/csv.hpp"

namespace arblab {

/// Line-based experiment configuration.
///
/// Syntax:
///   # comment
///   [section]
///   key = value
///   list = [a, b, c]
///   map  = {1: path/one, 2: path/two}
///
/// Keys inside a [section] are addressed as "section.key". Dotted keys
/// outside any section are also accepted verbatim.
class Config {
  public:
    Config() = default;

    static Config parse_string(const std::string& text, const std::string& origin = "<string>") {
        Config cfg;
        std::istringstream in(text);
        std::string line, section;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') {
                    throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                             ": unterminated section header");
                }
                section = trim(line.substr(1, line.size() - 2));
                continue;
            }
            auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                         ": expected 'key = value'");
            }
            std::string key = trim(line.substr(0, eq));
            std::string value = trim(line.substr(eq + 1));
            if (key.empty()) {
                throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": empty key");
            }
            if (!section.empty()) key = section + "." + key;
            cfg.kv_[key] = value;
        }
        return cfg;
    }

    static Config parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) {
            throw std::runtime_error("cannot open config '" + path + "'");
        }
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse_string(ss.str(), path);
    }

    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    void set(const std::string& key, const std::string& value) { kv_[key] = value; }

    std::string get_string(const std::string& key) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) {
            throw std::runtime_error("missing config key '" + key + "'");
        }
        return it->second;
    }

    std::string get_string(const std::string& key, const std::string& def) const {
        auto it = kv_.find(key);
        return it == kv_.end() ? def : it->second;
    }

    double get_double(const std::string& key) const { return to_double(key, get_string(key)); }
    double get_double(const std::string& key, double def) const {
        return has(key) ? get_double(key) : def;
    }

    std::int64_t get_int(const std::string& key) const {
        const std::string raw = get_string(key);
        try {
            return parse_int(raw);
        } catch (const std::exception&) {
            throw std::runtime_error("config key '" + key + "': not an integer: '" + raw + "'");
        }
    }
    std::int64_t get_int(const std::string& key, std::int64_t def) const {
        return has(key) ? get_int(key) : def;
    }

    bool get_bool(const std::string& key) const {
        const std::string raw = get_string(key);
        if (raw == "true" || raw == "1" || raw == "yes" || raw == "on") return true;
        if (raw == "false" || raw == "0" || raw == "no" || raw == "off") return false;
        throw std::runtime_error("config key '" + key + "': not a boolean: '" + raw + "'");
    }
    bool get_bool(const std::string& key, bool def) const {
        return has(key) ? get_bool(key) : def;
    }

    std::vector<std::string> get_list(const std::string& key) const {
        return parse_bracketed(key, get_string(key), '[', ']');
    }
    std::vector<std::string> get_list(const std::string& key,
                                      const std::vector<std::string>& def) const {
        return has(key) ? get_list(key) : def;
    }

    std::vector<double> get_double_list(const std::string& key) const {
        std::vector<double> out;
        for (const auto& item : get_list(key)) out.push_back(to_double(key, item));
        return out;
    }
    std::vector<double> get_double_list(const std::string& key,
                                        const std::vector<double>& def) const {
        return has(key) ? get_double_list(key) : def;
    }

    std::vector<std::int64_t> get_int_list(const std::string& key) const {
        std::vector<std::int64_t> out;
        for (const auto& item : get_list(key)) {
            try {
                out.push_back(parse_int(item));
            } catch (const std::exception&) {
                throw std::runtime_error("config key '" + key + "': not an integer: '" + item +
                                         "'");
            }
        }
        return out;
    }
    std::vector<std::int64_t> get_int_list(const std::string& key,
                                           const std::vector<std::int64_t>& def) const {
        return has(key) ? get_int_list(key) : def;
    }

    /// Parses "{k: v, k2: v2}" preserving entry order.
    std::vector<std::pair<std::string, std::string>> get_map(const std::string& key) const {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& item : parse_bracketed(key, get_string(key), '{', '}')) {
            auto colon = item.find(':');
            if (colon == std::string::npos) {
                throw std::runtime_error("config key '" + key + "': expected 'k: v' in '" + item +
                                         "'");
            }
            out.emplace_back(trim(item.substr(0, colon)), trim(item.substr(colon + 1)));
        }
        return out;
    }

    const std::map<std::string, std::string>& entries() const { return kv_; }

    /// Canonical "key=value" serialization, sorted by key.
    std::string canonical_string() const {
        std::string out;
        for (const auto& [k, v] : kv_) {
            out += k;
            out += '=';
            out += v;
            out += '\n';
        }
        return out;
    }

    /// FNV-1a hash of the canonical serialization, as 16 hex digits.
    std::string spec_hash() const {
        std::uint64_t h = 1469598103934665603ull;
        for (unsigned char c : canonical_string()) {
            h ^= c;
            h *= 1099511628211ull;
        }
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }

  private:
    static double to_double(const std::string& key, const std::string& raw) {
        try {
            return parse_double(raw);
        } catch (const std::exception&) {
            throw std::runtime_error("config key '" + key + "': not a number: '" + raw + "'");
        }
    }

    static std::vector<std::string> parse_bracketed(const std::string& key, const std::string& raw,
                                                    char open, char close) {
        std::string body = trim(raw);
        if (body.size() < 2 || body.front() != open || body.back() != close) {
            throw std::runtime_error("config key '" + key + "': expected " + open + "..." + close +
                                     ", got '" + raw + "'");
        }
        body = trim(body.substr(1, body.size() - 2));
        std::vector<std::string> out;
        if (body.empty()) return out;
        for (const auto& piece : split_fields(body)) out.push_back(piece);
        return out;
    }

    std::map<std::string, std::string> kv_;
};

}  // namespace arblab

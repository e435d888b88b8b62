#include "common/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "common/error.hpp"

namespace common {

static std::string trim(const std::string & s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

void Config::load_file(const std::string & path) {
    std::ifstream in(path);
    MVLM_CHECK(in.good(), "config: cannot open '%s'", path.c_str());
    std::stringstream ss;
    ss << in.rdbuf();
    Config parsed = parse(ss.str());
    for (const auto & [k, v] : parsed.kv_) kv_[k] = v;
}

Config Config::parse(const std::string & text) {
    Config c;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        lineno++;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        MVLM_CHECK(eq != std::string::npos, "config: line %d has no '=': '%s'", lineno, line.c_str());
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        MVLM_CHECK(!key.empty(), "config: line %d has empty key", lineno);
        c.kv_[key] = val;
    }
    return c;
}

void Config::set(const std::string & key, const std::string & value) { kv_[key] = value; }

bool Config::has(const std::string & key) const { return kv_.count(key) != 0; }

std::string Config::get_str(const std::string & key, const std::string & def) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? def : it->second;
}

double Config::get_f64(const std::string & key, double def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    char * end = nullptr;
    double v = strtod(it->second.c_str(), &end);
    MVLM_CHECK(end && *end == '\0', "config: key '%s' is not a number: '%s'", key.c_str(), it->second.c_str());
    return v;
}

int Config::get_int(const std::string & key, int def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    char * end = nullptr;
    long v = strtol(it->second.c_str(), &end, 10);
    MVLM_CHECK(end && *end == '\0', "config: key '%s' is not an integer: '%s'", key.c_str(), it->second.c_str());
    return (int) v;
}

bool Config::get_bool(const std::string & key, bool def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    const std::string & v = it->second;
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail(format("config: key '%s' is not a boolean: '%s'", key.c_str(), v.c_str()));
}

std::string Config::dump() const {
    std::string out;
    for (const auto & [k, v] : kv_) {
        out += k;
        out += " = ";
        out += v;
        out += "\n";
    }
    return out;
}

}  // namespace common

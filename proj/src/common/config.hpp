#pragma once

#include <map>
#include <string>
#include <vector>

namespace common {

// Layered key-value configuration. Files hold one `key = value` pair per
// line, `#` starts a comment. Later assignments (including overrides passed
// on the command line) win.
class Config {
public:
    Config() = default;

    void load_file(const std::string & path);
    void set(const std::string & key, const std::string & value);
    bool has(const std::string & key) const;

    std::string get_str(const std::string & key, const std::string & def) const;
    double      get_f64(const std::string & key, double def) const;
    int         get_int(const std::string & key, int def) const;
    bool        get_bool(const std::string & key, bool def) const;

    const std::map<std::string, std::string> & entries() const { return kv_; }
    std::string dump() const;
    static Config parse(const std::string & text);

private:
    std::map<std::string, std::string> kv_;
};

}  // namespace common

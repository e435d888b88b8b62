#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

namespace tv {

// plain-text bank: `[task <tag>]` headers, one template per line;
// placeholders: <class> <regions> <caption>
struct TemplateBank {
    std::map<std::string, std::vector<std::string>> by_task;

    const std::vector<std::string> & task(const std::string & tag) const;
    size_t pick(const std::string & tag, std::mt19937_64 & rng) const;

    void save(const std::string & path) const;
    static TemplateBank load(const std::string & path);
    static TemplateBank standard();
};

}  // namespace tv

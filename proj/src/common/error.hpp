#pragma once

#include <cstdarg>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace common {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string & msg) : std::runtime_error(msg) {}
};

inline std::string format(const char * fmt, ...) {
    va_list ap;
    va_start(ap, fmt);
    char buf[1024];
    vsnprintf(buf, sizeof(buf), fmt, ap);
    va_end(ap);
    return std::string(buf);
}

[[noreturn]] inline void fail(const std::string & msg) {
    throw Error(msg);
}

template <typename... Args>
[[noreturn]] inline void fail(const char * fmt, Args... args) {
    throw Error(format(fmt, args...));
}

#define MVLM_CHECK(cond, ...) \
    do { if (!(cond)) ::common::fail(::common::format(__VA_ARGS__)); } while (0)

}  // namespace common

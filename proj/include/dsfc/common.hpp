#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace dsfc {

class value_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class runtime_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {
inline void format_into(std::ostringstream&) {}
template <typename T, typename... Rest>
void format_into(std::ostringstream& os, const T& v, const Rest&... rest) {
    os << v;
    format_into(os, rest...);
}
} // namespace detail

template <typename... Args>
std::string format_msg(const Args&... args) {
    std::ostringstream os;
    detail::format_into(os, args...);
    return os.str();
}

} // namespace dsfc

#define DSFC_CHECK(cond, ...)                                                  \
    do {                                                                       \
        if (!(cond)) throw ::dsfc::value_error(::dsfc::format_msg(__VA_ARGS__)); \
    } while (0)

#define DSFC_REQUIRE(cond, ...)                                                 \
    do {                                                                        \
        if (!(cond)) throw ::dsfc::runtime_error(::dsfc::format_msg(__VA_ARGS__)); \
    } while (0)

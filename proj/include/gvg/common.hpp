#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gvg {

inline constexpr std::string_view kVersion = "0.1.0";

// Bad input data or configuration; the CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Broken internal invariant; the CLI maps this to exit code 3.
class InternalError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw ValidationError(msg);
}

inline void check_internal(bool cond, const std::string& msg) {
    if (!cond) throw InternalError(msg);
}

// Shortest round-trip decimal form, locale-free. Used for every number that
// lands in an output file so reruns are byte-identical.
inline std::string format_double(double v) {
    std::array<char, 40> buf;
    auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

inline std::string format_int(long long v) {
    std::array<char, 24> buf;
    auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

// FNV-1a over the resolved-config text; printed as the provenance digest.
inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

} // namespace gvg

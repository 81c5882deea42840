#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "gvg/common.hpp"

namespace gvg::binio {

// Little-endian primitives for checkpoint files.

inline void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline void write_f64(std::ostream& os, double v) {
    write_u64(os, std::bit_cast<std::uint64_t>(v));
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    check(static_cast<bool>(is), std::string("truncated checkpoint reading ") + what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline std::uint64_t read_u64(std::istream& is, const char* what) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    check(static_cast<bool>(is), std::string("truncated checkpoint reading ") + what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline double read_f64(std::istream& is, const char* what) {
    return std::bit_cast<double>(read_u64(is, what));
}

inline void write_magic(std::ostream& os, std::string_view magic) {
    os.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void expect_magic(std::istream& is, std::string_view magic, const char* what) {
    std::string got(magic.size(), '\0');
    is.read(got.data(), static_cast<std::streamsize>(magic.size()));
    check(static_cast<bool>(is) && got == magic,
          std::string(what) + ": bad or missing magic header");
}

} // namespace gvg::binio

#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace usid::bin {

// Little-endian primitives, written byte by byte so files are identical on
// any host.

inline void put_bytes(std::ostream& os, const void* p, size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void put_u8(std::ostream& os, uint8_t v) { put_bytes(os, &v, 1); }
inline void put_i8(std::ostream& os, int8_t v) { put_bytes(os, &v, 1); }

inline void put_u16(std::ostream& os, uint16_t v) {
    uint8_t b[2] = {uint8_t(v & 0xff), uint8_t(v >> 8)};
    put_bytes(os, b, 2);
}

inline void put_u32(std::ostream& os, uint32_t v) {
    uint8_t b[4];
    for (int i = 0; i < 4; ++i) b[i] = uint8_t(v >> (8 * i));
    put_bytes(os, b, 4);
}

inline void put_u64(std::ostream& os, uint64_t v) {
    uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = uint8_t(v >> (8 * i));
    put_bytes(os, b, 8);
}

inline void put_f32(std::ostream& os, float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(os, u);
}

inline void put_f64(std::ostream& os, double v) {
    uint64_t u;
    std::memcpy(&u, &v, 8);
    put_u64(os, u);
}

inline void get_bytes(std::istream& is, void* p, size_t n, const char* what) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(is.gcount()) != n)
        throw std::runtime_error(std::string("binary read: truncated while reading ") + what);
}

inline uint8_t get_u8(std::istream& is, const char* what = "u8") {
    uint8_t v;
    get_bytes(is, &v, 1, what);
    return v;
}

inline int8_t get_i8(std::istream& is, const char* what = "i8") {
    return static_cast<int8_t>(get_u8(is, what));
}

inline uint16_t get_u16(std::istream& is, const char* what = "u16") {
    uint8_t b[2];
    get_bytes(is, b, 2, what);
    return uint16_t(b[0] | (uint16_t(b[1]) << 8));
}

inline uint32_t get_u32(std::istream& is, const char* what = "u32") {
    uint8_t b[4];
    get_bytes(is, b, 4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(b[i]) << (8 * i);
    return v;
}

inline uint64_t get_u64(std::istream& is, const char* what = "u64") {
    uint8_t b[8];
    get_bytes(is, b, 8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
    return v;
}

inline float get_f32(std::istream& is, const char* what = "f32") {
    uint32_t u = get_u32(is, what);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

inline double get_f64(std::istream& is, const char* what = "f64") {
    uint64_t u = get_u64(is, what);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

} // namespace usid::bin

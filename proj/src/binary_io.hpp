#pragma once

// Little-endian primitives shared by the dataset and checkpoint containers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>

#include "hignn/error.hpp"

namespace hignn::io {

static_assert(std::endian::native == std::endian::little, "containers are written in host order");

template <class T>
void put(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

inline void put_doubles(std::ostream& out, std::span<const double> values) {
    out.write(reinterpret_cast<const char*>(values.data()), std::streamsize(values.size_bytes()));
}

/// Returns false on a short read.
template <class T>
bool get(std::istream& in, T& value) {
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    return bool(in);
}

inline bool get_doubles(std::istream& in, std::span<double> values) {
    in.read(reinterpret_cast<char*>(values.data()), std::streamsize(values.size_bytes()));
    return bool(in);
}

inline void put_magic(std::ostream& out, const char (&magic)[5]) { out.write(magic, 4); }

inline void expect_magic(std::istream& in, const char (&magic)[5], const std::string& what) {
    char got[4] = {};
    in.read(got, 4);
    if (!in || std::memcmp(got, magic, 4) != 0) throw IoError(what + ": bad magic bytes");
}

inline std::string get_block(std::istream& in, const std::string& what) {
    std::uint64_t len = 0;
    if (!get(in, len) || len > (1ULL << 32)) throw IoError(what + ": corrupt header length");
    std::string text(len, '\0');
    in.read(text.data(), std::streamsize(len));
    if (!in) throw IoError(what + ": truncated header");
    return text;
}

inline void put_block(std::ostream& out, const std::string& text) {
    put<std::uint64_t>(out, text.size());
    out.write(text.data(), std::streamsize(text.size()));
}

} // namespace hignn::io

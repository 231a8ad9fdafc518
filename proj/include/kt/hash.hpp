#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "kt/error.hpp"

namespace kt {

constexpr uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr uint64_t kFnvPrime = 0x100000001b3ULL;

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = kFnvOffset) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t h = kFnvOffset) {
    return fnv1a64(s.data(), s.size(), h);
}

inline uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open file for hashing: " + path);
    uint64_t h = kFnvOffset;
    char buf[1 << 16];
    while (f) {
        f.read(buf, sizeof(buf));
        h = fnv1a64(buf, static_cast<size_t>(f.gcount()), h);
    }
    return h;
}

inline std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

}  // namespace kt

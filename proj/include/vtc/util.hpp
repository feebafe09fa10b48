#pragma once

#include <cstdint>
#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace vtc {

// Builds an error message from stream-able pieces.
template <typename... Parts>
std::string cat(const Parts&... parts) {
    std::ostringstream os;
    (os << ... << parts);
    return os.str();
}

template <typename... Parts>
[[noreturn]] void fail(const Parts&... parts) {
    throw std::runtime_error(cat(parts...));
}

// FNV-1a over a byte range. Used for parameter/config identity checks, not security.
inline uint64_t fnv1a(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a(const std::string& s, uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a(s.data(), s.size(), h);
}

inline std::string hex64(uint64_t v) {
    char buf[17];
    snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

// Round a double through IEEE binary32. Single-precision training keeps every
// parameter on this grid so float32 checkpoints round-trip exactly.
inline double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

std::string read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace vtc

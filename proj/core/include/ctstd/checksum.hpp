#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

namespace ctstd {

/// Streaming CRC-32 (IEEE, poly 0xEDB88320).
class Crc32 {
public:
    Crc32() = default;

    void update(const void* data, size_t n) {
        const auto* p = static_cast<const uint8_t*>(data);
        uint32_t c = state_;
        for (size_t i = 0; i < n; ++i) {
            c ^= p[i];
            for (int k = 0; k < 8; ++k)
                c = (c >> 1) ^ (0xEDB88320u & (~(c & 1u) + 1u));
        }
        state_ = c;
    }

    void update(std::span<const uint8_t> bytes) { update(bytes.data(), bytes.size()); }

    uint32_t value() const { return state_ ^ 0xFFFFFFFFu; }

private:
    uint32_t state_ = 0xFFFFFFFFu;
};

inline uint32_t crc32_bytes(const void* data, size_t n) {
    Crc32 c;
    c.update(data, n);
    return c.value();
}

/// FNV-1a 64-bit, used for config hashes.
inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 1469598103934665603ull;
    for (char c : s) {
        h ^= static_cast<uint8_t>(c);
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string to_hex(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = digits[v & 0xF];
        v >>= 4;
    }
    return s;
}

}  // namespace ctstd

#ifndef ANONLAB_BYTES_HPP
#define ANONLAB_BYTES_HPP

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace anonlab {

using Bytes = std::vector<uint8_t>;

inline Bytes to_bytes(std::string_view s) {
    return Bytes(s.begin(), s.end());
}

inline std::string to_string(const Bytes& b) {
    return std::string(b.begin(), b.end());
}

inline void xor_into(std::span<uint8_t> dst, std::span<const uint8_t> src) {
    if (dst.size() != src.size())
        throw std::invalid_argument("xor_into: length mismatch");
    for (size_t i = 0; i < dst.size(); ++i) dst[i] ^= src[i];
}

inline Bytes xored(Bytes a, std::span<const uint8_t> b) {
    xor_into(a, b);
    return a;
}

std::string to_hex(std::span<const uint8_t> b);
Bytes from_hex(std::string_view hex);

// Little-endian u64 append, used for domain separation tags.
inline void append_u64(Bytes& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(uint8_t(v >> (8 * i)));
}

} // namespace anonlab

#endif

#pragma once

#include <charconv>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace moserflow {

// Shortest decimal representation that round-trips the exact double.
inline std::string format_double(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last)
        throw std::invalid_argument("parse_double: bad number '" + std::string(s) + "'");
    return v;
}

inline std::int64_t parse_int(std::string_view s) {
    std::int64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw std::invalid_argument("parse_int: bad integer '" + std::string(s) + "'");
    return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.push_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

inline std::string_view trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return s.substr(b, e - b);
}

// --- base64 of raw little-endian doubles (checkpoint weight blobs) ---------

namespace detail {
inline constexpr char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline int b64_value(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
}
}  // namespace detail

inline std::string base64_encode(std::span<const unsigned char> data) {
    std::string out;
    out.reserve((data.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= data.size(); i += 3) {
        const unsigned v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
        out += detail::kB64Alphabet[(v >> 18) & 63];
        out += detail::kB64Alphabet[(v >> 12) & 63];
        out += detail::kB64Alphabet[(v >> 6) & 63];
        out += detail::kB64Alphabet[v & 63];
    }
    const std::size_t rem = data.size() - i;
    if (rem == 1) {
        const unsigned v = data[i] << 16;
        out += detail::kB64Alphabet[(v >> 18) & 63];
        out += detail::kB64Alphabet[(v >> 12) & 63];
        out += "==";
    } else if (rem == 2) {
        const unsigned v = (data[i] << 16) | (data[i + 1] << 8);
        out += detail::kB64Alphabet[(v >> 18) & 63];
        out += detail::kB64Alphabet[(v >> 12) & 63];
        out += detail::kB64Alphabet[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

inline std::vector<unsigned char> base64_decode(std::string_view s) {
    std::vector<unsigned char> out;
    out.reserve(s.size() / 4 * 3);
    unsigned acc = 0;
    int bits = 0;
    for (char c : s) {
        if (c == '=' || c == '\n' || c == '\r') continue;
        const int v = detail::b64_value(c);
        if (v < 0) throw std::invalid_argument("base64_decode: invalid character");
        acc = (acc << 6) | static_cast<unsigned>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<unsigned char>((acc >> bits) & 0xFF));
        }
    }
    return out;
}

// Doubles are serialized little-endian regardless of host order.
inline std::string doubles_to_base64(std::span<const double> v) {
    std::vector<unsigned char> bytes(v.size() * 8);
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::uint64_t u;
        std::memcpy(&u, &v[i], 8);
        for (int b = 0; b < 8; ++b)
            bytes[i * 8 + b] = static_cast<unsigned char>((u >> (8 * b)) & 0xFF);
    }
    return base64_encode(bytes);
}

inline std::vector<double> base64_to_doubles(std::string_view s) {
    const std::vector<unsigned char> bytes = base64_decode(s);
    if (bytes.size() % 8 != 0)
        throw std::invalid_argument("base64_to_doubles: payload not a multiple of 8 bytes");
    std::vector<double> out(bytes.size() / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t u = 0;
        for (int b = 7; b >= 0; --b) u = (u << 8) | bytes[i * 8 + b];
        std::memcpy(&out[i], &u, 8);
    }
    return out;
}

}  // namespace moserflow

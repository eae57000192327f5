#pragma once

// Minimal UTF-8 transcoding. Text operations in this library (tail trimming,
// sentence-final checks, prefix dedup) are defined over Unicode code points,
// so byte strings are decoded up front and re-encoded after.
//
// Invalid bytes survive a decode/encode round trip unchanged: each offending
// byte b maps to the sentinel code point 0xDC00 + b. Encoded surrogates and
// overlongs are themselves invalid UTF-8, so sentinels never collide with
// legitimately decoded text.

#include <cstdint>
#include <string>
#include <vector>

namespace markaudit {

inline bool is_sentinel(char32_t c) { return c >= 0xDC80 && c <= 0xDCFF; }

inline std::vector<char32_t> decode_utf8(const std::string& s) {
    std::vector<char32_t> out;
    out.reserve(s.size());
    const unsigned char* p = reinterpret_cast<const unsigned char*>(s.data());
    const std::size_t n = s.size();
    std::size_t i = 0;
    auto bad = [&](std::size_t at) { out.push_back(0xDC00 + p[at]); };
    while (i < n) {
        const unsigned char b = p[i];
        if (b < 0x80) {
            out.push_back(b);
            i += 1;
        } else if ((b & 0xE0) == 0xC0) {
            if (i + 1 < n && (p[i + 1] & 0xC0) == 0x80) {
                const char32_t c = ((b & 0x1Fu) << 6) | (p[i + 1] & 0x3Fu);
                if (c >= 0x80) {
                    out.push_back(c);
                    i += 2;
                    continue;
                }
            }
            bad(i++);
        } else if ((b & 0xF0) == 0xE0) {
            if (i + 2 < n && (p[i + 1] & 0xC0) == 0x80 && (p[i + 2] & 0xC0) == 0x80) {
                const char32_t c = ((b & 0x0Fu) << 12) | ((p[i + 1] & 0x3Fu) << 6) |
                                   (p[i + 2] & 0x3Fu);
                if (c >= 0x800 && !(c >= 0xD800 && c <= 0xDFFF)) {
                    out.push_back(c);
                    i += 3;
                    continue;
                }
            }
            bad(i++);
        } else if ((b & 0xF8) == 0xF0) {
            if (i + 3 < n && (p[i + 1] & 0xC0) == 0x80 && (p[i + 2] & 0xC0) == 0x80 &&
                (p[i + 3] & 0xC0) == 0x80) {
                const char32_t c = ((b & 0x07u) << 18) | ((p[i + 1] & 0x3Fu) << 12) |
                                   ((p[i + 2] & 0x3Fu) << 6) | (p[i + 3] & 0x3Fu);
                if (c >= 0x10000 && c <= 0x10FFFF) {
                    out.push_back(c);
                    i += 4;
                    continue;
                }
            }
            bad(i++);
        } else {
            bad(i++);
        }
    }
    return out;
}

inline void append_utf8(std::string& s, char32_t c) {
    if (is_sentinel(c)) {
        s.push_back(static_cast<char>(c & 0xFF));
    } else if (c < 0x80) {
        s.push_back(static_cast<char>(c));
    } else if (c < 0x800) {
        s.push_back(static_cast<char>(0xC0 | (c >> 6)));
        s.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else if (c < 0x10000) {
        s.push_back(static_cast<char>(0xE0 | (c >> 12)));
        s.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
        s.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else {
        s.push_back(static_cast<char>(0xF0 | (c >> 18)));
        s.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
        s.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
        s.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    }
}

inline std::string encode_utf8(const std::vector<char32_t>& cps) {
    std::string s;
    s.reserve(cps.size());
    for (const char32_t c : cps) append_utf8(s, c);
    return s;
}

/// ASCII whitespace; the normalization scope used by the cleaners.
inline bool is_ascii_space(char32_t c) {
    return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' ||
           c == U'\v';
}

/// Code-point count of a UTF-8 string (invalid bytes count one each).
inline std::size_t utf8_length(const std::string& s) {
    return decode_utf8(s).size();
}

}  // namespace markaudit

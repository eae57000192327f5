#pragma once

// Self-contained SHA-256 and HMAC-SHA-256.
//
// The keyed vocabulary permutation and the keyed-hash subset rule both demand
// bit-exact digests on every platform, and the audit path evaluates MACs by
// the tens of millions on a single core. Carrying the implementation here
// keeps the digests independent of the system crypto library and lets HMAC
// reuse precomputed ipad/opad midstates, which turns one short-message MAC
// into exactly two compression calls.
//
// Verified in the test suite against the FIPS 180-2 / RFC 4231 vectors and
// cross-checked against OpenSSL.

#include <array>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace markaudit {

namespace sha_detail {

inline std::uint32_t rotr(std::uint32_t x, int n) {
    return (x >> n) | (x << (32 - n));
}

// First 32 bits of the fractional parts of the cube roots of the first 64
// primes, per the standard.
inline constexpr std::uint32_t kRoundConst[64] = {
    0x428a2f98u, 0x71374491u, 0xb5c0fbcfu, 0xe9b5dba5u, 0x3956c25bu, 0x59f111f1u,
    0x923f82a4u, 0xab1c5ed5u, 0xd807aa98u, 0x12835b01u, 0x243185beu, 0x550c7dc3u,
    0x72be5d74u, 0x80deb1feu, 0x9bdc06a7u, 0xc19bf174u, 0xe49b69c1u, 0xefbe4786u,
    0x0fc19dc6u, 0x240ca1ccu, 0x2de92c6fu, 0x4a7484aau, 0x5cb0a9dcu, 0x76f988dau,
    0x983e5152u, 0xa831c66du, 0xb00327c8u, 0xbf597fc7u, 0xc6e00bf3u, 0xd5a79147u,
    0x06ca6351u, 0x14292967u, 0x27b70a85u, 0x2e1b2138u, 0x4d2c6dfcu, 0x53380d13u,
    0x650a7354u, 0x766a0abbu, 0x81c2c92eu, 0x92722c85u, 0xa2bfe8a1u, 0xa81a664bu,
    0xc24b8b70u, 0xc76c51a3u, 0xd192e819u, 0xd6990624u, 0xf40e3585u, 0x106aa070u,
    0x19a4c116u, 0x1e376c08u, 0x2748774cu, 0x34b0bcb5u, 0x391c0cb3u, 0x4ed8aa4au,
    0x5b9cca4fu, 0x682e6ff3u, 0x748f82eeu, 0x78a5636fu, 0x84c87814u, 0x8cc70208u,
    0x90befffau, 0xa4506cebu, 0xbef9a3f7u, 0xc67178f2u};

}  // namespace sha_detail

// =============================================================================
// SHA-256
// =============================================================================

struct Sha256 {
    std::uint32_t state[8];
    std::uint64_t total_bytes;
    unsigned char buf[64];
    std::size_t buf_len;

    Sha256() { init(); }

    void init() {
        static constexpr std::uint32_t kInit[8] = {
            0x6a09e667u, 0xbb67ae85u, 0x3c6ef372u, 0xa54ff53au,
            0x510e527fu, 0x9b05688cu, 0x1f83d9abu, 0x5be0cd19u};
        std::memcpy(state, kInit, sizeof state);
        total_bytes = 0;
        buf_len = 0;
    }

    static void compress(std::uint32_t s[8], const unsigned char block[64]) {
        using namespace sha_detail;
        std::uint32_t w[64];
        for (int i = 0; i < 16; ++i) {
            w[i] = (std::uint32_t{block[4 * i]} << 24) |
                   (std::uint32_t{block[4 * i + 1]} << 16) |
                   (std::uint32_t{block[4 * i + 2]} << 8) |
                   std::uint32_t{block[4 * i + 3]};
        }
        for (int i = 16; i < 64; ++i) {
            const std::uint32_t s0 =
                rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
            const std::uint32_t s1 =
                rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
            w[i] = w[i - 16] + s0 + w[i - 7] + s1;
        }
        std::uint32_t a = s[0], b = s[1], c = s[2], d = s[3];
        std::uint32_t e = s[4], f = s[5], g = s[6], h = s[7];
        for (int i = 0; i < 64; ++i) {
            const std::uint32_t S1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
            const std::uint32_t ch = (e & f) ^ (~e & g);
            const std::uint32_t t1 = h + S1 + ch + kRoundConst[i] + w[i];
            const std::uint32_t S0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
            const std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
            const std::uint32_t t2 = S0 + maj;
            h = g;
            g = f;
            f = e;
            e = d + t1;
            d = c;
            c = b;
            b = a;
            a = t1 + t2;
        }
        s[0] += a;
        s[1] += b;
        s[2] += c;
        s[3] += d;
        s[4] += e;
        s[5] += f;
        s[6] += g;
        s[7] += h;
    }

    void update(const void* data, std::size_t len) {
        const unsigned char* p = static_cast<const unsigned char*>(data);
        total_bytes += len;
        if (buf_len > 0) {
            const std::size_t need = 64 - buf_len;
            const std::size_t take = len < need ? len : need;
            std::memcpy(buf + buf_len, p, take);
            buf_len += take;
            p += take;
            len -= take;
            if (buf_len == 64) {
                compress(state, buf);
                buf_len = 0;
            }
        }
        while (len >= 64) {
            compress(state, p);
            p += 64;
            len -= 64;
        }
        if (len > 0) {
            std::memcpy(buf, p, len);
            buf_len = len;
        }
    }

    void final(unsigned char out[32]) {
        const std::uint64_t bit_len = total_bytes * 8;
        // 0x80 terminator, zero fill to 56 mod 64, then the big-endian bit
        // length; one or two closing blocks depending on the residue.
        unsigned char tail[128] = {0};
        std::memcpy(tail, buf, buf_len);
        tail[buf_len] = 0x80;
        const std::size_t total = (buf_len + 1 <= 56) ? 64 : 128;
        for (int i = 0; i < 8; ++i) {
            tail[total - 8 + i] = static_cast<unsigned char>(bit_len >> (56 - 8 * i));
        }
        compress(state, tail);
        if (total == 128) compress(state, tail + 64);
        buf_len = 0;
        for (int i = 0; i < 8; ++i) {
            out[4 * i] = static_cast<unsigned char>(state[i] >> 24);
            out[4 * i + 1] = static_cast<unsigned char>(state[i] >> 16);
            out[4 * i + 2] = static_cast<unsigned char>(state[i] >> 8);
            out[4 * i + 3] = static_cast<unsigned char>(state[i]);
        }
    }
};

inline std::array<unsigned char, 32> sha256(const void* data, std::size_t len) {
    Sha256 h;
    h.update(data, len);
    std::array<unsigned char, 32> out;
    h.final(out.data());
    return out;
}

// =============================================================================
// HMAC-SHA-256 with reusable key midstates
// =============================================================================

/**
 * Keyed MAC context. Construction absorbs the key into the ipad and opad
 * midstates once; each mac() call then costs two compressions for messages
 * up to 55 bytes, independent of key length.
 */
struct HmacSha256 {
    Sha256 inner0;  // state after the (key ^ ipad) block
    Sha256 outer0;  // state after the (key ^ opad) block

    explicit HmacSha256(const void* key, std::size_t key_len) {
        unsigned char k[64] = {0};
        if (key_len > 64) {
            const auto digest = sha256(key, key_len);
            std::memcpy(k, digest.data(), 32);
        } else {
            std::memcpy(k, key, key_len);
        }
        unsigned char pad[64];
        for (int i = 0; i < 64; ++i) pad[i] = static_cast<unsigned char>(k[i] ^ 0x36);
        inner0.update(pad, 64);
        for (int i = 0; i < 64; ++i) pad[i] = static_cast<unsigned char>(k[i] ^ 0x5c);
        outer0.update(pad, 64);
    }

    explicit HmacSha256(const std::vector<unsigned char>& key)
        : HmacSha256(key.data(), key.size()) {}

    void mac(const void* msg, std::size_t len, unsigned char out[32]) const {
        Sha256 h = inner0;
        h.update(msg, len);
        unsigned char digest[32];
        h.final(digest);
        Sha256 o = outer0;
        o.update(digest, 32);
        o.final(out);
    }

    std::array<unsigned char, 32> mac(const void* msg, std::size_t len) const {
        std::array<unsigned char, 32> out;
        mac(msg, len, out.data());
        return out;
    }
};

inline std::array<unsigned char, 32> hmac_sha256(const void* key,
                                                 std::size_t key_len,
                                                 const void* msg,
                                                 std::size_t msg_len) {
    return HmacSha256(key, key_len).mac(msg, msg_len);
}

/// Lowercase hex rendering, for logs and tests.
inline std::string to_hex(const unsigned char* data, std::size_t len) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string s;
    s.reserve(2 * len);
    for (std::size_t i = 0; i < len; ++i) {
        s.push_back(kDigits[data[i] >> 4]);
        s.push_back(kDigits[data[i] & 0xf]);
    }
    return s;
}

/// Parse hex (upper or lower case) into bytes; returns false on bad input.
inline bool from_hex(const std::string& hex, std::vector<unsigned char>& out) {
    if (hex.size() % 2 != 0) return false;
    out.clear();
    out.reserve(hex.size() / 2);
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    for (std::size_t i = 0; i < hex.size(); i += 2) {
        const int hi = nibble(hex[i]);
        const int lo = nibble(hex[i + 1]);
        if (hi < 0 || lo < 0) return false;
        out.push_back(static_cast<unsigned char>((hi << 4) | lo));
    }
    return true;
}

}  // namespace markaudit

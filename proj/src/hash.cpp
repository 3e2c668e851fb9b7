#define OPENSSL_SUPPRESS_DEPRECATED
#include "edgechain/hash.hpp"

#include <openssl/sha.h>

#include <bit>
#include <cstring>

#include "edgechain/common.hpp"

namespace edgechain {

static_assert(sizeof(SHA256_CTX) <= 128);
static_assert(std::is_trivially_copyable_v<SHA256_CTX>);

namespace {

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
}

SHA256_CTX* ctx_of(std::array<std::uint8_t, 128>& raw) {
    return reinterpret_cast<SHA256_CTX*>(raw.data());
}

}  // namespace

Hash256 Hash256::from_hex(std::string_view hex) {
    if (hex.size() != 64) {
        throw Error(ErrorCode::MalformedRecord, "hash must be 64 hex chars: '" + std::string(hex) + "'");
    }
    Hash256 h;
    for (std::size_t i = 0; i < 32; ++i) {
        int hi = hex_value(hex[2 * i]);
        int lo = hex_value(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) {
            throw Error(ErrorCode::MalformedRecord, "invalid hex digit in hash");
        }
        h.bytes[i] = static_cast<std::uint8_t>(hi * 16 + lo);
    }
    return h;
}

std::string Hash256::hex() const { return to_hex(bytes); }

bool Hash256::is_zero() const {
    for (auto b : bytes) {
        if (b != 0) return false;
    }
    return true;
}

int Hash256::leading_zero_bits() const {
    int bits = 0;
    for (auto b : bytes) {
        if (b == 0) {
            bits += 8;
            continue;
        }
        bits += std::countl_zero(b);
        break;
    }
    return bits;
}

Hash256 sha256(std::span<const std::uint8_t> data) {
    return Sha256().update(data).finish();
}

Hash256 sha256(std::string_view data) {
    return sha256(std::span(reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
}

Sha256::Sha256() { SHA256_Init(ctx_of(ctx_)); }

Sha256& Sha256::update(std::span<const std::uint8_t> data) {
    SHA256_Update(ctx_of(ctx_), data.data(), data.size());
    return *this;
}

Sha256& Sha256::update(std::string_view data) {
    SHA256_Update(ctx_of(ctx_), data.data(), data.size());
    return *this;
}

Hash256 Sha256::finish() {
    Hash256 h;
    SHA256_Final(h.bytes.data(), ctx_of(ctx_));
    return h;
}

std::string to_hex(std::span<const std::uint8_t> data) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(data.size() * 2, '0');
    for (std::size_t i = 0; i < data.size(); ++i) {
        out[2 * i] = digits[data[i] >> 4];
        out[2 * i + 1] = digits[data[i] & 0xf];
    }
    return out;
}

std::string derive_address(std::string_view seed) {
    auto h = sha256(seed);
    return "0x" + to_hex(std::span(h.bytes).first(20));
}

}  // namespace edgechain

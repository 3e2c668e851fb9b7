#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace edgechain {

/// A SHA-256 digest.
struct Hash256 {
    std::array<std::uint8_t, 32> bytes{};

    static Hash256 zero() { return {}; }
    /// Strict lowercase hex, 64 chars. Throws Error(MalformedRecord).
    static Hash256 from_hex(std::string_view hex);

    std::string hex() const;
    bool is_zero() const;
    /// Count of leading zero bits, 0..256.
    int leading_zero_bits() const;

    auto operator<=>(const Hash256&) const = default;
};

Hash256 sha256(std::span<const std::uint8_t> data);
Hash256 sha256(std::string_view data);

/// Incremental hasher. Copyable, so a common prefix can be hashed once and
/// reused for many suffixes (nonce search).
class Sha256 {
public:
    Sha256();

    Sha256& update(std::span<const std::uint8_t> data);
    Sha256& update(std::string_view data);
    Hash256 finish();

private:
    // Holds an OpenSSL SHA256_CTX, which is plain data.
    alignas(8) std::array<std::uint8_t, 128> ctx_;
};

std::string to_hex(std::span<const std::uint8_t> data);

/// "0x" + first 20 bytes of sha256(seed), lowercase hex.
std::string derive_address(std::string_view seed);

}  // namespace edgechain

#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace edgechain {

using Address = std::string;
using Timeslot = std::int64_t;

enum class ErrorCode {
    Config,
    Authorization,
    UnknownSender,
    DuplicateTransaction,
    UnknownContract,
    UnknownFunction,
    NotWhitelisted,
    GenesisMismatch,
    Infeasible,
    Duplicate,
    Consistency,
    UnknownDevice,
    Blocked,
    MalformedRecord,
    Io,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Who is acting: the edge server owns the starred attributes and all
/// coin operations, devices act for themselves, the proxy for legacy nodes.
enum class Authority { EdgeServer, Device, Proxy };

const char* to_string(Authority a);
Authority authority_from_string(std::string_view s);

/// Fixed-point coin amount with two fractional digits.
class Coins {
public:
    constexpr Coins() = default;
    static constexpr Coins from_cents(std::int64_t cents) { return Coins(cents); }
    /// Rounds to the nearest cent, ties to even.
    static Coins from_double(double value);
    /// Parses "200.00", "17", "-3.5". Throws Error(MalformedRecord).
    static Coins parse(std::string_view text);

    constexpr std::int64_t cents() const { return cents_; }
    double to_double() const { return static_cast<double>(cents_) / 100.0; }
    std::string to_string() const;

    constexpr Coins operator+(Coins o) const { return Coins(cents_ + o.cents_); }
    constexpr Coins operator-(Coins o) const { return Coins(cents_ - o.cents_); }
    Coins& operator+=(Coins o) { cents_ += o.cents_; return *this; }
    Coins& operator-=(Coins o) { cents_ -= o.cents_; return *this; }
    constexpr auto operator<=>(const Coins&) const = default;

private:
    constexpr explicit Coins(std::int64_t c) : cents_(c) {}
    std::int64_t cents_ = 0;
};

inline constexpr std::size_t kResourceTypes = 4;
inline constexpr std::array<const char*, kResourceTypes> kResourceNames = {
    "cpu", "memory", "storage", "bandwidth"};

/// Quantities of CPU, memory, storage and bandwidth.
struct ResourceVector {
    std::array<double, kResourceTypes> v{};

    double& operator[](std::size_t j) { return v[j]; }
    double operator[](std::size_t j) const { return v[j]; }

    ResourceVector operator+(const ResourceVector& o) const;
    ResourceVector operator-(const ResourceVector& o) const;
    ResourceVector operator*(double s) const;
    bool operator==(const ResourceVector&) const = default;

    /// Componentwise this <= o.
    bool fits_within(const ResourceVector& o) const;
    bool nonnegative() const;
    std::string to_string() const;
};

/// Closed decimal interval [min, max].
struct Range {
    double min = 0;
    double max = 0;
    bool valid() const { return min >= 0 && min <= max; }
    bool operator==(const Range&) const = default;
};

/// Shortest round-trip decimal text of a double; used wherever a decimal
/// enters a hashed record so the bytes are canonical.
std::string decimal_text(double value);
double parse_decimal(std::string_view text);

}  // namespace edgechain

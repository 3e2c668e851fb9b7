#include "edgechain/common.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <sstream>

namespace edgechain {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::Config: return "config";
        case ErrorCode::Authorization: return "authorization";
        case ErrorCode::UnknownSender: return "unknown-sender";
        case ErrorCode::DuplicateTransaction: return "duplicate-transaction";
        case ErrorCode::UnknownContract: return "unknown-contract";
        case ErrorCode::UnknownFunction: return "unknown-function";
        case ErrorCode::NotWhitelisted: return "not-whitelisted";
        case ErrorCode::GenesisMismatch: return "genesis-mismatch";
        case ErrorCode::Infeasible: return "infeasible";
        case ErrorCode::Duplicate: return "duplicate";
        case ErrorCode::Consistency: return "consistency";
        case ErrorCode::UnknownDevice: return "unknown-device";
        case ErrorCode::Blocked: return "blocked";
        case ErrorCode::MalformedRecord: return "malformed-record";
        case ErrorCode::Io: return "io";
    }
    return "?";
}

const char* to_string(Authority a) {
    switch (a) {
        case Authority::EdgeServer: return "EdgeServer";
        case Authority::Device: return "Device";
        case Authority::Proxy: return "Proxy";
    }
    return "?";
}

Authority authority_from_string(std::string_view s) {
    if (s == "EdgeServer") return Authority::EdgeServer;
    if (s == "Device") return Authority::Device;
    if (s == "Proxy") return Authority::Proxy;
    throw Error(ErrorCode::MalformedRecord, "unknown authority '" + std::string(s) + "'");
}

Coins Coins::from_double(double value) {
    // nearbyint honours the default rounding mode, round-half-even.
    return Coins(static_cast<std::int64_t>(std::nearbyint(value * 100.0)));
}

Coins Coins::parse(std::string_view text) {
    auto bad = [&] {
        return Error(ErrorCode::MalformedRecord, "invalid coin amount '" + std::string(text) + "'");
    };
    if (text.empty()) throw bad();
    bool negative = false;
    std::size_t i = 0;
    if (text[0] == '-') {
        negative = true;
        i = 1;
    }
    std::int64_t whole = 0;
    std::int64_t frac = 0;
    int frac_digits = 0;
    bool any_digit = false;
    bool in_frac = false;
    for (; i < text.size(); ++i) {
        char c = text[i];
        if (c == '.') {
            if (in_frac) throw bad();
            in_frac = true;
            continue;
        }
        if (c < '0' || c > '9') throw bad();
        any_digit = true;
        if (in_frac) {
            if (++frac_digits > 2) throw bad();
            frac = frac * 10 + (c - '0');
        } else {
            whole = whole * 10 + (c - '0');
        }
    }
    if (!any_digit) throw bad();
    if (frac_digits == 1) frac *= 10;
    std::int64_t cents = whole * 100 + frac;
    return Coins(negative ? -cents : cents);
}

std::string Coins::to_string() const {
    std::int64_t a = cents_ < 0 ? -cents_ : cents_;
    std::string out = (cents_ < 0 ? "-" : "") + std::to_string(a / 100) + ".";
    std::int64_t f = a % 100;
    if (f < 10) out += '0';
    out += std::to_string(f);
    return out;
}

ResourceVector ResourceVector::operator+(const ResourceVector& o) const {
    ResourceVector r;
    for (std::size_t j = 0; j < kResourceTypes; ++j) r.v[j] = v[j] + o.v[j];
    return r;
}

ResourceVector ResourceVector::operator-(const ResourceVector& o) const {
    ResourceVector r;
    for (std::size_t j = 0; j < kResourceTypes; ++j) r.v[j] = v[j] - o.v[j];
    return r;
}

ResourceVector ResourceVector::operator*(double s) const {
    ResourceVector r;
    for (std::size_t j = 0; j < kResourceTypes; ++j) r.v[j] = v[j] * s;
    return r;
}

bool ResourceVector::fits_within(const ResourceVector& o) const {
    for (std::size_t j = 0; j < kResourceTypes; ++j) {
        if (v[j] > o.v[j]) return false;
    }
    return true;
}

bool ResourceVector::nonnegative() const {
    for (double x : v) {
        if (!(x >= 0)) return false;
    }
    return true;
}

std::string ResourceVector::to_string() const {
    std::string out = "(";
    for (std::size_t j = 0; j < kResourceTypes; ++j) {
        if (j) out += ",";
        out += decimal_text(v[j]);
    }
    return out + ")";
}

std::string decimal_text(double value) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

double parse_decimal(std::string_view text) {
    double out = 0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), out);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
        throw Error(ErrorCode::MalformedRecord, "invalid decimal '" + std::string(text) + "'");
    }
    return out;
}

}  // namespace edgechain

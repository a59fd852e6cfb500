#include "stylebc/rng.hpp"

#include <cmath>
#include <numbers>

namespace stylebc {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

// FNV-1a, 64 bit.
std::uint64_t hash_name(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

RngStream::RngStream(std::uint64_t seed, std::string_view stream_name)
    : seed_(seed), name_(stream_name), engine_(splitmix64(seed ^ splitmix64(hash_name(stream_name)))) {}

RngStream RngStream::derive(std::string_view child_name) const {
    std::string full = name_;
    full += '/';
    full += child_name;
    return RngStream(seed_, full);
}

RngStream RngStream::derive(std::string_view child_name, std::uint64_t index) const {
    std::string full = name_;
    full += '/';
    full += child_name;
    full += '#';
    full += std::to_string(index);
    return RngStream(seed_, full);
}

double RngStream::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::uniform_index(std::uint64_t n) {
    // Rejection sampling keeps the draw unbiased for any n.
    const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
}

double RngStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

}  // namespace stylebc

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace stylebc {

/// Seeded random stream. The engine is std::mt19937_64 (bit-exact across
/// standard libraries); the real-valued conversions are implemented here so
/// that uniform and normal draws are portable too.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::string_view stream_name);

    /// Child stream, independent of this one's draw position.
    RngStream derive(std::string_view child_name) const;
    RngStream derive(std::string_view child_name, std::uint64_t index) const;

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_index(std::uint64_t n);
    /// Standard normal via Box-Muller; pairs are cached.
    double normal();
    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    std::uint64_t seed() const { return seed_; }
    const std::string& name() const { return name_; }

private:
    std::uint64_t seed_;
    std::string name_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t hash_name(std::string_view s);

}  // namespace stylebc

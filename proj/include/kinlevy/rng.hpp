#pragma once

#include <cstdint>
#include <string_view>

namespace kinlevy {

/// 64-bit FNV-1a hash, used to turn module names into stream tags.
std::uint64_t hash_tag(std::string_view name) noexcept;

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t z) noexcept;

/// Counter-derived pseudo-random stream.
///
/// A stream is addressed by (seed, tag, index): the master seed of the run,
/// a tag naming the consumer (module or role) and an entity index such as a
/// path number. The three words are folded through SplitMix64 and the result
/// seeds a xoshiro256++ generator. Any path can therefore be regenerated in
/// isolation, and results do not depend on how work is split across threads.
class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) noexcept;

    std::uint64_t next_u64() noexcept;

    /// Uniform on the open interval (0, 1).
    double uniform() noexcept;
    double uniform(double a, double b) noexcept { return a + (b - a) * uniform(); }
    /// Standard normal (polar Box-Muller, second variate cached).
    double normal() noexcept;
    /// Exponential with unit mean.
    double exponential() noexcept;
    /// Unbiased integer in [0, n).
    std::uint64_t below(std::uint64_t n) noexcept;

private:
    std::uint64_t s_[4];
    double cached_normal_ = 0.0;
    bool has_cached_ = false;
};

/// Convenience bundle: master seed plus tag; `stream(i)` gives entity i.
struct StreamKey {
    std::uint64_t seed = 0;
    std::uint64_t tag = 0;

    StreamKey() = default;
    StreamKey(std::uint64_t s, std::string_view name) : seed(s), tag(hash_tag(name)) {}
    StreamKey(std::uint64_t s, std::uint64_t t) : seed(s), tag(t) {}

    RandomStream stream(std::uint64_t index) const noexcept { return RandomStream(seed, tag, index); }
    /// Derived key for a nested consumer.
    StreamKey child(std::string_view name) const noexcept { return StreamKey(seed, mix64(tag ^ hash_tag(name))); }
};

}  // namespace kinlevy

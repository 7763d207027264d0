#include "kinlevy/rng.hpp"

#include <cmath>

namespace kinlevy {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

inline std::uint64_t rotl(std::uint64_t x, int k) noexcept
{
    return (x << k) | (x >> (64 - k));
}

}  // namespace

std::uint64_t hash_tag(std::string_view name) noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : name) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t mix64(std::uint64_t z) noexcept
{
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) noexcept
{
    std::uint64_t k = mix64(seed + kGolden);
    k = mix64(k ^ (tag + kGolden));
    k = mix64(k ^ (index * kGolden + 0x632BE59BD9B4E019ULL));
    for (auto& w : s_) {
        k += kGolden;
        w = mix64(k);
    }
}

std::uint64_t RandomStream::next_u64() noexcept
{
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double RandomStream::uniform() noexcept
{
    // 53 random bits shifted by half an ulp keeps the value away from 0 and 1.
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RandomStream::normal() noexcept
{
    if (has_cached_) {
        has_cached_ = false;
        return cached_normal_;
    }
    double u, w, s;
    do {
        u = 2.0 * uniform() - 1.0;
        w = 2.0 * uniform() - 1.0;
        s = u * u + w * w;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    cached_normal_ = w * f;
    has_cached_ = true;
    return u * f;
}

double RandomStream::exponential() noexcept
{
    return -std::log(uniform());
}

std::uint64_t RandomStream::below(std::uint64_t n) noexcept
{
    // Lemire's multiply-shift with rejection.
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
        const std::uint64_t threshold = (0 - n) % n;
        while (low < threshold) {
            x = next_u64();
            m = static_cast<__uint128_t>(x) * n;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

}  // namespace kinlevy

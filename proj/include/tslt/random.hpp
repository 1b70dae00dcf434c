#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>

namespace tslt {

/// Seeded xoshiro256** stream, state expanded from the seed with SplitMix64.
///
/// The algorithm is fixed so that a seed yields the same draws on every
/// platform. Not safe for concurrent use.
class RandSource {
public:
    explicit RandSource(std::uint64_t seed);

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() noexcept;
    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    /// Unbiased integer on [0, n); n must be positive.
    std::uint64_t uniform_index(std::uint64_t n) noexcept;
    /// Standard normal via Box-Muller; the second variate of each pair is cached.
    double normal() noexcept;

    template <typename T>
    void shuffle(std::span<T> items) noexcept {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_index(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::uint64_t state_[4];
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

/// Mixes a base seed with a stream id into an independent seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

}  // namespace tslt

#pragma once

#include <array>
#include <cstdint>

namespace acuity {

/// Counter-based generator (Philox4x32-10). Every draw is a pure function of
/// (seed, stream, counter), so the full state is three integers and replay is
/// bit-exact on every platform.
class RandomSource {
public:
    struct State {
        std::uint64_t seed = 0;
        std::uint64_t stream = 0;
        std::uint64_t counter = 0;

        bool operator==(const State&) const = default;
    };

    explicit RandomSource(std::uint64_t seed = 0, std::uint64_t stream = 0) noexcept
        : state_{seed, stream, 0} {}

    explicit RandomSource(const State& state) noexcept : state_(state) {}

    std::uint64_t next_u64() noexcept;

    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; consumes exactly two uniforms.
    double normal() noexcept;
    double normal(double mu, double sigma) noexcept { return mu + sigma * normal(); }

    bool bernoulli(double p) noexcept { return uniform() < p; }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n) noexcept;

    /// Independent child stream derived from (seed, stream, id). Does not
    /// advance this source.
    [[nodiscard]] RandomSource split(std::uint64_t id) const noexcept;

    const State& state() const noexcept { return state_; }

private:
    State state_;
};

/// One Philox4x32-10 block; exposed for known-answer tests.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) noexcept;

/// Fisher-Yates shuffle of an index-addressable range.
template <typename Range>
void shuffle(Range& range, RandomSource& rng) {
    const auto n = static_cast<std::uint64_t>(range.size());
    for (std::uint64_t i = n; i > 1; --i) {
        const auto j = rng.below(i);
        using std::swap;
        swap(range[i - 1], range[j]);
    }
}

} // namespace acuity

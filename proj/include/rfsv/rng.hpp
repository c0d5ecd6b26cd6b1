#pragma once

#include <cstdint>

namespace rfsv
{
    /// SplitMix64, used to expand a 64-bit seed into generator state.
    inline std::uint64_t splitmix64(std::uint64_t &state) noexcept
    {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Derive an independent seed for a named sub-stream.
    std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

    /**
     * xoshiro256** (Blackman & Vigna), state seeded through SplitMix64.
     * All project randomness flows through this generator so that runs are
     * reproducible independent of the C++ standard library in use.
     */
    class Rng
    {
    public:
        using result_type = std::uint64_t;

        explicit Rng(std::uint64_t seed = 0) noexcept;

        std::uint64_t next() noexcept;
        std::uint64_t operator()() noexcept
        {
            return next();
        }
        static constexpr std::uint64_t min() noexcept
        {
            return 0;
        }
        static constexpr std::uint64_t max() noexcept
        {
            return ~std::uint64_t { 0 };
        }

        /// Uniform in [0, 1) with 53 random bits.
        double uniform() noexcept;
        double uniform(double lo, double hi) noexcept
        {
            return lo + (hi - lo) * uniform();
        }
        /// Uniform integer in [0, bound).
        std::uint64_t below(std::uint64_t bound) noexcept;
        bool bernoulli(double p) noexcept
        {
            return uniform() < p;
        }
        /// Standard normal via Box-Muller (both outputs used).
        double normal() noexcept;

    private:
        std::uint64_t m_s[4];
        double m_spare = 0.0;
        bool m_has_spare = false;
    };
}

#include "rfsv/rng.hpp"

#include <cmath>
#include <numbers>

namespace rfsv
{
    namespace
    {
        constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept
        {
            return (x << k) | (x >> (64 - k));
        }
    }

    std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept
    {
        std::uint64_t state = seed ^ (stream * 0xD1B54A32D192ED03ull);
        splitmix64(state);
        return splitmix64(state);
    }

    Rng::Rng(std::uint64_t seed) noexcept
    {
        std::uint64_t state = seed;
        for (auto &s : m_s)
            s = splitmix64(state);
    }

    std::uint64_t Rng::next() noexcept
    {
        const std::uint64_t result = rotl(m_s[1] * 5, 7) * 9;
        const std::uint64_t t = m_s[1] << 17;
        m_s[2] ^= m_s[0];
        m_s[3] ^= m_s[1];
        m_s[1] ^= m_s[2];
        m_s[0] ^= m_s[3];
        m_s[2] ^= t;
        m_s[3] = rotl(m_s[3], 45);
        return result;
    }

    double Rng::uniform() noexcept
    {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    std::uint64_t Rng::below(std::uint64_t bound) noexcept
    {
        if (bound <= 1)
            return 0;
        // rejection sampling removes modulo bias
        const std::uint64_t limit = max() - max() % bound;
        std::uint64_t r;
        do
            r = next();
        while (r >= limit);
        return r % bound;
    }

    double Rng::normal() noexcept
    {
        if (m_has_spare)
        {
            m_has_spare = false;
            return m_spare;
        }
        double u1;
        do
            u1 = uniform();
        while (u1 <= 0.0);
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        m_spare = radius * std::sin(angle);
        m_has_spare = true;
        return radius * std::cos(angle);
    }
}

#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

/*
 * Inner-loop arithmetic used by every layer. Each backend implements the same
 * two primitives with the same floating-point operation order, so results are
 * bit-identical whichever backend is selected at runtime.
 *
 *   axpy: y[i] = y[i] + a * x[i]           (element-wise, no reassociation)
 *   taps: y[i] = y[i] + w[t] * base[off[t] + i] for t = 0..T-1 in order,
 *         i.e. exactly T successive axpy calls
 *   dot:  32 lane-strided partial sums acc[i % 32] (tail included), folded
 *         lane-wise as v[l] = (acc[l]+acc[l+8]) + (acc[l+16]+acc[l+24]),
 *         then ((v0+v4)+(v2+v6)) + ((v1+v5)+(v3+v7))
 */
namespace rfsv::kernels
{
    enum class Backend
    {
        Scalar,
        Avx2
    };

    struct KernelTable
    {
        Backend backend;
        std::string_view name;
        void (*axpy)(std::size_t n, float a, const float *x, float *y);
        float (*dot)(std::size_t n, const float *x, const float *y);
        void (*taps)(std::size_t n, std::size_t count, const float *weights, const std::ptrdiff_t *offsets,
                const float *base, float *y);
    };

    const KernelTable& scalar_table() noexcept;
    /// nullptr when the binary was built without AVX2 support.
    const KernelTable* avx2_table() noexcept;

    bool cpu_supports(Backend backend) noexcept;
    std::vector<Backend> available_backends();

    /// Active table. Defaults to the best supported backend unless the
    /// RFSV_KERNELS environment variable names one ("scalar" or "avx2").
    const KernelTable& active() noexcept;
    /// Throws E_CONFIG when the backend is unsupported on this CPU.
    void select(Backend backend);
    Backend parse_backend(std::string_view name);

    inline void axpy(std::size_t n, float a, const float *x, float *y)
    {
        active().axpy(n, a, x, y);
    }
    inline float dot(std::size_t n, const float *x, const float *y)
    {
        return active().dot(n, x, y);
    }
    inline void taps(std::size_t n, std::size_t count, const float *weights, const std::ptrdiff_t *offsets, const float *base,
            float *y)
    {
        active().taps(n, count, weights, offsets, base, y);
    }
}

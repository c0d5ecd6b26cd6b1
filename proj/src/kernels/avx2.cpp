#include "rfsv/kernels.hpp"

#include <immintrin.h>

namespace rfsv::kernels
{
    namespace
    {
        void axpy_avx2(std::size_t n, float a, const float *x, float *y)
        {
            const __m256 va = _mm256_set1_ps(a);
            std::size_t i = 0;
            for (; i + 32 <= n; i += 32)
            {
                __m256 y0 = _mm256_add_ps(_mm256_loadu_ps(y + i), _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
                __m256 y1 = _mm256_add_ps(_mm256_loadu_ps(y + i + 8), _mm256_mul_ps(va, _mm256_loadu_ps(x + i + 8)));
                __m256 y2 = _mm256_add_ps(_mm256_loadu_ps(y + i + 16), _mm256_mul_ps(va, _mm256_loadu_ps(x + i + 16)));
                __m256 y3 = _mm256_add_ps(_mm256_loadu_ps(y + i + 24), _mm256_mul_ps(va, _mm256_loadu_ps(x + i + 24)));
                _mm256_storeu_ps(y + i, y0);
                _mm256_storeu_ps(y + i + 8, y1);
                _mm256_storeu_ps(y + i + 16, y2);
                _mm256_storeu_ps(y + i + 24, y3);
            }
            for (; i + 8 <= n; i += 8)
                _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), _mm256_mul_ps(va, _mm256_loadu_ps(x + i))));
            for (; i < n; i++)
                y[i] = y[i] + a * x[i];
        }

        float dot_avx2(std::size_t n, const float *x, const float *y)
        {
            __m256 a0 = _mm256_setzero_ps();
            __m256 a1 = _mm256_setzero_ps();
            __m256 a2 = _mm256_setzero_ps();
            __m256 a3 = _mm256_setzero_ps();
            std::size_t i = 0;
            for (; i + 32 <= n; i += 32)
            {
                a0 = _mm256_add_ps(a0, _mm256_mul_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
                a1 = _mm256_add_ps(a1, _mm256_mul_ps(_mm256_loadu_ps(x + i + 8), _mm256_loadu_ps(y + i + 8)));
                a2 = _mm256_add_ps(a2, _mm256_mul_ps(_mm256_loadu_ps(x + i + 16), _mm256_loadu_ps(y + i + 16)));
                a3 = _mm256_add_ps(a3, _mm256_mul_ps(_mm256_loadu_ps(x + i + 24), _mm256_loadu_ps(y + i + 24)));
            }
            alignas(32) float acc[32];
            _mm256_store_ps(acc, a0);
            _mm256_store_ps(acc + 8, a1);
            _mm256_store_ps(acc + 16, a2);
            _mm256_store_ps(acc + 24, a3);
            for (int l = 0; i < n; i++, l++)
                acc[l] = acc[l] + x[i] * y[i];
            const __m256 v = _mm256_add_ps(_mm256_add_ps(_mm256_load_ps(acc), _mm256_load_ps(acc + 8)),
                    _mm256_add_ps(_mm256_load_ps(acc + 16), _mm256_load_ps(acc + 24)));
            alignas(32) float lanes[8];
            _mm256_store_ps(lanes, v);
            return ((lanes[0] + lanes[4]) + (lanes[2] + lanes[6])) + ((lanes[1] + lanes[5]) + (lanes[3] + lanes[7]));
        }

        // Output-stationary: a block of y stays in registers while every tap is
        // applied in order, which is the same per-element sequence as the scalar loop.
        void taps_avx2(std::size_t n, std::size_t count, const float *weights, const std::ptrdiff_t *offsets, const float *base,
                float *y)
        {
            std::size_t i = 0;
            for (; i + 32 <= n; i += 32)
            {
                __m256 y0 = _mm256_loadu_ps(y + i);
                __m256 y1 = _mm256_loadu_ps(y + i + 8);
                __m256 y2 = _mm256_loadu_ps(y + i + 16);
                __m256 y3 = _mm256_loadu_ps(y + i + 24);
                for (std::size_t t = 0; t < count; t++)
                {
                    const __m256 w = _mm256_broadcast_ss(weights + t);
                    const float *x = base + offsets[t] + i;
                    y0 = _mm256_add_ps(y0, _mm256_mul_ps(w, _mm256_loadu_ps(x)));
                    y1 = _mm256_add_ps(y1, _mm256_mul_ps(w, _mm256_loadu_ps(x + 8)));
                    y2 = _mm256_add_ps(y2, _mm256_mul_ps(w, _mm256_loadu_ps(x + 16)));
                    y3 = _mm256_add_ps(y3, _mm256_mul_ps(w, _mm256_loadu_ps(x + 24)));
                }
                _mm256_storeu_ps(y + i, y0);
                _mm256_storeu_ps(y + i + 8, y1);
                _mm256_storeu_ps(y + i + 16, y2);
                _mm256_storeu_ps(y + i + 24, y3);
            }
            for (; i + 8 <= n; i += 8)
            {
                __m256 y0 = _mm256_loadu_ps(y + i);
                for (std::size_t t = 0; t < count; t++)
                    y0 = _mm256_add_ps(y0, _mm256_mul_ps(_mm256_broadcast_ss(weights + t), _mm256_loadu_ps(base + offsets[t] + i)));
                _mm256_storeu_ps(y + i, y0);
            }
            for (; i < n; i++)
            {
                float acc = y[i];
                for (std::size_t t = 0; t < count; t++)
                    acc = acc + weights[t] * base[offsets[t] + i];
                y[i] = acc;
            }
        }
    }

    const KernelTable* avx2_table() noexcept
    {
        static const KernelTable table { Backend::Avx2, "avx2", &axpy_avx2, &dot_avx2, &taps_avx2 };
        return &table;
    }
}

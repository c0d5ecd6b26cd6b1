#include "rfsv/kernels.hpp"

namespace rfsv::kernels
{
    namespace
    {
        void axpy_scalar(std::size_t n, float a, const float *x, float *y)
        {
            for (std::size_t i = 0; i < n; i++)
                y[i] = y[i] + a * x[i];
        }

        float dot_scalar(std::size_t n, const float *x, const float *y)
        {
            float acc[32] = {};
            std::size_t i = 0;
            for (; i + 32 <= n; i += 32)
                for (int l = 0; l < 32; l++)
                    acc[l] = acc[l] + x[i + l] * y[i + l];
            for (int l = 0; i < n; i++, l++)
                acc[l] = acc[l] + x[i] * y[i];
            float v[8];
            for (int l = 0; l < 8; l++)
                v[l] = (acc[l] + acc[l + 8]) + (acc[l + 16] + acc[l + 24]);
            return ((v[0] + v[4]) + (v[2] + v[6])) + ((v[1] + v[5]) + (v[3] + v[7]));
        }

        void taps_scalar(std::size_t n, std::size_t count, const float *weights, const std::ptrdiff_t *offsets, const float *base,
                float *y)
        {
            for (std::size_t t = 0; t < count; t++)
            {
                const float w = weights[t];
                const float *x = base + offsets[t];
                for (std::size_t i = 0; i < n; i++)
                    y[i] = y[i] + w * x[i];
            }
        }
    }

    const KernelTable& scalar_table() noexcept
    {
        static const KernelTable table { Backend::Scalar, "scalar", &axpy_scalar, &dot_scalar, &taps_scalar };
        return table;
    }
}

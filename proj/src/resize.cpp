#include "rfsv/resize.hpp"
#include "rfsv/error.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace rfsv
{
    double catmull_rom(double x) noexcept
    {
        constexpr double a = -0.5;
        x = std::abs(x);
        if (x <= 1.0)
            return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
        if (x < 2.0)
            return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
        return 0.0;
    }

    namespace
    {
        struct Taps
        {
            int index[4];
            double weight[4];
        };

        std::vector<Taps> plan_axis(int in_size, int out_size)
        {
            std::vector<Taps> plan(out_size);
            const double ratio = static_cast<double>(in_size) / out_size;
            for (int o = 0; o < out_size; o++)
            {
                const double src = (o + 0.5) * ratio - 0.5;
                const double base = std::floor(src);
                const double frac = src - base;
                for (int t = 0; t < 4; t++)
                {
                    const int i = static_cast<int>(base) - 1 + t;
                    plan[o].index[t] = std::clamp(i, 0, in_size - 1);
                    plan[o].weight[t] = catmull_rom(frac - (t - 1));
                }
            }
            return plan;
        }
    }

    Tensor bicubic_resize(const Tensor &input, int out_h, int out_w)
    {
        const Shape s = input.shape();
        if (out_h < 1 || out_w < 1)
            fail(ErrorCode::Shape, "bicubic_resize: degenerate target " + std::to_string(out_h) + "x" + std::to_string(out_w));
        if (s.h < 2 || s.w < 2)
            fail(ErrorCode::Shape, "bicubic_resize: source " + s.str() + " must be at least 2x2");
        const std::vector<Taps> rows = plan_axis(s.h, out_h);
        const std::vector<Taps> cols = plan_axis(s.w, out_w);
        Tensor out(Shape { s.n, s.c, out_h, out_w });
        std::vector<double> horizontal(static_cast<std::size_t>(s.h) * out_w);
        for (int n = 0; n < s.n; n++)
            for (int c = 0; c < s.c; c++)
            {
                const float *src = input.plane(n, c);
                const auto [lo_it, hi_it] = std::minmax_element(src, src + s.plane());
                const float lo = *lo_it;
                const float hi = *hi_it;
                for (int y = 0; y < s.h; y++)
                    for (int x = 0; x < out_w; x++)
                    {
                        const Taps &t = cols[x];
                        double acc = 0.0;
                        for (int k = 0; k < 4; k++)
                            acc += t.weight[k] * src[y * s.w + t.index[k]];
                        horizontal[y * out_w + x] = acc;
                    }
                float *dst = out.plane(n, c);
                for (int y = 0; y < out_h; y++)
                {
                    const Taps &t = rows[y];
                    for (int x = 0; x < out_w; x++)
                    {
                        double acc = 0.0;
                        for (int k = 0; k < 4; k++)
                            acc += t.weight[k] * horizontal[t.index[k] * out_w + x];
                        dst[y * out_w + x] = std::clamp(static_cast<float>(acc), lo, hi);
                    }
                }
            }
        return out;
    }
}

#include "rfsv/augment.hpp"
#include "rfsv/error.hpp"
#include "rfsv/resize.hpp"

#include <algorithm>
#include <cmath>

namespace rfsv
{
    AugmentDraw draw_augment(Rng &rng, int h, int w, const AugmentOptions &options)
    {
        AugmentDraw d = AugmentDraw::identity(h, w);
        if (options.flip)
            d.flip = rng.bernoulli(0.5);
        if (options.crop)
        {
            if (!(options.min_area > 0.0) || options.max_area > 1.0 || options.min_area > options.max_area)
                fail(ErrorCode::Config, "crop area band must satisfy 0 < min <= max <= 1");
            const double side = std::sqrt(rng.uniform(options.min_area, options.max_area));
            d.crop_h = std::clamp(static_cast<int>(std::lround(h * side)), 2, h);
            d.crop_w = std::clamp(static_cast<int>(std::lround(w * side)), 2, w);
            d.top = static_cast<int>(rng.below(static_cast<std::uint64_t>(h - d.crop_h + 1)));
            d.left = static_cast<int>(rng.below(static_cast<std::uint64_t>(w - d.crop_w + 1)));
        }
        return d;
    }

    Tensor apply_augment(const Tensor &image, const AugmentDraw &draw, int out_h, int out_w)
    {
        const Shape s = image.shape();
        if (s.n != 1)
            fail(ErrorCode::Shape, "augment expects a single image, got " + s.str());
        if (draw.top < 0 || draw.left < 0 || draw.crop_h < 1 || draw.crop_w < 1 || draw.top + draw.crop_h > s.h || draw.left + draw.crop_w > s.w)
            fail(ErrorCode::Shape, "crop window outside image " + s.str());
        Tensor crop(Shape { 1, s.c, draw.crop_h, draw.crop_w });
        for (int c = 0; c < s.c; c++)
            for (int y = 0; y < draw.crop_h; y++)
                for (int x = 0; x < draw.crop_w; x++)
                {
                    const int sx = draw.left + x;
                    crop.at(0, c, y, x) = image.at(0, c, draw.top + y, draw.flip ? s.w - 1 - sx : sx);
                }
        if (draw.crop_h == out_h && draw.crop_w == out_w)
            return crop;
        return bicubic_resize(crop, out_h, out_w);
    }

    Tensor augment(const Tensor &image, Rng &rng, int out_h, int out_w, const AugmentOptions &options)
    {
        const AugmentDraw d = draw_augment(rng, image.shape().h, image.shape().w, options);
        return apply_augment(image, d, out_h, out_w);
    }

    Tensor rotate90(const Tensor &image, int quarter_turns)
    {
        const Shape s = image.shape();
        if (s.h != s.w)
            fail(ErrorCode::Shape, "rotate90 needs a square image, got " + s.str());
        const int k = ((quarter_turns % 4) + 4) % 4;
        Tensor out(s);
        const int n = s.h;
        for (int b = 0; b < s.n; b++)
            for (int c = 0; c < s.c; c++)
                for (int y = 0; y < n; y++)
                    for (int x = 0; x < n; x++)
                    {
                        int sy = y, sx = x;
                        switch (k)
                        {
                            case 1:
                                sy = x;
                                sx = n - 1 - y;
                                break;
                            case 2:
                                sy = n - 1 - y;
                                sx = n - 1 - x;
                                break;
                            case 3:
                                sy = n - 1 - x;
                                sx = y;
                                break;
                            default:
                                break;
                        }
                        out.at(b, c, y, x) = image.at(b, c, sy, sx);
                    }
        return out;
    }
}

#pragma once

#include "rfsv/rng.hpp"
#include "rfsv/tensor.hpp"

namespace rfsv
{
    struct AugmentOptions
    {
        bool flip = true;
        bool crop = true;
        double min_area = 0.6;
        double max_area = 1.0;
    };

    /// One concrete transform: optional horizontal flip, then a crop window.
    struct AugmentDraw
    {
        bool flip = false;
        int top = 0;
        int left = 0;
        int crop_h = 0;
        int crop_w = 0;

        /// No flip and the whole image.
        static AugmentDraw identity(int h, int w)
        {
            return { false, 0, 0, h, w };
        }
    };

    /// Flip with p = 0.5; square-aspect crop covering an area fraction drawn
    /// uniformly from [min_area, max_area], placed uniformly.
    AugmentDraw draw_augment(Rng &rng, int h, int w, const AugmentOptions &options = {});
    /// Applies a draw and bicubic-resizes the crop to out_h x out_w. A full-size
    /// crop at the same size is copied without resampling.
    Tensor apply_augment(const Tensor &image, const AugmentDraw &draw, int out_h, int out_w);
    Tensor augment(const Tensor &image, Rng &rng, int out_h, int out_w, const AugmentOptions &options = {});

    /// Counter-clockwise rotation by quarter turns; square images only.
    Tensor rotate90(const Tensor &image, int quarter_turns);
}

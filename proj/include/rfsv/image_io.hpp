#pragma once

#include "rfsv/tensor.hpp"

#include <filesystem>

namespace rfsv
{
    /// Binary PGM (P5) or PPM (P6), 8-bit. Returns [1, 1|3, H, W] in [0, 1].
    Tensor read_pnm(const std::filesystem::path &path);
    /// Writes P5 for one channel and P6 for three; values are clamped to [0, 1]
    /// and rounded to 8 bits.
    void write_pnm(const std::filesystem::path &path, const Tensor &image);

    /// Jet-style colouring of a [1,1,H,W] map in [0,1], alpha-blended over an
    /// RGB image [1,3,H,W]. `alpha` is the weight of the map colour.
    Tensor overlay_heatmap(const Tensor &image, const Tensor &map, float alpha = 0.5f);
    /// Draws a one-pixel rectangle outline in place.
    void draw_box(Tensor &image, int top, int left, int height, int width, float r, float g, float b);
}

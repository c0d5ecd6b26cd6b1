#pragma once

#include "rfsv/tensor.hpp"

namespace rfsv
{
    /**
     * Separable Catmull-Rom (a = -0.5) resampling of every plane with
     * half-pixel-centre alignment and edge replication. Each output plane is
     * clamped to the [min, max] of its source plane, so constant planes stay
     * constant and no ringing escapes the source range.
     */
    Tensor bicubic_resize(const Tensor &input, int out_h, int out_w);

    /// Catmull-Rom weight for a sample at distance x from the interpolation point.
    double catmull_rom(double x) noexcept;
}

#pragma once

#include "rfsv/network.hpp"
#include "rfsv/tensor.hpp"

#include <string>
#include <vector>

namespace rfsv
{
    /// Which classifier's weights build the map: the main head or aux branch i.
    struct HeadSelector
    {
        int aux_index = -1;  ///< -1 selects the main head

        static HeadSelector main()
        {
            return {};
        }
        static HeadSelector aux(int index)
        {
            return { index };
        }
    };

    struct ActivationMap
    {
        Tensor raw;        ///< [1,1,h,w] sum_k w_ck f_k(i,j), feature resolution
        Tensor upsampled;  ///< [1,1,H,W] bicubic to input size, min-max normalised to [0,1]
        int class_id = 0;
        float raw_min = 0.0f;
        float raw_max = 0.0f;
        float logit = 0.0f;  ///< class score from the same head, bias included
    };

    /// Class-activation map of one image [1,C,H,W]. The selected head must be
    /// global-average-pool followed directly by one FC; anything else raises E_CONFIG.
    ActivationMap activation_map(const Model &model, const Tensor &image, int class_id, HeadSelector head = {});
    /// Same map for the class the selected head predicts.
    ActivationMap predicted_activation_map(const Model &model, const Tensor &image, HeadSelector head = {});

    /// Half-open pixel box.
    struct BBox
    {
        int top = 0;
        int left = 0;
        int height = 0;
        int width = 0;

        int bottom() const noexcept
        {
            return top + height;
        }
        int right() const noexcept
        {
            return left + width;
        }
        long area() const noexcept
        {
            return static_cast<long>(height) * width;
        }
        bool contains(const BBox &other) const noexcept
        {
            return other.top >= top && other.left >= left && other.bottom() <= bottom() && other.right() <= right();
        }
        friend bool operator==(const BBox&, const BBox&) = default;
    };

    inline constexpr double summary_threshold = 0.5;
    inline constexpr double central_threshold = 0.9;

    struct MaskRegions
    {
        std::vector<unsigned char> summary;  ///< map >= delta, row-major H*W
        BBox central;                        ///< tight box of the central region
        long central_pixels = 0;
    };

    /**
     * Summary mask {a >= delta} and central region: the largest 8-connected
     * component of {a >= delta_central}, ties broken by the component holding
     * the global maximum, then by scan order. Map is [1,1,H,W] in [0,1].
     * Throws E_EMPTY_MASK when no pixel reaches delta_central.
     */
    MaskRegions summary_and_central(const Tensor &map, double delta = summary_threshold, double delta_central = central_threshold);

    struct ObjectMask
    {
        BBox bbox;
        BBox central_bbox;
        double size = 0.0;  ///< sqrt(height * width)
    };

    /**
     * Grows the central box one pixel per step on each side. A side stops at
     * the image border or when the next frontier pixel on the central box's
     * center line (both middle pixels for even spans) falls below delta.
     */
    ObjectMask grow_box(const Tensor &map, const BBox &central, double delta = summary_threshold);

    /// Full per-image pipeline on an already normalised map.
    ObjectMask object_mask(const Tensor &map, double delta = summary_threshold, double delta_central = central_threshold);

    struct ObjEstimate
    {
        double obj = 0.0;
        int n_images = 0;
        int skipped = 0;
        std::vector<double> per_image_sizes;
        std::vector<ObjectMask> masks;  ///< parallel to the input images; empty size for skipped ones
    };

    /// Mean object-mask size over images, each mapped with its predicted class.
    /// Degenerate images are skipped; E_EMPTY_MASK if all are.
    ObjEstimate estimate_obj(const Model &model, const std::vector<Tensor> &images, HeadSelector head = {});
    /// Aggregate precomputed per-image sizes (negative entries mark skipped images).
    ObjEstimate summarize_sizes(const std::vector<double> &sizes);
}

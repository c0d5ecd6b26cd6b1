#pragma once

#include "rfsv/network.hpp"
#include "rfsv/tensor.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace rfsv
{
    /// Default activity threshold: two standard deviations of a Gaussian,
    /// i.e. 4.55% of the peak.
    inline constexpr double default_lerf_threshold = 0.0455;

    struct Pixel
    {
        int y = 0;
        int x = 0;
    };

    struct LerfProbe
    {
        /// Target node in the conv layer's output; spatial center when unset.
        std::optional<Pixel> node;
        /// ReLU as identity and max-pool as average pool.
        bool linear = false;
    };

    /**
     * Influence map of one conv-layer output node on the input image.
     *
     * The probe image is all ones. A unit gradient is placed on every channel of
     * the target node of the conv output (pre-activation) and back-propagated to
     * the input; the map is |d q / d p| maxed over input channels and divided by
     * its global maximum. Returned as [1, 1, H, W]. Throws E_DEAD_PATH when the
     * gradient vanishes everywhere.
     */
    Tensor lerf_map(const Model &model, int ordinal, const LerfProbe &probe = {});

    /// Same, reusing a forward cache that reaches the conv layer.
    Tensor lerf_map(const Model &model, const ForwardCache &cache, int ordinal, const LerfProbe &probe);

    /// Spatial center node of a conv layer's output.
    Pixel center_node(const NetworkSpec &net, int ordinal);

    struct LerfSize
    {
        double size = 0.0;      ///< sqrt(pixel_count)
        long pixel_count = 0;   ///< pixels with map > threshold
    };

    /// Throws E_EMPTY_MASK when no pixel exceeds the threshold.
    LerfSize lerf_size(const Tensor &map, double threshold = default_lerf_threshold);

    struct LerfEntry
    {
        int ordinal = 0;
        std::string label;
        double lerf_size = 0.0;     ///< mean over surviving iterations
        double lerf_stddev = 0.0;
        int theoretical_rf = 0;     ///< closed-form RF, unclipped
        double pixel_count = 0.0;   ///< mean active-pixel count
        int iterations = 0;         ///< surviving iterations
    };

    struct LerfProfile
    {
        std::vector<LerfEntry> entries;
        int input_h = 0;
        int input_w = 0;
        double threshold = default_lerf_threshold;

        const LerfEntry& at(int ordinal) const;
    };

    struct LerfOptions
    {
        int iterations = 20;
        std::uint64_t seed = 0;
        double threshold = default_lerf_threshold;
        bool linear = false;
        /// Replace every conv weight by its absolute value after drawing.
        bool positive_weights = false;
        /// Called after each iteration with the maps of every layer, in ordinal order.
        std::vector<std::pair<int, Tensor>> *last_maps = nullptr;
    };

    /**
     * Per-layer LERF of an untrained network. Each iteration re-draws He-initialised
     * parameters, runs one forward pass of the probe and measures every conv layer
     * at its center node; sizes are averaged over iterations. A layer whose map is
     * dead is retried once with fresh parameters; iterations that stay dead are
     * dropped, and a layer with no surviving iteration raises E_DEAD_PATH.
     */
    LerfProfile lerf_profile(const NetworkSpec &net, const LerfOptions &options);

    /// CSV with header `layer,rf,lerf_size,pixel_count`.
    std::string profile_to_csv(const LerfProfile &profile);
    /// Reads the CSV back; layer handles are kept as labels, ordinals left 0.
    LerfProfile profile_from_csv(const std::string &text);
}

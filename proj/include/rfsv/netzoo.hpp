#pragma once

#include "rfsv/network.hpp"

#include <vector>

namespace rfsv
{
    struct BuildOptions
    {
        int num_classes = 2;
        /// Channel-width multiplier: 1, 1/2 or 1/4.
        double scale = 0.25;
        int input_h = 224;
        int input_w = 224;
        HeadType head = HeadType::ResNet;
    };

    /**
     * Plain VGG13 feature stack (five blocks of two 3x3 convs, each block closed
     * by a 2x2 max-pool) followed by the chosen classifier head. Conv layers get
     * ordinals 1..10 and the labels of the 35-module batch-normalised VGG13
     * enumeration (conv, bn, relu per conv; one pool per block):
     *
     *   ordinal  1   2   3    4    5    6    7    8    9    10
     *   label    L0  L3  L7   L10  L14  L17  L21  L24  L28  L31
     *
     * L34, the module closing the feature extractor, is an alias of ordinal 10.
     */
    NetworkSpec build_vgg13(const BuildOptions &options);

    /**
     * ResNet18 with a 7x7/2 stem and 2x2 max-pool, four stages of two basic
     * blocks, global average pooling and a single FC. Batch normalisation is
     * replaced by per-channel affine scales initialised to identity. The 17
     * convs on the main path are numbered; 1x1 projection shortcuts are not.
     */
    NetworkSpec build_resnet18(const BuildOptions &options);

    NetworkSpec build_network(const std::string &arch, const BuildOptions &options);

    /// Appends a classifier head reading `source` and returns its output node.
    int append_head(NetworkSpec &net, int source, int channels, HeadType type);

    struct RfEntry
    {
        int layer_index = 0;  ///< conv ordinal
        int node = -1;
        int rf = 1;           ///< side length in input pixels
        int jump = 1;         ///< cumulative stride
        double center_offset = 0.0;  ///< input-pixel center of output (0, 0)
    };

    /// Closed-form receptive field of every node, ordinal or not.
    std::vector<RfEntry> receptive_fields(const NetworkSpec &net);
    /// Receptive field of each numbered conv layer, in ordinal order.
    std::vector<RfEntry> theoretical_rf(const NetworkSpec &net);
}

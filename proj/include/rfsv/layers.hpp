#pragma once

#include "rfsv/tensor.hpp"

#include <cstdint>
#include <string>

namespace rfsv
{
    enum class LayerKind
    {
        Conv,            ///< odd square kernel, zero padding
        Relu,
        MaxPool,
        AvgPool,
        GlobalAvgPool,
        FullyConnected,
        AddSkip,         ///< element-wise sum of two nodes (residual join)
        ChannelScale,    ///< per-channel affine y = g*x + b
        Dropout
    };

    std::string kind_name(LayerKind kind);

    struct LayerSpec
    {
        LayerKind kind = LayerKind::Relu;
        int in_channels = 0;
        int out_channels = 0;
        int kernel = 1;
        int stride = 1;
        int padding = 0;
        /// 1-based position in the backbone's conv numbering, 0 for anything else.
        int ordinal = 0;
        /// Producing node index, -1 for the network input.
        int input = -1;
        /// Second operand of AddSkip.
        int skip = -1;
        bool bias = true;
        float drop_rate = 0.0f;

        bool has_params() const noexcept
        {
            return kind == LayerKind::Conv || kind == LayerKind::FullyConnected || kind == LayerKind::ChannelScale;
        }
        /// Human-readable handle used in diagnostics, e.g. "conv3x3 #4".
        std::string describe() const;
    };

    /// Weight and bias of one layer; both empty for parameter-free kinds.
    struct LayerParams
    {
        Tensor weight;
        Tensor bias;
    };

    /// Per-call switches. `linear` turns the network into its linear
    /// surrogate: ReLU becomes identity and max-pooling becomes average pooling.
    struct RunContext
    {
        bool training = false;
        bool linear = false;
        std::uint64_t dropout_seed = 0;
    };

    Shape weight_shape(const LayerSpec &layer);
    Shape bias_shape(const LayerSpec &layer);
    /// Validates `in` against the layer and returns the forward output shape.
    Shape output_shape(const LayerSpec &layer, Shape in);

    Tensor forward(const LayerSpec &layer, const LayerParams &params, const Tensor &input, const Tensor *skip = nullptr,
            const RunContext &ctx = {});

    struct LayerGrads
    {
        LayerParams params;
        Tensor input;
        Tensor skip;
    };

    struct BackwardOptions
    {
        bool input_grad = true;
        bool param_grads = true;
    };

    LayerGrads backward(const LayerSpec &layer, const LayerParams &params, const Tensor &input, const Tensor *skip,
            const Tensor &grad_out, const RunContext &ctx = {}, BackwardOptions options = {});

    /// Samples ~ Normal(0, 2 / fan_in), fan_in = c*h*w of `shape`.
    Tensor he_init(Shape shape, std::uint64_t seed);
}

#pragma once

#include "rfsv/network.hpp"
#include "rfsv/tensor.hpp"

#include <span>
#include <vector>

namespace rfsv
{
    struct LossResult
    {
        double loss = 0.0;
        Tensor grad;  ///< d loss / d logits, same shape as the logits
    };

    /// Mean softmax cross-entropy over the batch; logits are [N, K, 1, 1].
    LossResult softmax_cross_entropy(const Tensor &logits, std::span<const int> labels);
    /// Row-wise softmax probabilities of [N, K, 1, 1] logits.
    Tensor softmax(const Tensor &logits);

    struct AdamConfig
    {
        double lr = 2e-5;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };

    struct AdamState
    {
        long step = 0;
        std::vector<LayerParams> m;
        std::vector<LayerParams> v;
    };

    /// Zero moments shaped like the model's parameters.
    AdamState adam_init(const Model &model);

    /**
     * One bias-corrected Adam update of every parameter that has a gradient:
     *   m = b1*m + (1-b1)*g;  v = b2*v + (1-b2)*g^2
     *   p -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
     * Nodes with an empty gradient are left untouched.
     */
    void adam_step(std::vector<LayerParams> &params, const std::vector<LayerParams> &grads, AdamState &state, const AdamConfig &config);
}

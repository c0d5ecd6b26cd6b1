#pragma once

#include "rfsv/lerf.hpp"
#include "rfsv/network.hpp"

#include <span>
#include <string>
#include <vector>

namespace rfsv
{
    struct SupervisionPlan
    {
        std::string arch;
        int target_layer = 0;        ///< conv ordinal
        std::string target_label;
        double obj = 0.0;
        double lerf_at_target = 0.0;
        HeadType aux_classifier = HeadType::ResNet;
        double weight_main = 1.0;
        double weight_aux = 1.0;
    };

    /// Index into profile.entries of the layer whose LERF size is closest to obj;
    /// ties go to the deeper layer.
    std::size_t select_entry(const LerfProfile &profile, double obj);
    /// Ordinal of that layer.
    int select_target_layer(const LerfProfile &profile, double obj);

    SupervisionPlan make_plan(const NetworkSpec &net, const LerfProfile &profile, double obj, HeadType aux = HeadType::ResNet);

    /// key=value lines.
    std::string plan_to_text(const SupervisionPlan &plan);
    SupervisionPlan parse_plan(const std::string &text);

    /**
     * Copy of `net` with an auxiliary classifier reading the activated output of
     * conv `ordinal`: GAP -> FC for resnet type; GAP -> FC -> ReLU -> dropout ->
     * FC -> ReLU -> dropout -> FC for vgg type. The main path is untouched.
     */
    NetworkSpec attach_aux(const NetworkSpec &net, int ordinal, HeadType type);
    NetworkSpec attach_aux(const NetworkSpec &net, const SupervisionPlan &plan);

    struct HeadLoss
    {
        int node = -1;
        double loss = 0.0;
        double weight = 1.0;
        Tensor grad;  ///< weighted d total / d logits
    };

    struct TotalLoss
    {
        double total = 0.0;
        double main = 0.0;
        double aux = 0.0;  ///< weighted sum over aux heads
        std::vector<HeadLoss> heads;
    };

    /// Loss_total = w_main * CE(main) + sum_i w_aux * CE(aux_i) over the forward cache.
    TotalLoss total_loss(const NetworkSpec &net, const ForwardCache &cache, std::span<const int> labels, double weight_main = 1.0,
            double weight_aux = 1.0);
}

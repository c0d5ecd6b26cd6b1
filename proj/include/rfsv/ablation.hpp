#pragma once

#include "rfsv/dataset.hpp"
#include "rfsv/metrics.hpp"
#include "rfsv/network.hpp"
#include "rfsv/train.hpp"

#include <string>
#include <vector>

namespace rfsv
{
    /// One supervision configuration: aux heads on `layers` (conv ordinals, may
    /// be empty), initialised from the base model when `transfer` is set.
    struct AblationChoice
    {
        std::string name;
        std::vector<int> layers;
        bool transfer = true;
    };

    struct AblationRow
    {
        AblationChoice choice;
        std::string backbone;
        std::string classifier;  ///< "R" or "V"
        std::string ds;          ///< "-" or labels joined by '&'
        Metrics metrics;         ///< on the report split
        int best_epoch = 0;
    };

    /**
     * The standard ablation set around a planner-selected ordinal: no deep
     * supervision, the planner layer, the next shallower layer, both jointly,
     * and the planner layer without super-model initialisation. Choices that
     * need a shallower layer are dropped when the planner picked the first conv.
     */
    std::vector<AblationChoice> default_ablation_choices(int planner_ordinal);

    struct AblationSetup
    {
        NetworkSpec backbone;      ///< without aux branches
        const Model *base = nullptr;  ///< pretrained model for transfer rows; required if any row transfers
        HeadType aux_type = HeadType::ResNet;
        TrainConfig train;
    };

    /// Trains one model per choice and scores its best checkpoint on `report`.
    std::vector<AblationRow> ablation_run(const AblationSetup &setup, const LoadedSplit &train, const LoadedSplit &val, const LoadedSplit &report,
            const std::vector<AblationChoice> &choices);

    /// CSV with header `Backbone,C,DS,TL,AUC,Acc,Sen,Spe`.
    std::string ablation_to_csv(const std::vector<AblationRow> &rows);
}

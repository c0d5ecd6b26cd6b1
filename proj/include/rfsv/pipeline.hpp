#pragma once

#include "rfsv/cam.hpp"
#include "rfsv/dataset.hpp"
#include "rfsv/lerf.hpp"
#include "rfsv/planner.hpp"
#include "rfsv/train.hpp"

#include <filesystem>
#include <functional>
#include <string>

namespace rfsv
{
    struct PipelineConfig
    {
        std::string arch = "vgg13";
        double scale = 0.25;
        SynthParams synth;
        TrainConfig train;
        int pretext_epochs = 20;
        LerfOptions lerf;
        HeadType aux_type = HeadType::ResNet;
        /// Training images used for Obj; 0 uses all of them.
        int obj_images = 0;
        /// Reused instead of running the pretext stage when set.
        const Model *pretext_model = nullptr;
        /// Reused instead of measuring the LERF profile when set.
        const LerfProfile *profile = nullptr;
        std::function<void(const std::string&)> log;
    };

    struct PipelineResult
    {
        SynthResult corpus;
        LerfProfile profile;
        ObjEstimate obj;
        SupervisionPlan plan;
        TrainResult pretext;
        TrainResult baseline;
        TrainResult supervised;
        Metrics baseline_val;
        Metrics supervised_val;
    };

    /**
     * Synthetic corpus -> rotation pretext -> baseline fine-tune -> Obj from the
     * baseline's class-activation maps -> LERF profile -> plan -> deeply
     * supervised fine-tune. Both fine-tunes start from the pretext extractor.
     * Artefacts go under `workdir`.
     */
    PipelineResult run_pipeline(const std::filesystem::path &workdir, const PipelineConfig &config);
}

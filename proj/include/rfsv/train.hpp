#pragma once

#include "rfsv/augment.hpp"
#include "rfsv/dataset.hpp"
#include "rfsv/metrics.hpp"
#include "rfsv/network.hpp"
#include "rfsv/optim.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace rfsv
{
    enum class SelectionMetric
    {
        Auc,
        Accuracy
    };

    SelectionMetric parse_selection_metric(const std::string &name);
    std::string selection_metric_name(SelectionMetric metric);

    struct EpochRecord
    {
        int epoch = 0;
        double loss = 0.0;       ///< mean total loss over training samples
        double main_loss = 0.0;
        double aux_loss = 0.0;
        Metrics val;
        double score = 0.0;      ///< selection metric on validation
        bool best = false;
    };

    struct TrainConfig
    {
        AdamConfig adam;
        int epochs = 100;
        int batch_size = 16;
        std::uint64_t seed = 0;
        bool augment = true;
        AugmentOptions augment_options;
        SelectionMetric selection = SelectionMetric::Auc;
        double weight_main = 1.0;
        double weight_aux = 1.0;
        int eval_batch = 32;
        std::function<void(const EpochRecord&)> on_epoch;
    };

    struct TrainResult
    {
        Model best;
        int best_epoch = 0;
        double best_score = 0.0;
        std::vector<EpochRecord> history;
    };

    /// He-initialised model for `net`; with a base model, the feature extractor
    /// is copied from it and every head keeps its fresh weights.
    Model initial_model(const NetworkSpec &net, std::uint64_t seed, const Model *base = nullptr);

    /**
     * Adam on shuffled, augmented mini-batches of the total loss (the main loss
     * alone when the network has no aux branch). After every epoch the main head
     * is scored on `val` and the model is kept when the score strictly improves.
     * Throws E_DATA for an empty split, E_CONFIG for epochs or batch size < 1.
     */
    TrainResult train_model(Model model, const LoadedSplit &train, const LoadedSplit &val, const TrainConfig &config);

    /// Row-major class probabilities [n x k] of the selected head, images in [0,1].
    std::vector<double> predict(const Model &model, const LoadedSplit &split, int head_node = -1, int batch = 32);
    /// Metrics of the main head (or aux branch `aux_index`).
    Metrics evaluate(const Model &model, const LoadedSplit &split, int aux_index = -1, int batch = 32);

    /// Four copies of every image rotated by 0, 90, 180, 270 degrees, labelled 0..3.
    LoadedSplit rotation_split(const LoadedSplit &split);
    /// Rotation-prediction pretraining of `backbone` (its head must have 4 classes).
    TrainResult pretrain_rotation(const NetworkSpec &backbone, const LoadedSplit &train, const LoadedSplit &val, const TrainConfig &config);

    /// Header `epoch,loss,main_loss,aux_loss,val_auc,val_acc,val_sen,val_spe,best`.
    std::string history_to_csv(const std::vector<EpochRecord> &history);
}

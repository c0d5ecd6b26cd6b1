#include "rfsv/train.hpp"
#include "rfsv/checkpoint.hpp"
#include "rfsv/error.hpp"
#include "rfsv/planner.hpp"
#include "rfsv/rng.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace rfsv
{
    SelectionMetric parse_selection_metric(const std::string &name)
    {
        if (name == "auc")
            return SelectionMetric::Auc;
        if (name == "accuracy" || name == "acc")
            return SelectionMetric::Accuracy;
        fail(ErrorCode::Config, "unknown selection metric '" + name + "' (expected auc or accuracy)");
    }

    std::string selection_metric_name(SelectionMetric metric)
    {
        return metric == SelectionMetric::Auc ? "auc" : "accuracy";
    }

    Model initial_model(const NetworkSpec &net, std::uint64_t seed, const Model *base)
    {
        Model model = init_model(net, seed);
        if (base)
            load_backbone(model, *base);
        return model;
    }

    namespace
    {
        constexpr std::uint64_t shuffle_stream = 0x5AFF1E;
        constexpr std::uint64_t dropout_stream = 0xD809;

        Tensor gather(const LoadedSplit &split, const std::vector<std::size_t> &idx, Rng *rng, const TrainConfig &cfg)
        {
            std::vector<Tensor> images;
            images.reserve(idx.size());
            for (std::size_t i : idx)
            {
                const Tensor &img = split.images[i];
                if (rng)
                    images.push_back(augment(img, *rng, img.shape().h, img.shape().w, cfg.augment_options));
                else
                    images.push_back(img);
            }
            return make_batch(images);
        }
    }

    std::vector<double> predict(const Model &model, const LoadedSplit &split, int head_node, int batch)
    {
        if (split.size() == 0)
            fail(ErrorCode::Data, "cannot predict on an empty split");
        if (batch < 1)
            fail(ErrorCode::Config, "eval batch must be at least 1");
        const NetworkSpec &net = model.spec;
        const int node = head_node < 0 ? net.main_output : head_node;
        const bool aux = node != net.main_output;
        std::vector<double> probs;
        probs.reserve(split.size() * static_cast<std::size_t>(net.num_classes));
        for (std::size_t start = 0; start < split.size(); start += static_cast<std::size_t>(batch))
        {
            const std::size_t end = std::min(split.size(), start + static_cast<std::size_t>(batch));
            std::vector<Tensor> images(split.images.begin() + static_cast<std::ptrdiff_t>(start), split.images.begin() + static_cast<std::ptrdiff_t>(end));
            const ForwardCache cache = forward(model, make_batch(images), {}, aux ? -1 : net.main_output, aux);
            const Tensor p = softmax(cache.outputs[node]);
            for (float v : p.values())
                probs.push_back(v);
        }
        return probs;
    }

    Metrics evaluate(const Model &model, const LoadedSplit &split, int aux_index, int batch)
    {
        const NetworkSpec &net = model.spec;
        int node = net.main_output;
        if (aux_index >= 0)
        {
            if (aux_index >= static_cast<int>(net.aux.size()))
                fail(ErrorCode::Config, "model has no aux branch " + std::to_string(aux_index));
            node = net.aux[aux_index].output_node;
        }
        const auto probs = predict(model, split, node, batch);
        return metrics_from_probabilities(probs, net.num_classes, split.labels);
    }

    TrainResult train_model(Model model, const LoadedSplit &train, const LoadedSplit &val, const TrainConfig &config)
    {
        if (config.epochs < 1)
            fail(ErrorCode::Config, "epochs must be at least 1");
        if (config.batch_size < 1)
            fail(ErrorCode::Config, "batch size must be at least 1");
        if (train.size() == 0)
            fail(ErrorCode::Data, "training split is empty");
        if (val.size() == 0)
            fail(ErrorCode::Data, "validation split is empty");
        for (int label : train.labels)
            if (label < 0 || label >= model.spec.num_classes)
                fail(ErrorCode::Data, "training label " + std::to_string(label) + " out of range");

        TrainResult result;
        AdamState state = adam_init(model);
        const std::size_t n = train.size();
        const std::size_t bs = static_cast<std::size_t>(config.batch_size);
        long step = 0;
        bool have_best = false;

        for (int epoch = 1; epoch <= config.epochs; epoch++)
        {
            Rng rng(derive_seed(config.seed, shuffle_stream + static_cast<std::uint64_t>(epoch)));
            std::vector<std::size_t> order(n);
            std::iota(order.begin(), order.end(), 0);
            for (std::size_t i = n; i > 1; i--)
                std::swap(order[i - 1], order[rng.below(i)]);

            double loss_sum = 0.0, main_sum = 0.0, aux_sum = 0.0;
            for (std::size_t start = 0; start < n; start += bs)
            {
                const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(std::min(n,
                        start + bs)));
                const Tensor batch = gather(train, idx, config.augment ? &rng : nullptr, config);
                std::vector<int> labels;
                for (std::size_t i : idx)
                    labels.push_back(train.labels[i]);

                RunContext ctx;
                ctx.training = true;
                ctx.dropout_seed = derive_seed(config.seed ^ dropout_stream, static_cast<std::uint64_t>(step));
                const ForwardCache cache = forward(model, batch, ctx);
                TotalLoss tl = total_loss(model.spec, cache, labels, config.weight_main, config.weight_aux);
                require_finite(Tensor(Shape { 1, 1, 1, 1 }, static_cast<float>(tl.total)), "training loss");

                GradSeeds seeds;
                for (auto &h : tl.heads)
                    seeds.emplace_back(h.node, std::move(h.grad));
                const Gradients grads = backward(model, cache, seeds, { false, true });
                adam_step(model.params, grads.params, state, config.adam);

                const double m = static_cast<double>(idx.size());
                loss_sum += tl.total * m;
                main_sum += tl.main * m;
                aux_sum += tl.aux * m;
                step++;
            }

            EpochRecord rec;
            rec.epoch = epoch;
            rec.loss = loss_sum / static_cast<double>(n);
            rec.main_loss = main_sum / static_cast<double>(n);
            rec.aux_loss = aux_sum / static_cast<double>(n);
            rec.val = evaluate(model, val, -1, config.eval_batch);
            rec.score = config.selection == SelectionMetric::Auc ? rec.val.auc : rec.val.accuracy;
            if (!have_best || rec.score > result.best_score)
            {
                have_best = true;
                rec.best = true;
                result.best = model;
                result.best_epoch = epoch;
                result.best_score = rec.score;
            }
            result.history.push_back(rec);
            if (config.on_epoch)
                config.on_epoch(rec);
        }
        return result;
    }

    LoadedSplit rotation_split(const LoadedSplit &split)
    {
        LoadedSplit out;
        for (std::size_t i = 0; i < split.size(); i++)
            for (int k = 0; k < 4; k++)
            {
                out.images.push_back(rotate90(split.images[i], k));
                out.labels.push_back(k);
                out.names.push_back(split.names.empty() ? std::to_string(i) : split.names[i] + "@rot" + std::to_string(90 * k));
            }
        return out;
    }

    TrainResult pretrain_rotation(const NetworkSpec &backbone, const LoadedSplit &train, const LoadedSplit &val, const TrainConfig &config)
    {
        if (backbone.num_classes != 4)
            fail(ErrorCode::Config, "rotation pretext needs a 4-class head, got " + std::to_string(backbone.num_classes));
        if (!backbone.aux.empty())
            fail(ErrorCode::Config, "rotation pretext expects a network without aux branches");
        TrainConfig cfg = config;
        cfg.augment_options.flip = false;
        return train_model(init_model(backbone, config.seed), rotation_split(train), rotation_split(val), cfg);
    }

    std::string history_to_csv(const std::vector<EpochRecord> &history)
    {
        std::ostringstream out;
        out << "epoch,loss,main_loss,aux_loss,val_auc,val_acc,val_sen,val_spe,best\n";
        char row[256];
        for (const auto &r : history)
        {
            std::snprintf(row, sizeof row, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d\n", r.epoch, r.loss, r.main_loss, r.aux_loss, r.val.auc, r.val.accuracy,
                    r.val.sensitivity, r.val.specificity, r.best ? 1 : 0);
            out << row;
        }
        return out.str();
    }
}

#include "rfsv/ablation.hpp"
#include "rfsv/error.hpp"
#include "rfsv/planner.hpp"

#include <cstdio>
#include <sstream>

namespace rfsv
{
    std::vector<AblationChoice> default_ablation_choices(int planner_ordinal)
    {
        std::vector<AblationChoice> choices;
        choices.push_back({ "no-ds", {}, true });
        choices.push_back({ "planner", { planner_ordinal }, true });
        if (planner_ordinal > 1)
        {
            choices.push_back({ "shallower", { planner_ordinal - 1 }, true });
            choices.push_back({ "joint", { planner_ordinal - 1, planner_ordinal }, true });
        }
        choices.push_back({ "no-supermodel-init", { planner_ordinal }, false });
        return choices;
    }

    std::vector<AblationRow> ablation_run(const AblationSetup &setup, const LoadedSplit &train, const LoadedSplit &val, const LoadedSplit &report,
            const std::vector<AblationChoice> &choices)
    {
        if (!setup.backbone.aux.empty())
            fail(ErrorCode::Config, "ablation backbone must not carry aux branches");
        std::vector<AblationRow> rows;
        for (const auto &choice : choices)
        {
            if (choice.transfer && !setup.base)
                fail(ErrorCode::Config, "choice '" + choice.name + "' needs a base checkpoint");
            NetworkSpec net = setup.backbone;
            std::string ds;
            for (int ordinal : choice.layers)
            {
                net = attach_aux(net, ordinal, setup.aux_type);
                ds += (ds.empty() ? "" : "&") + net.label(ordinal);
            }
            const Model init = initial_model(net, setup.train.seed, choice.transfer ? setup.base : nullptr);
            const TrainResult result = train_model(init, train, val, setup.train);

            AblationRow row;
            row.choice = choice;
            row.backbone = setup.backbone.arch == "vgg13" ? "VGG13" : setup.backbone.arch == "resnet18" ? "ResNet18" : setup.backbone.arch;
            row.classifier = setup.backbone.head == HeadType::ResNet ? "R" : "V";
            row.ds = ds.empty() ? "-" : ds;
            row.metrics = evaluate(result.best, report, -1, setup.train.eval_batch);
            row.best_epoch = result.best_epoch;
            rows.push_back(row);
        }
        return rows;
    }

    std::string ablation_to_csv(const std::vector<AblationRow> &rows)
    {
        std::ostringstream out;
        out << "Backbone,C,DS,TL,AUC,Acc,Sen,Spe\n";
        char buf[160];
        for (const auto &r : rows)
        {
            std::snprintf(buf, sizeof buf, ",%.4f,%.4f,%.4f,%.4f\n", r.metrics.auc, r.metrics.accuracy, r.metrics.sensitivity, r.metrics.specificity);
            out << r.backbone << "," << r.classifier << "," << r.ds << "," << (r.choice.transfer ? "Y" : "N") << buf;
        }
        return out.str();
    }
}

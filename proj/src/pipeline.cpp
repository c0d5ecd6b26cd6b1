#include "rfsv/pipeline.hpp"
#include "rfsv/checkpoint.hpp"
#include "rfsv/error.hpp"
#include "rfsv/netzoo.hpp"

#include <fstream>

namespace rfsv
{
    namespace
    {
        void write_text(const std::filesystem::path &path, const std::string &text)
        {
            std::ofstream out(path, std::ios::trunc);
            if (!out || !(out << text))
                fail(ErrorCode::Io, "cannot write " + path.string());
        }
    }

    PipelineResult run_pipeline(const std::filesystem::path &workdir, const PipelineConfig &config)
    {
        auto log = [&](const std::string &msg) {
            if (config.log)
                config.log(msg);
        };
        std::filesystem::create_directories(workdir);
        PipelineResult r;
        r.corpus = synth_dataset(workdir / "data", config.synth);
        const LoadedSplit train = load_split(r.corpus.spec, "train");
        const LoadedSplit val = load_split(r.corpus.spec, "val");

        BuildOptions opts;
        opts.scale = config.scale;
        opts.input_h = opts.input_w = config.synth.image_size;
        opts.num_classes = 4;
        const NetworkSpec pretext_net = build_network(config.arch, opts);
        opts.num_classes = 2;
        const NetworkSpec backbone = build_network(config.arch, opts);

        TrainConfig pre = config.train;
        pre.epochs = config.pretext_epochs;
        pre.selection = SelectionMetric::Accuracy;
        pre.on_epoch = nullptr;
        if (config.pretext_model)
        {
            r.pretext.best = *config.pretext_model;
        }
        else
        {
            log("pretext");
            r.pretext = pretrain_rotation(pretext_net, train, val, pre);
        }
        save_model(workdir / "pretext.rfsv", r.pretext.best);

        log("baseline");
        r.baseline = train_model(initial_model(backbone, config.train.seed, &r.pretext.best), train, val, config.train);
        save_model(workdir / "baseline.rfsv", r.baseline.best);
        r.baseline_val = evaluate(r.baseline.best, val);

        std::vector<Tensor> obj_inputs;
        const std::size_t n_obj = config.obj_images > 0 ? std::min<std::size_t>(train.size(), static_cast<std::size_t>(config.obj_images)) : train.size();
        for (std::size_t i = 0; i < n_obj; i++)
            obj_inputs.push_back(normalize_input(train.images[i]));
        r.obj = estimate_obj(r.baseline.best, obj_inputs);

        if (config.profile)
        {
            r.profile = *config.profile;
        }
        else
        {
            log("lerf");
            r.profile = lerf_profile(backbone, config.lerf);
        }
        write_text(workdir / "lerf.csv", profile_to_csv(r.profile));
        r.plan = make_plan(backbone, r.profile, r.obj.obj, config.aux_type);
        write_text(workdir / "plan.txt", plan_to_text(r.plan));

        log("supervised at " + r.plan.target_label);
        TrainConfig ds = config.train;
        ds.weight_main = r.plan.weight_main;
        ds.weight_aux = r.plan.weight_aux;
        r.supervised = train_model(initial_model(attach_aux(backbone, r.plan), config.train.seed, &r.pretext.best), train, val, ds);
        save_model(workdir / "supervised.rfsv", r.supervised.best);
        r.supervised_val = evaluate(r.supervised.best, val);
        return r;
    }
}

#include "rfsv/ablation.hpp"
#include "rfsv/cam.hpp"
#include "rfsv/checkpoint.hpp"
#include "rfsv/dataset.hpp"
#include "rfsv/error.hpp"
#include "rfsv/image_io.hpp"
#include "rfsv/lerf.hpp"
#include "rfsv/netzoo.hpp"
#include "rfsv/planner.hpp"
#include "rfsv/resize.hpp"
#include "rfsv/train.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace rfsv;

namespace
{
    constexpr const char *tool_version = "rfsv 1.0.0";

    std::string read_text(const fs::path &path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            fail(ErrorCode::Io, "cannot read " + path.string());
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    void write_text(const fs::path &path, const std::string &text)
    {
        if (path.has_parent_path())
            fs::create_directories(path.parent_path());
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out || !(out << text))
            fail(ErrorCode::Io, "cannot write " + path.string());
    }

    std::string format_value(double v)
    {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return buf;
    }

    std::string format_value(bool v)
    {
        return v ? "true" : "false";
    }

    template<typename T>
    std::string format_value(const T &v)
    {
        if constexpr (std::is_same_v<T, std::string>)
            return v;
        else if constexpr (std::is_same_v<T, fs::path>)
            return v.string();
        else
            return std::to_string(v);
    }

    /// Options of one subcommand in declaration order, echoed into the manifest.
    struct Registry
    {
        std::vector<std::pair<std::string, std::function<std::string()>>> echo;
        std::vector<fs::path*> paths;

        template<typename T>
        CLI::Option* add(CLI::App *app, const std::string &name, T &var, const std::string &help)
        {
            echo.emplace_back(name, [&var] {
                return format_value(var);
            });
            if constexpr (std::is_same_v<T, fs::path>)
                paths.push_back(&var);
            if constexpr (std::is_same_v<T, bool>)
                return app->add_flag("--" + name, var, help);
            else
                return app->add_option("--" + name, var, help);
        }

        void resolve_paths()
        {
            for (fs::path *p : paths)
                if (!p->empty())
                    *p = fs::absolute(*p).lexically_normal();
        }

        std::string manifest(const std::string &subcommand) const
        {
            std::string text = "# rfsv run manifest\nversion=" + std::string(tool_version) + "\nsubcommand=" + subcommand + "\n";
            for (const auto &[name, get] : echo)
                text += name + "=" + get() + "\n";
            return text;
        }
    };

    /// Network geometry shared by several subcommands.
    struct NetOptions
    {
        std::string arch = "vgg13";
        double scale = 0.25;
        int size = 224;
        std::string head = "resnet";

        void add(CLI::App *app, Registry &reg)
        {
            reg.add(app, "arch", arch, "vgg13 or resnet18");
            reg.add(app, "scale", scale, "channel width multiplier: 1, 0.5 or 0.25");
            reg.add(app, "size", size, "square input side in pixels");
            reg.add(app, "head", head, "main classifier type: resnet or vgg");
        }

        NetworkSpec build(int classes) const
        {
            BuildOptions o;
            o.num_classes = classes;
            o.scale = scale;
            o.input_h = o.input_w = size;
            o.head = parse_head(head);
            return build_network(arch, o);
        }
    };

    struct TrainOptions
    {
        int epochs = 100;
        int batch = 16;
        double lr = 2e-5;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        std::uint64_t seed = 0;
        bool augment = true;
        double crop_min = 0.6;
        std::string select = "auc";

        void add(CLI::App *app, Registry &reg)
        {
            reg.add(app, "epochs", epochs, "training epochs");
            reg.add(app, "batch", batch, "mini-batch size");
            reg.add(app, "lr", lr, "Adam learning rate");
            reg.add(app, "beta1", beta1, "Adam beta1");
            reg.add(app, "beta2", beta2, "Adam beta2");
            reg.add(app, "eps", eps, "Adam epsilon");
            reg.add(app, "seed", seed, "random seed");
            reg.add(app, "augment", augment, "random flip and crop (use --augment=false to disable)");
            reg.add(app, "crop-min", crop_min, "smallest crop area fraction");
            reg.add(app, "select", select, "checkpoint selection metric: auc or accuracy");
        }

        TrainConfig config() const
        {
            TrainConfig c;
            c.epochs = epochs;
            c.batch_size = batch;
            c.adam.lr = lr;
            c.adam.beta1 = beta1;
            c.adam.beta2 = beta2;
            c.adam.eps = eps;
            c.seed = seed;
            c.augment = augment;
            c.augment_options.min_area = crop_min;
            c.selection = parse_selection_metric(select);
            return c;
        }
    };

    void require(bool ok, const std::string &msg)
    {
        if (!ok)
            fail(ErrorCode::Config, msg);
    }

    double read_obj(const std::string &arg)
    {
        double value = 0.0;
        std::string text = arg;
        if (fs::exists(arg))
        {
            text.clear();
            std::istringstream in(read_text(arg));
            std::string line;
            while (std::getline(in, line))
                if (line.rfind("obj=", 0) == 0)
                    text = line.substr(4);
            require(!text.empty(), "obj file " + arg + " has no obj= line");
        }
        try
        {
            std::size_t used = 0;
            value = std::stod(text, &used);
            require(used == text.size(), "bad obj value '" + text + "'");
        }
        catch (const std::logic_error&)
        {
            fail(ErrorCode::Config, "bad obj value '" + text + "'");
        }
        if (!(value > 0.0))
            fail(ErrorCode::Config, "obj must be positive");
        return value;
    }

    std::vector<std::pair<std::string, std::string>> read_key_values(const fs::path &path)
    {
        std::vector<std::pair<std::string, std::string>> kv;
        std::istringstream in(read_text(path));
        std::string line;
        int lineno = 0;
        while (std::getline(in, line))
        {
            lineno++;
            if (!line.empty() && line.back() == '\r')
                line.pop_back();
            if (line.empty() || line[0] == '#')
                continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos || eq == 0)
                fail(ErrorCode::Config, path.string() + ":" + std::to_string(lineno) + ": expected key=value");
            kv.emplace_back(line.substr(0, eq), line.substr(eq + 1));
        }
        return kv;
    }

    void write_map_dump(const fs::path &path, const Tensor &image, const ActivationMap &map, const ObjectMask *mask)
    {
        Tensor out = overlay_heatmap(image, map.upsampled);
        if (mask)
        {
            draw_box(out, mask->bbox.top, mask->bbox.left, mask->bbox.height, mask->bbox.width, 1.0f, 1.0f, 1.0f);
            draw_box(out, mask->central_bbox.top, mask->central_bbox.left, mask->central_bbox.height, mask->central_bbox.width, 1.0f, 0.0f, 0.0f);
        }
        write_pnm(path, out);
    }

    // ---------------------------------------------------------------- commands

    struct SynthCmd
    {
        fs::path out;
        SynthParams p;

        void add(CLI::App *app, Registry &reg)
        {
            reg.add(app, "out", out, "output dataset directory")->required();
            reg.add(app, "n", p.n, "number of images");
            reg.add(app, "seed", p.seed, "random seed");
            reg.add(app, "size", p.image_size, "image side in pixels");
            reg.add(app, "radius-min", p.radius_min, "smallest planted lesion radius");
            reg.add(app, "radius-max", p.radius_max, "largest planted lesion radius");
            reg.add(app, "contrast", p.contrast, "lesion colour weight");
            reg.add(app, "train-frac", p.train_fraction, "fraction of each class in train");
            reg.add(app, "val-frac", p.val_fraction, "fraction of each class in val");
        }

        fs::path manifest() const
        {
            return out / "manifest.txt";
        }

        void run() const
        {
            const SynthResult r = synth_dataset(out, p);
            std::printf("synth: %zu train, %zu val, %zu test, mean planted diameter %.3f\n", r.spec.train.size(), r.spec.val.size(), r.spec.test.size(),
                    r.mean_diameter());
        }
    };

    struct TrainCmd
    {
        fs::path data;
        fs::path out;
        fs::path plan;
        fs::path base;
        std::string init = "random";
        std::string pretext = "none";
        NetOptions net;
        TrainOptions train;

        void add(CLI::App *app, Registry &reg)
        {
            reg.add(app, "data", data, "dataset root")->required();
            reg.add(app, "out", out, "output directory")->required();
            net.add(app, reg);
            train.add(app, reg);
            reg.add(app, "plan", plan, "supervision plan; adds the aux branch it names");
            reg.add(app, "init", init, "random or supermodel");
            reg.add(app, "base", base, "base checkpoint for supermodel init");
            reg.add(app, "pretext", pretext, "none, or rotation for rotation-prediction pretraining");
        }

        fs::path manifest() const
        {
            return out / "manifest.txt";
        }

        void run() const
        {
            const DatasetSpec spec = load_dataset_spec(data, net.size);
            const LoadedSplit tr = load_split(spec, "train");
            const LoadedSplit va = load_split(spec, "val");
            TrainConfig cfg = train.config();
            cfg.on_epoch = [](const EpochRecord &e) {
                std::printf("epoch %d loss %.6f val_auc %.4f val_acc %.4f%s\n", e.epoch, e.loss, e.val.auc, e.val.accuracy, e.best ? " *" : "");
                std::fflush(stdout);
            };

            TrainResult result;
            if (pretext == "rotation")
            {
                require(plan.empty(), "--plan cannot be combined with --pretext rotation");
                cfg.selection = SelectionMetric::Accuracy;
                result = pretrain_rotation(net.build(4), tr, va, cfg);
            }
            else
            {
                require(pretext == "none", "unknown pretext '" + pretext + "' (expected none or rotation)");
                NetworkSpec spec_net = net.build(spec.num_classes);
                if (!plan.empty())
                {
                    const SupervisionPlan sp = parse_plan(read_text(plan));
                    require(sp.arch == spec_net.arch, "plan targets " + sp.arch + " but --arch is " + spec_net.arch);
                    spec_net = attach_aux(spec_net, sp);
                    cfg.weight_main = sp.weight_main;
                    cfg.weight_aux = sp.weight_aux;
                }
                std::optional<Model> base_model;
                if (init == "supermodel")
                {
                    require(!base.empty(), "--init supermodel needs --base");
                    base_model = load_model(base);
                }
                else
                    require(init == "random", "unknown init '" + init + "' (expected random or supermodel)");
                result = train_model(initial_model(spec_net, train.seed, base_model ? &*base_model : nullptr), tr, va, cfg);
            }
            fs::create_directories(out);
            save_model(out / "best.rfsv", result.best);
            write_text(out / "history.csv", history_to_csv(result.history));
            const EpochRecord &best = result.history[static_cast<std::size_t>(result.best_epoch - 1)];
            write_text(out / "metrics.txt", "split=val\nbest_epoch=" + std::to_string(result.best_epoch) + "\n" + metrics_to_text(best.val) + "\n");
            std::printf("best epoch %d: %s\n", result.best_epoch, metrics_to_text(best.val).c_str());
        }
    };

    struct LerfCmd
    {
        fs::path out;
        fs::path maps;
        NetOptions net;
        int iters = 20;
        std::uint64_t seed = 0;
        double threshold = default_lerf_threshold;
        bool linear = false;
        bool positive = false;

        void add(CLI::App *app, Registry &reg)
        {
            reg.add(app, "out", out, "output CSV")->required();
            net.add(app, reg);
            reg.add(app, "iters", iters, "random re-initialisations averaged");
            reg.add(app, "seed", seed, "random seed");
            reg.add(app, "threshold", threshold, "activity threshold relative to the peak");
            reg.add(app, "linear", linear, "identity activations and average pooling");
            reg.add(app, "positive", positive, "use absolute values of the drawn conv weights");
            reg.add(app, "maps", maps, "directory for PGM dumps of the last iteration's maps");
        }

        fs::path manifest() const
        {
            return out.string() + ".manifest";
        }

        void run() const
        {
            LerfOptions o;
            o.iterations = iters;
            o.seed = seed;
            o.threshold = threshold;
            o.linear = linear;
            o.positive_weights = positive;
            std::vector<std::pair<int, Tensor>> last;
            if (!maps.empty())
                o.last_maps = &last;
            const NetworkSpec spec = net.build(2);
            const LerfProfile profile = lerf_profile(spec, o);
            write_text(out, profile_to_csv(profile));
            if (!maps.empty())
            {
                fs::create_directories(maps);
                for (const auto &[ordinal, map] : last)
                    write_pnm(maps / ("lerf_" + spec.label(ordinal) + ".pgm"), map);
            }
            for (const auto &e : profile.entries)
                std::printf("%-5s rf %4d lerf %8.3f\n", e.label.c_str(), e.theoretical_rf, e.lerf_size);
        }
    };

    struct CamCmd
    {
        fs::path model;
        fs::path data;
        fs::path out;
        std::string split = "train";
        int limit = 0;
        int aux = -1;
        int dump = 0;

        void add(CLI::App *app, Registry &reg)
        {
            reg.add(app, "model", model, "trained checkpoint")->required();
            reg.add(app, "data", data, "dataset root")->required();
            reg.add(app, "out", out, "output directory")->required();
            reg.add(app, "split", split, "split to map");
            reg.add(app, "limit", limit, "use only the first N images (0 = all)");
            reg.add(app, "aux", aux, "aux branch index whose weights build the map (-1 = main head)");
            reg.add(app, "dump", dump, "write overlays for the first N images");
        }

        fs::path manifest() const
        {
            return out / "manifest.txt";
        }

        void run() const
        {
            const Model m = load_model(model);
            const DatasetSpec spec = load_dataset_spec(data, m.spec.input_h, m.spec.num_classes);
            std::vector<Sample> samples = spec.split(split);
            if (limit > 0 && static_cast<std::size_t>(limit) < samples.size())
                samples.resize(static_cast<std::size_t>(limit));
            const LoadedSplit images = load_samples(spec, samples);
            if (images.size() == 0)
                fail(ErrorCode::Data, "split '" + split + "' is empty");
            std::vector<Tensor> inputs;
            for (const auto &img : images.images)
                inputs.push_back(normalize_input(img));
            const HeadSelector head { aux };
            const ObjEstimate est = estimate_obj(m, inputs, head);

            fs::create_directories(out);
            std::ostringstream csv;
            csv << "image,top,left,height,width,size\n";
            char row[128];
            for (std::size_t i = 0; i < images.size(); i++)
            {
                const ObjectMask &mk = est.masks[i];
                std::snprintf(row, sizeof row, ",%d,%d,%d,%d,%.6f\n", mk.bbox.top, mk.bbox.left, mk.bbox.height, mk.bbox.width, est.per_image_sizes[i]);
                csv << images.names[i] << row;
            }
            write_text(out / "cam.csv", csv.str());
            char obj[128];
            std::snprintf(obj, sizeof obj, "obj=%.6f\nimages=%d\nskipped=%d\n", est.obj, est.n_images, est.skipped);
            write_text(out / "obj.txt", obj);
            for (int i = 0; i < dump && static_cast<std::size_t>(i) < images.size(); i++)
            {
                const ActivationMap am = predicted_activation_map(m, inputs[static_cast<std::size_t>(i)], head);
                const ObjectMask *mk = est.per_image_sizes[static_cast<std::size_t>(i)] >= 0.0 ? &est.masks[static_cast<std::size_t>(i)] : nullptr;
                write_map_dump(out / ("cam_" + fs::path(images.names[static_cast<std::size_t>(i)]).stem().string() + ".ppm"),
                        images.images[static_cast<std::size_t>(i)], am, mk);
            }
            std::printf("obj %.4f over %d images (%d skipped)\n", est.obj, est.n_images, est.skipped);
        }
    };

    struct PlanCmd
    {
        fs::path lerf;
        std::string obj;
        fs::path out;
        NetOptions net;
        std::string aux_type = "resnet";

        void add(CLI::App *app, Registry &reg)
        {
            reg.add(app, "lerf", lerf, "LERF profile CSV")->required();
            reg.add(app, "obj", obj, "obj.txt from the cam command, or a number")->required();
            reg.add(app, "out", out, "output plan file")->required();
            net.add(app, reg);
            reg.add(app, "aux-type", aux_type, "aux classifier type: resnet or vgg");
        }

        fs::path manifest() const
        {
            return out.string() + ".manifest";
        }

        void run()
        {
            if (fs::exists(obj))
                obj = fs::absolute(obj).lexically_normal().string();
            const double value = read_obj(obj);
            const NetworkSpec spec = net.build(2);
            LerfProfile profile = profile_from_csv(read_text(lerf));
            for (auto &e : profile.entries)
                e.ordinal = spec.resolve(e.label);
            const SupervisionPlan p = make_plan(spec, profile, value, parse_head(aux_type));
            write_text(out, plan_to_text(p));
            std::printf("target %s (lerf %.3f, obj %.3f)\n", p.target_label.c_str(), p.lerf_at_target, p.obj);
        }
    };

    struct EvalCmd
    {
        fs::path model;
        fs::path data;
        fs::path out;
        std::string split = "test";
        int aux = -1;

        void add(CLI::App *app, Registry &reg)
        {
            reg.add(app, "model", model, "checkpoint")->required();
            reg.add(app, "data", data, "dataset root")->required();
            reg.add(app, "out", out, "output metrics file")->required();
            reg.add(app, "split", split, "split to score");
            reg.add(app, "aux", aux, "score aux branch i instead of the main head (-1)");
        }

        fs::path manifest() const
        {
            return out.string() + ".manifest";
        }

        void run() const
        {
            const Model m = load_model(model);
            const DatasetSpec spec = load_dataset_spec(data, m.spec.input_h, m.spec.num_classes);
            const LoadedSplit s = load_split(spec, split);
            const Metrics metrics = evaluate(m, s, aux);
            write_text(out, "split=" + split + "\n" + metrics_to_text(metrics) + "\n");
            std::printf("%s\n", metrics_to_text(metrics).c_str());
        }
    };

    struct AblateCmd
    {
        fs::path data;
        fs::path base;
        fs::path plan;
        fs::path out;
        std::string layer;
        std::string split = "test";
        std::string aux_type = "resnet";
        NetOptions net;
        TrainOptions train;

        void add(CLI::App *app, Registry &reg)
        {
            reg.add(app, "data", data, "dataset root")->required();
            reg.add(app, "out", out, "output directory")->required();
            reg.add(app, "base", base, "pretrained checkpoint for the transfer rows")->required();
            reg.add(app, "plan", plan, "plan naming the planner layer");
            reg.add(app, "layer", layer, "planner layer handle when no plan is given");
            reg.add(app, "split", split, "split the report is scored on");
            reg.add(app, "aux-type", aux_type, "aux classifier type: resnet or vgg");
            net.add(app, reg);
            train.add(app, reg);
        }

        fs::path manifest() const
        {
            return out / "manifest.txt";
        }

        void run() const
        {
            require(plan.empty() != layer.empty(), "give exactly one of --plan and --layer");
            const DatasetSpec spec = load_dataset_spec(data, net.size);
            AblationSetup setup;
            setup.backbone = net.build(spec.num_classes);
            setup.aux_type = parse_head(aux_type);
            setup.train = train.config();
            const int ordinal = plan.empty() ? setup.backbone.resolve(layer) : parse_plan(read_text(plan)).target_layer;
            const Model base_model = load_model(base);
            setup.base = &base_model;
            const auto rows = ablation_run(setup, load_split(spec, "train"), load_split(spec, "val"), load_split(spec, split),
                    default_ablation_choices(ordinal));
            fs::create_directories(out);
            write_text(out / "ablation.csv", ablation_to_csv(rows));
            std::printf("%s", ablation_to_csv(rows).c_str());
        }
    };

    struct ReportCmd
    {
        fs::path out;
        fs::path history;
        fs::path ablation;
        fs::path baseline;
        fs::path supervised;
        fs::path image;

        void add(CLI::App *app, Registry &reg)
        {
            reg.add(app, "out", out, "output directory")->required();
            reg.add(app, "history", history, "history.csv from train");
            reg.add(app, "ablation", ablation, "ablation.csv from ablate");
            reg.add(app, "baseline", baseline, "checkpoint trained without deep supervision");
            reg.add(app, "supervised", supervised, "checkpoint trained with deep supervision");
            reg.add(app, "image", image, "PPM image for the activation-map figure");
        }

        fs::path manifest() const
        {
            return out / "manifest.txt";
        }

        void run() const
        {
            require(!history.empty() || !ablation.empty() || !image.empty(), "report needs --history, --ablation or --image");
            fs::create_directories(out);
            std::ostringstream summary;
            if (!history.empty())
            {
                std::istringstream in(read_text(history));
                std::string line;
                std::getline(in, line);
                int rows = 0, best_epoch = 0;
                double best_auc = 0.0, last_loss = 0.0, first_loss = 0.0;
                while (std::getline(in, line))
                {
                    if (line.empty())
                        continue;
                    std::vector<std::string> f;
                    std::istringstream fields(line);
                    for (std::string cell; std::getline(fields, cell, ',');)
                        f.push_back(cell);
                    if (f.size() != 9)
                        fail(ErrorCode::Data, "history row has " + std::to_string(f.size()) + " fields, expected 9");
                    rows++;
                    last_loss = std::stod(f[1]);
                    if (rows == 1)
                        first_loss = last_loss;
                    if (f[8] == "1")
                    {
                        best_epoch = std::stoi(f[0]);
                        best_auc = std::stod(f[4]);
                    }
                }
                if (rows == 0)
                    fail(ErrorCode::Config, "history " + history.string() + " is empty");
                char buf[200];
                std::snprintf(buf, sizeof buf, "epochs=%d\nfirst_loss=%.6f\nlast_loss=%.6f\nbest_epoch=%d\nbest_val_auc=%.6f\n", rows, first_loss,
                        last_loss, best_epoch, best_auc);
                summary << buf;
            }
            if (!ablation.empty())
            {
                const std::string table = read_text(ablation);
                if (table.rfind("Backbone,C,DS,TL,AUC,Acc,Sen,Spe", 0) != 0)
                    fail(ErrorCode::Data, ablation.string() + " is not an ablation table");
                std::istringstream in(table);
                std::string line;
                std::ostringstream pretty;
                int rows = -1;
                while (std::getline(in, line))
                {
                    if (line.empty())
                        continue;
                    std::istringstream fields(line);
                    for (std::string cell; std::getline(fields, cell, ',');)
                    {
                        char cellbuf[32];
                        std::snprintf(cellbuf, sizeof cellbuf, "%-10s", cell.c_str());
                        pretty << cellbuf;
                    }
                    pretty << "\n";
                    rows++;
                }
                write_text(out / "ablation.txt", pretty.str());
                summary << "ablation_rows=" << rows << "\n";
            }
            if (!image.empty())
            {
                require(!baseline.empty() && !supervised.empty(), "--image needs --baseline and --supervised");
                const Model base_m = load_model(baseline);
                const Model ds_m = load_model(supervised);
                require(!ds_m.spec.aux.empty(), "supervised checkpoint has no aux branch");
                Tensor img = read_pnm(image);
                if (img.shape().h != base_m.spec.input_h || img.shape().w != base_m.spec.input_w)
                    img = bicubic_resize(img, base_m.spec.input_h, base_m.spec.input_w);
                const Tensor input = normalize_input(img);
                const ActivationMap a = predicted_activation_map(base_m, input);
                const ActivationMap b = predicted_activation_map(ds_m, input);
                const ActivationMap c = predicted_activation_map(ds_m, input, HeadSelector::aux(0));
                write_map_dump(out / "map_no_ds.ppm", img, a, nullptr);
                write_map_dump(out / "map_ds_main.ppm", img, b, nullptr);
                write_map_dump(out / "map_ds_aux.ppm", img, c, nullptr);
                summary << "maps=3\n";
            }
            write_text(out / "summary.txt", summary.str());
            std::printf("%s", summary.str().c_str());
        }
    };

    int run(std::vector<std::string> args);

    int rerun(const fs::path &manifest, const std::vector<std::string> &overrides)
    {
        std::string subcommand;
        std::vector<std::pair<std::string, std::string>> options;
        for (auto &[k, v] : read_key_values(manifest))
        {
            if (k == "version")
            {
                if (v != tool_version)
                    std::fprintf(stderr, "warning: manifest written by %s, running %s\n", v.c_str(), tool_version);
            }
            else if (k == "subcommand")
                subcommand = v;
            else
                options.emplace_back(k, v);
        }
        require(!subcommand.empty(), manifest.string() + " names no subcommand");
        for (const auto &o : overrides)
        {
            const auto eq = o.find('=');
            require(eq != std::string::npos && eq > 0, "override '" + o + "' is not key=value");
            const std::string key = o.substr(0, eq);
            bool found = false;
            for (auto &[k, v] : options)
                if (k == key)
                {
                    v = o.substr(eq + 1);
                    found = true;
                }
            require(found, "override key '" + key + "' is not in the manifest");
        }
        std::vector<std::string> args { "rfsv", subcommand };
        for (const auto &[k, v] : options)
            if (!v.empty())
                args.push_back("--" + k + "=" + v);
        return run(args);
    }

    int run(std::vector<std::string> args)
    {
        CLI::App app { "Receptive-field guided deep supervision toolkit", "rfsv" };
        app.set_version_flag("--version", tool_version);
        app.require_subcommand(1);
        app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

        SynthCmd synth;
        TrainCmd train;
        LerfCmd lerf;
        CamCmd cam;
        PlanCmd plan;
        EvalCmd eval;
        AblateCmd ablate;
        ReportCmd report;
        std::map<std::string, Registry> regs;
        std::map<std::string, std::function<void()>> runners;
        std::map<std::string, std::function<fs::path()>> manifests;

        auto bind = [&](auto &cmd, const std::string &name, const std::string &help) {
            CLI::App *sub = app.add_subcommand(name, help);
            cmd.add(sub, regs[name]);
            sub->add_option("--config", "key=value file; command-line flags win");
            runners[name] = [&cmd] {
                cmd.run();
            };
            manifests[name] = [&cmd] {
                return cmd.manifest();
            };
            return sub;
        };
        bind(synth, "synth", "generate the synthetic lesion corpus");
        bind(train, "train", "train a classifier, optionally deeply supervised");
        bind(lerf, "lerf", "layer-wise effective receptive field profile");
        bind(cam, "cam", "class-activation object sizes and obj");
        bind(plan, "plan", "choose the supervision layer");
        bind(eval, "eval", "score a checkpoint on a split");
        bind(ablate, "ablate", "train the ablation set and tabulate it");
        bind(report, "report", "summaries and activation-map figures");

        fs::path rerun_manifest;
        std::vector<std::string> rerun_overrides;
        CLI::App *rerun_cmd = app.add_subcommand("rerun", "re-execute a run from its manifest");
        rerun_cmd->add_option("manifest", rerun_manifest, "manifest file")->required();
        rerun_cmd->add_option("--set", rerun_overrides, "key=value override, repeatable")->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);

        // Config-file values go in front of the command-line flags, so the flags win.
        if (args.size() >= 2 && runners.count(args[1]))
        {
            for (std::size_t i = 2; i < args.size(); i++)
            {
                fs::path config;
                if (args[i] == "--config" && i + 1 < args.size())
                    config = args[i + 1];
                else if (args[i].rfind("--config=", 0) == 0)
                    config = args[i].substr(9);
                if (config.empty())
                    continue;
                std::vector<std::string> injected;
                for (const auto &[k, v] : read_key_values(config))
                    injected.push_back("--" + k + "=" + v);
                args.insert(args.begin() + 2, injected.begin(), injected.end());
                break;
            }
        }

        std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
        try
        {
            app.parse(reversed);
        }
        catch (const CLI::CallForHelp &e)
        {
            return app.exit(e);
        }
        catch (const CLI::CallForAllHelp &e)
        {
            return app.exit(e);
        }
        catch (const CLI::CallForVersion &e)
        {
            return app.exit(e);
        }
        catch (const CLI::ParseError &e)
        {
            fail(ErrorCode::Config, e.what());
        }

        if (rerun_cmd->parsed())
            return rerun(rerun_manifest, rerun_overrides);
        for (auto &[name, runner] : runners)
        {
            if (!app.got_subcommand(name))
                continue;
            Registry &reg = regs[name];
            reg.resolve_paths();
            runner();
            write_text(manifests[name](), reg.manifest(name));
            return 0;
        }
        return 0;
    }
}

int main(int argc, char **argv)
{
    try
    {
        return run(std::vector<std::string>(argv, argv + argc));
    }
    catch (const rfsv::Error &e)
    {
        const std::string_view tag = error_tag(e.code());
        std::fprintf(stderr, "%.*s: %s\n", static_cast<int>(tag.size()), tag.data(), e.what());
        return exit_status(e.code());
    }
    catch (const fs::filesystem_error &e)
    {
        std::fprintf(stderr, "E_IO: %s\n", e.what());
        return exit_status(ErrorCode::Io);
    }
    catch (const std::exception &e)
    {
        std::fprintf(stderr, "E_DATA: %s\n", e.what());
        return exit_status(ErrorCode::Data);
    }
}

#include "rfsv/dataset.hpp"
#include "rfsv/error.hpp"
#include "rfsv/image_io.hpp"
#include "rfsv/resize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace rfsv
{
    const std::vector<Sample>& DatasetSpec::split(const std::string &name) const
    {
        if (name == "train")
            return train;
        if (name == "val")
            return val;
        if (name == "test")
            return test;
        fail(ErrorCode::Config, "unknown split '" + name + "' (expected train, val or test)");
    }

    std::vector<Sample> read_manifest(const std::filesystem::path &csv)
    {
        std::ifstream in(csv);
        if (!in)
            fail(ErrorCode::Io, "cannot open manifest " + csv.string());
        std::vector<Sample> samples;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line))
        {
            lineno++;
            if (!line.empty() && line.back() == '\r')
                line.pop_back();
            if (line.empty())
                continue;
            const auto comma = line.rfind(',');
            if (comma == std::string::npos)
                fail(ErrorCode::Data, csv.string() + ":" + std::to_string(lineno) + ": expected filename,label");
            const std::string name = line.substr(0, comma);
            const std::string label = line.substr(comma + 1);
            if (lineno == 1 && name == "filename")
                continue;
            std::size_t used = 0;
            int value = 0;
            try
            {
                value = std::stoi(label, &used);
            }
            catch (const std::exception&)
            {
                used = 0;
            }
            if (used == 0 || used != label.size() || name.empty())
                fail(ErrorCode::Data, csv.string() + ":" + std::to_string(lineno) + ": bad row '" + line + "'");
            samples.push_back({ name, value });
        }
        return samples;
    }

    void write_manifest(const std::filesystem::path &csv, const std::vector<Sample> &samples)
    {
        std::ofstream out(csv, std::ios::trunc);
        if (!out)
            fail(ErrorCode::Io, "cannot write " + csv.string());
        out << "filename,label\n";
        for (const auto &s : samples)
            out << s.filename << "," << s.label << "\n";
    }

    DatasetSpec load_dataset_spec(const std::filesystem::path &root, int image_size, int num_classes)
    {
        if (image_size < 32)
            fail(ErrorCode::Config, "image size must be at least 32, got " + std::to_string(image_size));
        DatasetSpec spec;
        spec.root = root;
        spec.image_h = spec.image_w = image_size;
        bool any = false;
        for (const char *name : { "train", "val", "test" })
        {
            const auto path = root / (std::string(name) + ".csv");
            if (!std::filesystem::exists(path))
                continue;
            any = true;
            auto samples = read_manifest(path);
            if (std::string(name) == "train")
                spec.train = std::move(samples);
            else if (std::string(name) == "val")
                spec.val = std::move(samples);
            else
                spec.test = std::move(samples);
        }
        if (!any)
            fail(ErrorCode::Data, "no split manifests under " + root.string());

        int max_label = 1;
        for (const auto *split : { &spec.train, &spec.val, &spec.test })
            for (const auto &s : *split)
            {
                if (s.label < 0)
                    fail(ErrorCode::Data, "negative label for " + s.filename);
                max_label = std::max(max_label, s.label);
            }
        spec.num_classes = num_classes > 0 ? num_classes : max_label + 1;
        if (spec.num_classes < 2)
            fail(ErrorCode::Config, "num_classes must be at least 2");
        if (max_label >= spec.num_classes)
            fail(ErrorCode::Data, "label " + std::to_string(max_label) + " out of range for " + std::to_string(spec.num_classes) + " classes");

        std::set<std::string> seen;
        for (const auto *split : { &spec.train, &spec.val, &spec.test })
        {
            std::set<std::string> here;
            for (const auto &s : *split)
            {
                if (seen.count(s.filename))
                    fail(ErrorCode::Data, "filename " + s.filename + " appears in more than one split");
                here.insert(s.filename);
            }
            seen.insert(here.begin(), here.end());
        }
        return spec;
    }

    LoadedSplit load_samples(const DatasetSpec &spec, const std::vector<Sample> &samples)
    {
        LoadedSplit out;
        out.images.reserve(samples.size());
        for (const auto &s : samples)
        {
            const auto path = spec.root / "images" / s.filename;
            if (path.extension() != ".ppm" && path.extension() != ".pgm")
                fail(ErrorCode::Data, "unsupported image format " + path.string() + " (PPM/PGM only)");
            Tensor img = read_pnm(path);
            if (img.shape().c == 1)
            {
                Tensor rgb(Shape { 1, 3, img.shape().h, img.shape().w });
                for (int c = 0; c < 3; c++)
                    std::copy_n(img.plane(0, 0), img.shape().plane(), rgb.plane(0, c));
                img = std::move(rgb);
            }
            if (img.shape().h != spec.image_h || img.shape().w != spec.image_w)
                img = bicubic_resize(img, spec.image_h, spec.image_w);
            out.images.push_back(std::move(img));
            out.labels.push_back(s.label);
            out.names.push_back(s.filename);
        }
        return out;
    }

    LoadedSplit load_split(const DatasetSpec &spec, const std::string &split)
    {
        return load_samples(spec, spec.split(split));
    }

    Tensor normalize_input(const Tensor &image)
    {
        Tensor out = image;
        for (float &v : out.values())
            v = (v - 0.5f) * 4.0f;
        return out;
    }

    Tensor make_batch(const std::vector<Tensor> &images)
    {
        if (images.empty())
            fail(ErrorCode::Data, "cannot build an empty batch");
        const Shape one = images.front().shape();
        Tensor batch(Shape { static_cast<int>(images.size()), one.c, one.h, one.w });
        const std::size_t stride = one.volume();
        for (std::size_t i = 0; i < images.size(); i++)
        {
            if (images[i].shape() != one)
                fail(ErrorCode::Shape, "batch images differ in shape: " + images[i].shape().str() + " vs " + one.str());
            const auto src = images[i].values();
            float *dst = batch.data() + i * stride;
            for (std::size_t k = 0; k < stride; k++)
                dst[k] = (src[k] - 0.5f) * 4.0f;
        }
        return batch;
    }

    double SynthResult::mean_diameter() const
    {
        double sum = 0.0;
        int n = 0;
        for (const auto &t : truth)
            if (t.label == 1)
            {
                sum += 2.0 * t.radius;
                n++;
            }
        return n ? sum / n : 0.0;
    }

    namespace
    {
        struct Wave
        {
            double fy, fx, phase, amp;
        };

        std::vector<Wave> draw_waves(Rng &rng, int count, double max_freq, double amp)
        {
            std::vector<Wave> waves;
            for (int i = 0; i < count; i++)
                waves.push_back({ rng.uniform(-max_freq, max_freq), rng.uniform(-max_freq, max_freq), rng.uniform(0.0, 2.0 * std::numbers::pi), amp * rng.uniform(
                        0.5, 1.0) });
            return waves;
        }

        double texture(const std::vector<Wave> &waves, double y, double x)
        {
            double v = 0.0;
            for (const auto &w : waves)
                v += w.amp * std::sin(w.fy * y + w.fx * x + w.phase);
            return v;
        }
    }

    Tensor render_lesion_image(int size, int label, Rng &rng, const SynthParams &params, PlantedLesion &planted)
    {
        const double skin[3] = { 0.86, 0.66, 0.56 };
        const double lesion[3] = { 0.42, 0.26, 0.20 };
        const double brightness = rng.uniform(-0.05, 0.05);
        const auto bg_waves = draw_waves(rng, 4, 0.25, 0.025);

        planted.label = label;
        planted.radius = 0.0;
        planted.cy = planted.cx = 0.0;
        double harm_amp[3] = {}, harm_phase[3] = {};
        std::vector<Wave> lesion_waves;
        if (label == 1)
        {
            planted.radius = rng.uniform(params.radius_min, params.radius_max);
            const double jitter = 0.08 * size;
            planted.cy = (size - 1) / 2.0 + rng.uniform(-jitter, jitter);
            planted.cx = (size - 1) / 2.0 + rng.uniform(-jitter, jitter);
            for (int k = 0; k < 3; k++)
            {
                harm_amp[k] = rng.uniform(0.0, 0.08);
                harm_phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
            }
            lesion_waves = draw_waves(rng, 3, 0.6, 0.05);
        }

        Tensor img(Shape { 1, 3, size, size });
        for (int y = 0; y < size; y++)
            for (int x = 0; x < size; x++)
            {
                const double base = brightness + texture(bg_waves, y, x);
                double alpha = 0.0;
                double inner = 0.0;
                if (label == 1)
                {
                    const double dy = y - planted.cy, dx = x - planted.cx;
                    const double d = std::sqrt(dy * dy + dx * dx);
                    const double theta = std::atan2(dy, dx);
                    double r = planted.radius;
                    for (int k = 0; k < 3; k++)
                        r *= 1.0 + harm_amp[k] * std::sin((k + 2) * theta + harm_phase[k]);
                    const double edge = 0.25 * planted.radius;
                    alpha = std::clamp((r - d) / edge + 0.5, 0.0, 1.0) * params.contrast;
                    inner = texture(lesion_waves, y, x);
                }
                for (int c = 0; c < 3; c++)
                {
                    const double bg = skin[c] + base;
                    const double fg = lesion[c] + inner;
                    const double v = (1.0 - alpha) * bg + alpha * fg + 0.02 * rng.normal();
                    img.at(0, c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
                }
            }
        return img;
    }

    SynthResult synth_dataset(const std::filesystem::path &root, const SynthParams &params)
    {
        if (params.n < 4)
            fail(ErrorCode::Config, "synth needs n >= 4, got " + std::to_string(params.n));
        if (params.image_size < 32)
            fail(ErrorCode::Config, "synth image size must be at least 32");
        if (!(params.radius_min > 0.0) || params.radius_max < params.radius_min)
            fail(ErrorCode::Config, "radius band must satisfy 0 < min <= max");
        if (params.train_fraction <= 0.0 || params.val_fraction <= 0.0 || params.train_fraction + params.val_fraction > 1.0)
            fail(ErrorCode::Config, "split fractions must be positive and sum to at most 1");

        std::filesystem::create_directories(root / "images");
        SynthResult result;
        result.spec.root = root;
        result.spec.image_h = result.spec.image_w = params.image_size;
        result.spec.num_classes = 2;

        std::vector<Sample> all;
        for (int i = 0; i < params.n; i++)
        {
            char name[32];
            std::snprintf(name, sizeof name, "img_%05d.ppm", i);
            const int label = i % 2;
            Rng rng(derive_seed(params.seed, static_cast<std::uint64_t>(i)));
            PlantedLesion planted;
            planted.filename = name;
            const Tensor img = render_lesion_image(params.image_size, label, rng, params, planted);
            write_pnm(root / "images" / name, img);
            result.truth.push_back(planted);
            all.push_back({ name, label });
        }

        // Stratified split so every split holds both classes.
        Rng shuffle(derive_seed(params.seed, 0x5B117));
        std::vector<Sample> by_class[2];
        for (const auto &s : all)
            by_class[s.label].push_back(s);
        for (auto &group : by_class)
        {
            for (std::size_t i = group.size(); i > 1; i--)
                std::swap(group[i - 1], group[shuffle.below(i)]);
            const std::size_t n_train = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(group.size() * params.train_fraction)));
            const std::size_t n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(group.size() * params.val_fraction)));
            for (std::size_t i = 0; i < group.size(); i++)
            {
                auto &dest = i < n_train ? result.spec.train : i < n_train + n_val ? result.spec.val : result.spec.test;
                dest.push_back(group[i]);
            }
        }
        auto by_name = [](const Sample &a, const Sample &b) {
            return a.filename < b.filename;
        };
        std::sort(result.spec.train.begin(), result.spec.train.end(), by_name);
        std::sort(result.spec.val.begin(), result.spec.val.end(), by_name);
        std::sort(result.spec.test.begin(), result.spec.test.end(), by_name);

        write_manifest(root / "train.csv", result.spec.train);
        write_manifest(root / "val.csv", result.spec.val);
        write_manifest(root / "test.csv", result.spec.test);

        std::ofstream truth(root / "truth.csv", std::ios::trunc);
        if (!truth)
            fail(ErrorCode::Io, "cannot write truth.csv");
        truth << "filename,label,radius,cy,cx\n";
        char row[160];
        for (const auto &t : result.truth)
        {
            std::snprintf(row, sizeof row, "%s,%d,%.6f,%.6f,%.6f\n", t.filename.c_str(), t.label, t.radius, t.cy, t.cx);
            truth << row;
        }
        return result;
    }
}

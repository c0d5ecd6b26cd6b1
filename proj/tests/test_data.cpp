#include "rfsv/augment.hpp"
#include "rfsv/dataset.hpp"
#include "rfsv/image_io.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace rfsv;
using namespace rfsv::testing;
namespace fs = std::filesystem;

namespace
{
    struct TempDir
    {
        fs::path path;

        explicit TempDir(const std::string &name) :
                path(fs::temp_directory_path() / name)
        {
            fs::remove_all(path);
            fs::create_directories(path);
        }
        ~TempDir()
        {
            fs::remove_all(path);
        }
    };

    std::string slurp(const fs::path &p)
    {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        return s.str();
    }

    void write_text(const fs::path &p, const std::string &text)
    {
        std::ofstream(p) << text;
    }

    SynthParams tiny(std::uint64_t seed)
    {
        SynthParams p;
        p.n = 24;
        p.seed = seed;
        p.image_size = 48;
        p.radius_min = 6;
        p.radius_max = 10;
        return p;
    }
}

TEST_CASE("PNM round trip and read errors")
{
    TempDir dir("rfsv_test_pnm");
    for (int channels : { 1, 3 })
    {
        const Tensor img = random_tensor({ 1, channels, 7, 5 }, 3, 0.0, 1.0);
        const fs::path p = dir.path / (channels == 1 ? "a.pgm" : "a.ppm");
        write_pnm(p, img);
        const Tensor back = read_pnm(p);
        REQUIRE(back.shape() == img.shape());
        CHECK(max_abs_diff(back, img) <= 0.5 / 255.0 + 1e-7);
        write_pnm(dir.path / "b.pnm", back);
        CHECK(read_pnm(dir.path / "b.pnm") == back);
    }
    CHECK(code_of([&] {
        read_pnm(dir.path / "missing.ppm");
    }) == ErrorCode::Io);
    write_text(dir.path / "junk.ppm", "P3\n2 2\n255\n0 0 0\n");
    CHECK(code_of([&] {
        read_pnm(dir.path / "junk.ppm");
    }) == ErrorCode::Data);
    write_text(dir.path / "short.ppm", "P6\n4 4\n255\nabc");
    CHECK(code_of([&] {
        read_pnm(dir.path / "short.ppm");
    }) == ErrorCode::Data);
    CHECK(code_of([&] {
        write_pnm(dir.path / "x.ppm", Tensor(1, 2, 3, 3));
    }) == ErrorCode::Shape);
}

TEST_CASE("manifests and dataset validation")
{
    TempDir dir("rfsv_test_manifest");
    const std::vector<Sample> rows { { "a.ppm", 0 }, { "b.ppm", 1 }, { "c.ppm", 1 } };
    write_manifest(dir.path / "train.csv", rows);
    CHECK(slurp(dir.path / "train.csv").rfind("filename,label\n", 0) == 0);
    const auto back = read_manifest(dir.path / "train.csv");
    REQUIRE(back.size() == 3);
    CHECK(back[1].filename == "b.ppm");
    CHECK(back[1].label == 1);

    write_manifest(dir.path / "val.csv", { { "d.ppm", 0 } });
    const DatasetSpec spec = load_dataset_spec(dir.path, 64);
    CHECK(spec.num_classes == 2);
    CHECK(spec.test.empty());
    CHECK(spec.split("val").size() == 1);
    CHECK(code_of([&] {
        spec.split("dev");
    }) == ErrorCode::Config);

    write_manifest(dir.path / "test.csv", { { "e.ppm", 2 } });
    CHECK(code_of([&] {
        load_dataset_spec(dir.path, 64, 2);
    }) == ErrorCode::Data);
    CHECK(load_dataset_spec(dir.path, 64).num_classes == 3);
    write_manifest(dir.path / "test.csv", { { "a.ppm", 0 } });
    CHECK(code_of([&] {
        load_dataset_spec(dir.path, 64);
    }) == ErrorCode::Data);

    write_text(dir.path / "test.csv", "filename,label\ne.ppm,one\n");
    CHECK(code_of([&] {
        load_dataset_spec(dir.path, 64);
    }) == ErrorCode::Data);
    write_text(dir.path / "test.csv", "name,class\n");
    CHECK(code_of([&] {
        load_dataset_spec(dir.path, 64);
    }) == ErrorCode::Data);

    TempDir empty("rfsv_test_manifest_empty");
    CHECK(code_of([&] {
        load_dataset_spec(empty.path, 64);
    }) == ErrorCode::Data);
}

TEST_CASE("synthetic corpus is deterministic, balanced and stratified")
{
    TempDir a("rfsv_test_synth_a"), b("rfsv_test_synth_b"), c("rfsv_test_synth_c");
    const SynthResult ra = synth_dataset(a.path, tiny(5));
    synth_dataset(b.path, tiny(5));
    synth_dataset(c.path, tiny(6));
    for (const char *f : { "train.csv", "val.csv", "test.csv", "truth.csv", "images/img_00003.ppm" })
        CHECK(slurp(a.path / f) == slurp(b.path / f));
    CHECK(slurp(a.path / "images/img_00003.ppm") != slurp(c.path / "images/img_00003.ppm"));

    CHECK(ra.spec.train.size() == 12);
    CHECK(ra.spec.val.size() == 6);
    CHECK(ra.spec.test.size() == 6);
    std::set<std::string> seen;
    for (const char *split : { "train", "val", "test" })
    {
        int pos = 0;
        for (const Sample &s : ra.spec.split(split))
        {
            pos += s.label;
            CHECK(seen.insert(s.filename).second);
        }
        CHECK(2 * pos == static_cast<int>(ra.spec.split(split).size()));
    }
    CHECK(seen.size() == 24);

    double diam = 0.0;
    int positives = 0;
    for (const PlantedLesion &t : ra.truth)
        if (t.label == 1)
        {
            CHECK(t.radius >= 6.0);
            CHECK(t.radius <= 10.0);
            CHECK(std::abs(t.cy - 23.5) <= 0.08 * 48 + 1e-9);
            CHECK(std::abs(t.cx - 23.5) <= 0.08 * 48 + 1e-9);
            diam += 2.0 * t.radius;
            positives++;
        }
    CHECK(positives == 12);
    CHECK(ra.mean_diameter() == doctest::Approx(diam / positives));

    SynthParams bad = tiny(1);
    bad.n = 3;
    CHECK(code_of([&] {
        synth_dataset(c.path, bad);
    }) == ErrorCode::Config);
    bad = tiny(1);
    bad.radius_min = 12;
    CHECK(code_of([&] {
        synth_dataset(c.path, bad);
    }) == ErrorCode::Config);
}

TEST_CASE("planted lesions stand out from the background")
{
    SynthParams p = tiny(9);
    double contrast = 0.0;
    for (int i = 0; i < 10; i++)
    {
        Rng rng(derive_seed(9, static_cast<std::uint64_t>(i)));
        PlantedLesion t;
        const Tensor img = render_lesion_image(48, 1, rng, p, t);
        CHECK(img.min() >= 0.0f);
        CHECK(img.max() <= 1.0f);
        double in = 0.0, out = 0.0;
        int n_in = 0, n_out = 0;
        for (int y = 0; y < 48; y++)
            for (int x = 0; x < 48; x++)
            {
                const double d = std::hypot(y - t.cy, x - t.cx);
                double v = 0.0;
                for (int c = 0; c < 3; c++)
                    v += img.at(0, c, y, x) / 3.0;
                if (d < 0.5 * t.radius)
                {
                    in += v;
                    n_in++;
                }
                else if (d > 1.8 * t.radius)
                {
                    out += v;
                    n_out++;
                }
            }
        contrast += std::abs(in / n_in - out / n_out) / 10.0;
    }
    CHECK(contrast > 0.1);
}

TEST_CASE("loading splits and normalising input")
{
    TempDir dir("rfsv_test_load");
    synth_dataset(dir.path, tiny(2));
    const DatasetSpec spec = load_dataset_spec(dir.path, 48);
    const LoadedSplit val = load_split(spec, "val");
    CHECK(val.size() == 6);
    CHECK(val.images[0].shape() == Shape { 1, 3, 48, 48 });
    CHECK(val.names[0] == spec.val[0].filename);
    const LoadedSplit resized = load_split(load_dataset_spec(dir.path, 32), "val");
    CHECK(resized.images[0].shape() == Shape { 1, 3, 32, 32 });

    const Tensor x = val.images[1];
    const Tensor z = normalize_input(x);
    for (std::size_t i = 0; i < x.size(); i += 97)
        CHECK(z[i] == doctest::Approx((x[i] - 0.5) / 0.25));
    const Tensor batch = make_batch({ val.images[0], val.images[1] });
    CHECK(batch.shape() == Shape { 2, 3, 48, 48 });
    CHECK(batch.at(1, 2, 5, 7) == z.at(0, 2, 5, 7));
    CHECK(code_of([] {
        make_batch({});
    }) == ErrorCode::Data);
    CHECK(code_of([&] {
        make_batch({ val.images[0], resized.images[0] });
    }) == ErrorCode::Shape);
}

TEST_CASE("augmentation draws and transforms")
{
    const Tensor img = random_tensor({ 1, 3, 40, 40 }, 12, 0.0, 1.0);
    CHECK(apply_augment(img, AugmentDraw::identity(40, 40), 40, 40) == img);

    Rng r1(3), r2(3);
    CHECK(augment(img, r1, 40, 40) == augment(img, r2, 40, 40));

    const Tensor flat(Shape { 1, 3, 40, 40 }, 0.42f);
    Rng r3(4);
    for (int i = 0; i < 20; i++)
    {
        const Tensor out = augment(flat, r3, 32, 32);
        CHECK(out.shape() == Shape { 1, 3, 32, 32 });
        CHECK(out.min() == 0.42f);
        CHECK(out.max() == 0.42f);
    }

    Rng r4(5);
    int flips = 0;
    for (int i = 0; i < 400; i++)
    {
        const AugmentDraw d = draw_augment(r4, 40, 50);
        const double area = static_cast<double>(d.crop_h) * d.crop_w / (40.0 * 50.0);
        CHECK(std::abs(d.crop_w * 40.0 - d.crop_h * 50.0) <= 50.0);
        CHECK(area <= 1.0);
        CHECK(area >= 0.6 - 0.05);
        CHECK(d.top >= 0);
        CHECK(d.left >= 0);
        CHECK(d.top + d.crop_h <= 40);
        CHECK(d.left + d.crop_w <= 50);
        flips += d.flip;
    }
    CHECK(std::abs(flips - 200) < 40);

    AugmentDraw mirror = AugmentDraw::identity(40, 40);
    mirror.flip = true;
    const Tensor m = apply_augment(img, mirror, 40, 40);
    CHECK(m.at(0, 1, 3, 0) == img.at(0, 1, 3, 39));

    CHECK(code_of([&] {
        AugmentOptions o;
        o.min_area = 0.0;
        Rng r(1);
        augment(img, r, 40, 40, o);
    }) == ErrorCode::Config);
    AugmentDraw outside = AugmentDraw::identity(40, 40);
    outside.top = 5;
    CHECK(code_of([&] {
        apply_augment(img, outside, 40, 40);
    }) == ErrorCode::Shape);
}

TEST_CASE("quarter-turn rotation is counter-clockwise")
{
    Tensor t(1, 1, 2, 2);
    for (int i = 0; i < 4; i++)
        t[static_cast<std::size_t>(i)] = static_cast<float>(i + 1);  // 1 2 / 3 4
    const Tensor r = rotate90(t, 1);
    CHECK(r[0] == 2.0f);
    CHECK(r[1] == 4.0f);
    CHECK(r[2] == 1.0f);
    CHECK(r[3] == 3.0f);
    const Tensor img = random_tensor({ 1, 3, 9, 9 }, 2);
    CHECK(rotate90(rotate90(img, 1), 3) == img);
    CHECK(rotate90(img, 4) == img);
    CHECK(rotate90(rotate90(img, 2), 2) == img);
    CHECK(rotate90(img, -1) == rotate90(img, 3));
    CHECK(code_of([] {
        rotate90(Tensor(1, 1, 2, 3), 1);
    }) == ErrorCode::Shape);
}

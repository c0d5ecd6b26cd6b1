#include "rfsv/dataset.hpp"
#include "rfsv/netzoo.hpp"
#include "rfsv/train.hpp"

#include <doctest.h>

#include <filesystem>

using namespace rfsv;
namespace fs = std::filesystem;

TEST_CASE("a small VGG learns to detect planted lesions")
{
    const fs::path root = fs::temp_directory_path() / "rfsv_test_smoke";
    fs::remove_all(root);
    SynthParams p;
    p.n = 160;
    p.seed = 11;
    p.image_size = 64;
    p.radius_min = 7;
    p.radius_max = 12;
    const SynthResult corpus = synth_dataset(root, p);
    const LoadedSplit train = load_split(corpus.spec, "train");
    const LoadedSplit val = load_split(corpus.spec, "val");
    const LoadedSplit test = load_split(corpus.spec, "test");
    fs::remove_all(root);

    BuildOptions o;
    o.input_h = o.input_w = 64;
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.seed = 1;
    cfg.adam.lr = 1e-3;
    const TrainResult r = train_model(init_model(build_vgg13(o), 1), train, val, cfg);
    const Metrics m = evaluate(r.best, test);
    MESSAGE("test " << metrics_to_text(m));
    CHECK(m.accuracy >= 0.9);
    CHECK(m.auc >= 0.9);
}

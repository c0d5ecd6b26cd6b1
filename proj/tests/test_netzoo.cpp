#include "rfsv/checkpoint.hpp"
#include "rfsv/netzoo.hpp"
#include "support.hpp"

#include <doctest.h>

#include <filesystem>

using namespace rfsv;
using namespace rfsv::testing;

namespace
{
    BuildOptions options(double scale, int size = 224, int classes = 2)
    {
        BuildOptions o;
        o.scale = scale;
        o.input_h = o.input_w = size;
        o.num_classes = classes;
        return o;
    }

    struct Step
    {
        bool conv;
        int kernel;
        int stride;
    };

    // rf_l = rf_{l-1} + (k_l - 1) jump_{l-1}, jump_l = jump_{l-1} s_l, over a plain chain.
    std::vector<int> chain_rf(const std::vector<Step> &steps)
    {
        std::vector<int> out;
        int rf = 1, jump = 1;
        for (const Step &s : steps)
        {
            rf += (s.kernel - 1) * jump;
            jump *= s.stride;
            if (s.conv)
                out.push_back(rf);
        }
        return out;
    }

    std::vector<int> rf_sizes(const std::vector<RfEntry> &entries)
    {
        std::vector<int> out;
        for (const RfEntry &e : entries)
            out.push_back(e.rf);
        return out;
    }
}

TEST_CASE("VGG13 topology, shapes and labels")
{
    for (double scale : { 1.0, 0.5, 0.25 })
    {
        const NetworkSpec net = build_vgg13(options(scale));
        CHECK(net.conv_count() == 10);
        int pools = 0;
        for (const LayerSpec &l : net.layers)
            if (l.kind == LayerKind::MaxPool)
                pools++;
        CHECK(pools == 5);
        const auto shapes = infer_shapes(net);
        CHECK(shapes[static_cast<std::size_t>(net.features)] == Shape { 1, static_cast<int>(512 * scale), 7, 7 });
        CHECK(shapes[static_cast<std::size_t>(net.conv_node(1))].c == static_cast<int>(64 * scale));
    }
    const NetworkSpec net = build_vgg13(options(1.0));
    const char *labels[] = { "L0", "L3", "L7", "L10", "L14", "L17", "L21", "L24", "L28", "L31" };
    for (int i = 0; i < 10; i++)
        CHECK(net.resolve(labels[i]) == i + 1);
    CHECK(net.resolve("L34") == 10);
    CHECK(net.resolve("#4") == 4);
    CHECK(net.resolve("7") == 7);
    CHECK(net.label(9) == "L28");
    CHECK(code_of([&] {
        net.resolve("L5");
    }) == ErrorCode::Config);
}

TEST_CASE("forward output matches static shape arithmetic")
{
    for (const char *arch : { "vgg13", "resnet18" })
    {
        const NetworkSpec net = build_network(arch, options(0.25, 64, 3));
        const Model m = init_model(net, 5);
        const ForwardCache cache = forward(m, random_tensor(net.input_shape(2), 6));
        const auto shapes = infer_shapes(net, 2);
        for (std::size_t i = 0; i < net.layers.size(); i++)
            CHECK(cache.outputs[i].shape() == shapes[i]);
        CHECK(cache.outputs[static_cast<std::size_t>(net.main_output)].shape() == Shape { 2, 3, 1, 1 });
    }
}

TEST_CASE("ResNet18 structure")
{
    const NetworkSpec net = build_resnet18(options(1.0));
    CHECK(net.conv_count() == 17);
    int adds = 0, fcs = 0;
    for (const LayerSpec &l : net.layers)
    {
        adds += l.kind == LayerKind::AddSkip;
        fcs += l.kind == LayerKind::FullyConnected;
    }
    CHECK(adds == 8);
    CHECK(fcs == 1);
    const auto shapes = infer_shapes(net);
    CHECK(shapes[static_cast<std::size_t>(net.features)] == Shape { 1, 512, 7, 7 });
    CHECK(net.layers[static_cast<std::size_t>(net.head_start)].kind == LayerKind::GlobalAvgPool);
}

TEST_CASE("residual block with zeroed residual branch passes its input through")
{
    const NetworkSpec net = build_resnet18(options(0.25, 64));
    Model m = init_model(net, 3);
    int add = -1;
    for (std::size_t i = 0; i < net.layers.size(); i++)
        if (net.layers[i].kind == LayerKind::AddSkip)
        {
            add = static_cast<int>(i);
            break;
        }
    REQUIRE(add > 0);
    const int skip = net.layers[static_cast<std::size_t>(add)].skip;
    for (int i = skip + 1; i < add; i++)
    {
        auto &p = m.params[static_cast<std::size_t>(i)];
        p.weight.fill(0.0f);
        p.bias.fill(0.0f);
    }
    const ForwardCache cache = forward(m, random_tensor(net.input_shape(), 4));
    CHECK(cache.outputs[static_cast<std::size_t>(add)] == cache.outputs[static_cast<std::size_t>(skip)]);
}

TEST_CASE("theoretical receptive field matches the recurrence")
{
    const Step c { true, 3, 1 }, p { false, 2, 2 };
    const std::vector<int> vgg_oracle = chain_rf({ c, c, p, c, c, p, c, c, p, c, c, p, c, c, p });
    CHECK(vgg_oracle == std::vector<int> { 3, 5, 10, 14, 24, 32, 52, 68, 108, 140 });
    const auto vgg = theoretical_rf(build_vgg13(options(1.0)));
    CHECK(rf_sizes(vgg) == vgg_oracle);
    int jump = 1;
    for (std::size_t i = 0; i < vgg.size(); i++)
    {
        CHECK(vgg[i].layer_index == static_cast<int>(i) + 1);
        CHECK(vgg[i].jump == jump);
        if (i % 2 == 1)
            jump *= 2;
    }

    // Main path dominates every projection shortcut, so the max over branches is the chain.
    std::vector<Step> res { { true, 7, 2 }, { false, 2, 2 } };
    for (int stage = 0; stage < 4; stage++)
        for (int conv = 0; conv < 4; conv++)
            res.push_back({ true, 3, stage > 0 && conv == 0 ? 2 : 1 });
    const std::vector<int> res_oracle = chain_rf(res);
    CHECK(res_oracle == std::vector<int> { 7, 17, 25, 33, 41, 49, 65, 81, 97, 113, 145, 177, 209, 241, 305, 369, 433 });
    CHECK(rf_sizes(theoretical_rf(build_resnet18(options(1.0)))) == res_oracle);
}

TEST_CASE("receptive field anchors and monotonicity over random networks")
{
    NetworkSpec one;
    one.input_h = one.input_w = 8;
    LayerSpec conv;
    conv.kind = LayerKind::Conv;
    conv.in_channels = 3;
    conv.out_channels = 2;
    conv.kernel = 3;
    conv.padding = 1;
    conv.ordinal = 1;
    one.layers.push_back(conv);
    CHECK(rf_sizes(theoretical_rf(one)) == std::vector<int> { 3 });
    conv.in_channels = 2;
    conv.ordinal = 2;
    conv.input = 0;
    one.layers.push_back(conv);
    CHECK(rf_sizes(theoretical_rf(one)) == std::vector<int> { 3, 5 });

    Rng rng(77);
    for (int trial = 0; trial < 50; trial++)
    {
        int body_out = 0;
        const NetworkSpec net = random_small_network(rng, body_out);
        const auto all = receptive_fields(net);
        for (std::size_t i = 0; i < net.layers.size(); i++)
        {
            const LayerSpec &l = net.layers[i];
            if (l.input < 0 || l.kind == LayerKind::GlobalAvgPool || l.kind == LayerKind::FullyConnected)
                continue;
            const RfEntry &prev = all[static_cast<std::size_t>(l.input)];
            CHECK(all[i].rf >= prev.rf);
            const bool strided = l.kind == LayerKind::Conv || l.kind == LayerKind::MaxPool || l.kind == LayerKind::AvgPool;
            CHECK(all[i].jump == prev.jump * (strided ? l.stride : 1));
        }
    }
}

TEST_CASE("build errors")
{
    CHECK(code_of([] {
        build_vgg13(options(0.3));
    }) == ErrorCode::Config);
    CHECK(code_of([] {
        build_resnet18(options(2.0));
    }) == ErrorCode::Config);
    CHECK(code_of([] {
        build_vgg13(options(1.0, 224, 1));
    }) == ErrorCode::Config);
    CHECK(code_of([] {
        build_network("densenet", options(1.0));
    }) == ErrorCode::Config);
}

TEST_CASE("built networks round-trip through text and the checkpoint container")
{
    const auto dir = std::filesystem::temp_directory_path() / "rfsv_netzoo_test";
    std::filesystem::create_directories(dir);
    for (const char *arch : { "vgg13", "resnet18" })
    {
        BuildOptions o = options(0.25, 64);
        o.head = std::string(arch) == "vgg13" ? HeadType::Vgg : HeadType::ResNet;
        const NetworkSpec net = build_network(arch, o);
        CHECK(to_text(parse_network(to_text(net))) == to_text(net));
        const Model m = init_model(net, 11);
        const auto path = dir / (std::string(arch) + ".rfsv");
        save_model(path, m);
        const Model back = load_model(path);
        CHECK(to_text(back.spec) == to_text(net));
        REQUIRE(back.params.size() == m.params.size());
        for (std::size_t i = 0; i < m.params.size(); i++)
        {
            CHECK(back.params[i].weight == m.params[i].weight);
            CHECK(back.params[i].bias == m.params[i].bias);
        }
    }
    std::filesystem::remove_all(dir);
}

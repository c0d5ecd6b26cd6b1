#include "rfsv/lerf.hpp"
#include "rfsv/netzoo.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace rfsv;
using namespace rfsv::testing;

namespace
{
    // `convs` stacked 3x3 convs (3 -> 1 -> 1 ...) on a size x size input, then GAP and FC(2).
    Model ones_chain(int convs, int size)
    {
        NetworkSpec net;
        net.input_h = net.input_w = size;
        int prev = -1;
        for (int i = 0; i < convs; i++)
        {
            LayerSpec c;
            c.kind = LayerKind::Conv;
            c.in_channels = i == 0 ? 3 : 1;
            c.out_channels = 1;
            c.kernel = 3;
            c.padding = 1;
            c.ordinal = i + 1;
            c.input = prev;
            net.layers.push_back(c);
            prev = i;
        }
        LayerSpec gap;
        gap.kind = LayerKind::GlobalAvgPool;
        gap.input = prev;
        net.layers.push_back(gap);
        net.features = prev;
        net.head_start = prev + 1;
        LayerSpec fc;
        fc.kind = LayerKind::FullyConnected;
        fc.in_channels = 1;
        fc.out_channels = 2;
        fc.input = prev + 1;
        net.layers.push_back(fc);
        net.main_output = prev + 2;
        Model m = init_model(net, 1);
        for (std::size_t i = 0; i < static_cast<std::size_t>(convs); i++)
            m.params[i].weight.fill(1.0f);
        return m;
    }

    long count_above(const Tensor &map, double th)
    {
        long n = 0;
        for (float v : map.values())
            n += v > th;
        return n;
    }

    BuildOptions small_vgg()
    {
        BuildOptions o;
        o.scale = 0.25;
        o.input_h = o.input_w = 64;
        return o;
    }
}

TEST_CASE("single all-ones conv3x3 gives a flat 3x3 window")
{
    const Model m = ones_chain(1, 9);
    const Tensor map = lerf_map(m, 1, { {}, true });
    for (int y = 0; y < 9; y++)
        for (int x = 0; x < 9; x++)
        {
            const bool inside = std::abs(y - 4) <= 1 && std::abs(x - 4) <= 1;
            CHECK(map.at(0, 0, y, x) == (inside ? 1.0f : 0.0f));
        }
    const LerfSize s = lerf_size(map);
    CHECK(s.pixel_count == 9);
    CHECK(s.size == 3.0);
}

TEST_CASE("two stacked all-ones convs give the triangular 5x5 profile")
{
    const Model m = ones_chain(2, 11);
    const Tensor map = lerf_map(m, 2, { {}, true });
    CHECK(map.at(0, 0, 5, 5) == 1.0f);
    CHECK(map.at(0, 0, 3, 3) == doctest::Approx(1.0 / 9.0));
    CHECK(map.at(0, 0, 3, 5) == doctest::Approx(3.0 / 9.0));
    CHECK(map.at(0, 0, 4, 4) == doctest::Approx(4.0 / 9.0));
    CHECK(count_above(map, 0.0) == 25);
    const LerfSize s = lerf_size(map);
    CHECK(s.pixel_count == 25);
    CHECK(s.size == 5.0);
}

TEST_CASE("an offset target node translates the map by the layer jump")
{
    const Model m = init_model(build_vgg13(small_vgg()), 21);
    const int ordinal = 5;  // after two pools: jump 4
    const Pixel c = center_node(m.spec, ordinal);
    for (bool linear : { false, true })
    {
        const Tensor a = lerf_map(m, ordinal, { c, linear });
        const Tensor b = lerf_map(m, ordinal, { Pixel { c.y + 1, c.x }, linear });
        double worst = 0.0;
        for (int y = 0; y + 4 < 64; y++)
            for (int x = 0; x < 64; x++)
                worst = std::max(worst, static_cast<double>(std::abs(a.at(0, 0, y, x) - b.at(0, 0, y + 4, x))));
        CHECK(worst < 1e-5);
    }
    CHECK(code_of([&] {
        lerf_map(m, ordinal, { Pixel { 100, 0 }, false });
    }) == ErrorCode::Config);
}

TEST_CASE("linear positive-weight map is nonzero exactly on the clipped receptive field")
{
    const NetworkSpec net = build_vgg13(small_vgg());
    Model m = init_model(net, 3);
    for (LayerParams &p : m.params)
        for (float &w : p.weight.values())
            w = std::abs(w);
    const auto rfs = theoretical_rf(net);
    for (const RfEntry &e : rfs)
    {
        const Pixel c = center_node(net, e.layer_index);
        const Tensor map = lerf_map(m, e.layer_index, { c, true });
        const double lo_y = e.center_offset + c.y * e.jump - (e.rf - 1) / 2.0;
        const double lo_x = e.center_offset + c.x * e.jump - (e.rf - 1) / 2.0;
        long mismatches = 0;
        for (int y = 0; y < 64; y++)
            for (int x = 0; x < 64; x++)
            {
                const bool inside = y >= lo_y && y <= lo_y + e.rf - 1 && x >= lo_x && x <= lo_x + e.rf - 1;
                mismatches += inside != (map.at(0, 0, y, x) > 0.0f);
            }
        INFO("ordinal " << e.layer_index);
        CHECK(mismatches == 0);
        CHECK(lerf_size(map).size <= std::min(e.rf, 64));
    }
}

TEST_CASE("dead paths and empty masks are reported")
{
    Model m = ones_chain(2, 9);
    m.params[0].weight.fill(0.0f);
    CHECK(code_of([&] {
        lerf_map(m, 2);
    }) == ErrorCode::DeadPath);
    CHECK(code_of([&] {
        lerf_map(m, 1);
    }) == ErrorCode::DeadPath);
    CHECK(code_of([] {
        lerf_size(Tensor(1, 1, 4, 4, 0.0f));
    }) == ErrorCode::EmptyMask);
    CHECK(code_of([] {
        lerf_size(Tensor(1, 1, 4, 4, 0.04f));
    }) == ErrorCode::EmptyMask);
}

TEST_CASE("profile bounds, linear determinism and seed stability")
{
    const NetworkSpec net = build_vgg13(small_vgg());
    LerfOptions relu;
    relu.iterations = 20;
    relu.seed = 1;
    const LerfProfile a = lerf_profile(net, relu);
    relu.seed = 2;
    const LerfProfile b = lerf_profile(net, relu);
    REQUIRE(a.entries.size() == 10);
    for (std::size_t i = 0; i < a.entries.size(); i++)
    {
        const LerfEntry &e = a.entries[i];
        CHECK(e.lerf_size > 0.0);
        CHECK(e.lerf_size <= std::min(e.theoretical_rf, 64));
        CHECK(e.pixel_count >= 1.0);
        CHECK(e.iterations >= 1);
        INFO("ordinal " << e.ordinal);
        CHECK(std::abs(e.lerf_size - b.entries[i].lerf_size) <= 0.15 * e.lerf_size);
    }

    // Signed weights still vary between draws; positive weights with a vanishing
    // threshold leave the full clipped receptive field in every iteration.
    LerfOptions lin;
    lin.iterations = 5;
    lin.linear = true;
    lin.positive_weights = true;
    lin.threshold = 1e-12;
    const LerfProfile l = lerf_profile(net, lin);
    for (std::size_t i = 0; i < l.entries.size(); i++)
    {
        const LerfEntry &e = l.entries[i];
        CHECK(e.lerf_stddev < 1e-9);
        CHECK(e.iterations == 5);
        if (i > 0)
            CHECK(e.lerf_size >= l.entries[i - 1].lerf_size);
    }
    lin.positive_weights = false;
    lin.threshold = default_lerf_threshold;
    const LerfProfile l1 = lerf_profile(net, lin);
    const LerfProfile l2 = lerf_profile(net, lin);
    for (std::size_t i = 0; i < l1.entries.size(); i++)
        CHECK(l1.entries[i].lerf_size == l2.entries[i].lerf_size);
    CHECK(code_of([&] {
        LerfOptions none;
        none.iterations = 0;
        lerf_profile(net, none);
    }) == ErrorCode::Config);
}

TEST_CASE("profile CSV round trip")
{
    LerfOptions o;
    o.iterations = 2;
    const LerfProfile p = lerf_profile(build_vgg13(small_vgg()), o);
    const std::string csv = profile_to_csv(p);
    CHECK(csv.rfind("layer,rf,lerf_size,pixel_count\n", 0) == 0);
    const LerfProfile back = profile_from_csv(csv);
    REQUIRE(back.entries.size() == p.entries.size());
    for (std::size_t i = 0; i < p.entries.size(); i++)
    {
        CHECK(back.entries[i].label == p.entries[i].label);
        CHECK(back.entries[i].theoretical_rf == p.entries[i].theoretical_rf);
        CHECK(back.entries[i].lerf_size == doctest::Approx(p.entries[i].lerf_size).epsilon(1e-6));
    }
    CHECK(profile_to_csv(back) == csv);
    CHECK(code_of([] {
        profile_from_csv("layer,size\nL0,3\n");
    }) == ErrorCode::Data);
    CHECK(code_of([] {
        profile_from_csv("layer,rf,lerf_size,pixel_count\nL0,x,3,9\n");
    }) == ErrorCode::Data);
}

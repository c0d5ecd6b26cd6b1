#include "rfsv/checkpoint.hpp"
#include "rfsv/netzoo.hpp"
#include "rfsv/optim.hpp"
#include "rfsv/planner.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace rfsv;
using namespace rfsv::testing;

namespace
{
    LerfProfile profile_of(const std::vector<double> &sizes)
    {
        LerfProfile p;
        for (std::size_t i = 0; i < sizes.size(); i++)
        {
            LerfEntry e;
            e.ordinal = static_cast<int>(i) + 1;
            e.label = "#" + std::to_string(i + 1);
            e.lerf_size = sizes[i];
            p.entries.push_back(e);
        }
        return p;
    }

    NetworkSpec small_vgg()
    {
        BuildOptions o;
        o.input_h = o.input_w = 32;
        return build_vgg13(o);
    }

    bool all_zero(const Tensor &t)
    {
        for (float v : t.values())
            if (v != 0.0f)
                return false;
        return true;
    }
}

TEST_CASE("target layer is the closest LERF, ties going deeper")
{
    const LerfProfile p = profile_of({ 3, 5, 10, 14, 24 });
    CHECK(select_target_layer(p, 7.5) == 3);
    CHECK(select_target_layer(p, 4.0) == 2);
    CHECK(select_target_layer(p, 1.0) == 1);
    CHECK(select_target_layer(p, 100.0) == 5);
    CHECK(select_target_layer(profile_of({ 8, 8, 8 }), 8.0) == 3);

    Rng rng(9);
    for (int trial = 0; trial < 200; trial++)
    {
        std::vector<double> sizes;
        for (int i = 0; i < 6; i++)
            sizes.push_back(static_cast<double>(1 + rng.below(12)));
        const double obj = static_cast<double>(1 + rng.below(14));
        std::size_t best = 0;
        for (std::size_t i = 0; i < sizes.size(); i++)
            if (std::abs(obj - sizes[i]) <= std::abs(obj - sizes[best]))
                best = i;
        CHECK(select_entry(profile_of(sizes), obj) == best);
    }
    CHECK(code_of([] {
        select_entry(LerfProfile {}, 5.0);
    }) == ErrorCode::Config);
    CHECK(code_of([&] {
        select_entry(p, 0.0);
    }) == ErrorCode::Config);
}

TEST_CASE("plans resolve labels and round-trip through text")
{
    const NetworkSpec net = small_vgg();
    LerfProfile p = profile_of({ 3, 5, 10, 14, 24, 32, 52, 68, 108, 140 });
    for (auto &e : p.entries)
    {
        e.label = net.label(e.ordinal);
        e.ordinal = 0;
    }
    const SupervisionPlan plan = make_plan(net, p, 60.0, HeadType::Vgg);
    CHECK(plan.target_layer == 8);
    CHECK(plan.target_label == "L24");
    CHECK(plan.lerf_at_target == 68.0);
    const SupervisionPlan back = parse_plan(plan_to_text(plan));
    CHECK(plan_to_text(back) == plan_to_text(plan));
    CHECK(back.aux_classifier == HeadType::Vgg);
    CHECK(back.target_layer == 8);

    const std::string text = plan_to_text(plan);
    CHECK(code_of([&] {
        parse_plan(text + "extra=1\n");
    }) == ErrorCode::Config);
    CHECK(code_of([&] {
        parse_plan(text.substr(text.find('\n') + 1));
    }) == ErrorCode::Config);
    CHECK(code_of([] {
        parse_plan("arch\n");
    }) == ErrorCode::Config);
    std::string bad = text;
    bad.replace(bad.find("weight_aux=1"), 12, "weight_aux=0");
    CHECK(code_of([&] {
        parse_plan(bad);
    }) == ErrorCode::Config);
    bad = text;
    bad.replace(bad.find("target_ordinal=8"), 16, "target_ordinal=x");
    CHECK(code_of([&] {
        parse_plan(bad);
    }) == ErrorCode::Config);

    BuildOptions o;
    o.input_h = o.input_w = 32;
    CHECK(code_of([&] {
        attach_aux(build_resnet18(o), plan);
    }) == ErrorCode::Config);
}

TEST_CASE("attaching an auxiliary branch leaves the main path untouched")
{
    const NetworkSpec net = small_vgg();
    const Model base = init_model(net, 4);
    const Tensor x = random_tensor(net.input_shape(3), 5);
    const Tensor ref = forward(base, x).outputs[static_cast<std::size_t>(net.main_output)];
    for (HeadType type : { HeadType::ResNet, HeadType::Vgg })
        for (int ordinal : { 1, 6, 10 })
        {
            const NetworkSpec ds = attach_aux(net, ordinal, type);
            REQUIRE(ds.aux.size() == 1);
            const AuxBranch &a = ds.aux[0];
            CHECK(a.target_ordinal == ordinal);
            CHECK(a.tap_node == net.activation_node(ordinal));
            CHECK(a.output_node - a.first_node + 1 == (type == HeadType::ResNet ? 2 : 8));
            CHECK(ds.main_output == net.main_output);
            Model m = init_model(ds, 6);
            load_backbone(m, base);
            for (std::size_t i = static_cast<std::size_t>(net.head_start); i < net.layers.size(); i++)
                m.params[i] = base.params[i];
            const ForwardCache cache = forward(m, x);
            CHECK(cache.outputs[static_cast<std::size_t>(ds.main_output)] == ref);
            CHECK(cache.outputs[static_cast<std::size_t>(a.output_node)].shape() == Shape { 3, 2, 1, 1 });
        }
}

TEST_CASE("total loss is the weighted sum of head cross-entropies")
{
    const int two_labels[] = { 1 };
    Tensor logits(1, 2, 1, 1);
    logits[1] = static_cast<float>(std::log(3.0));
    CHECK(softmax_cross_entropy(logits, two_labels).loss == doctest::Approx(-std::log(0.75)).epsilon(1e-6));

    NetworkSpec ds = attach_aux(small_vgg(), 4, HeadType::ResNet);
    ds = attach_aux(ds, 7, HeadType::ResNet);
    const Model m = init_model(ds, 8);
    const Tensor x = random_tensor(ds.input_shape(4), 9);
    const std::vector<int> labels { 0, 1, 1, 0 };
    const ForwardCache cache = forward(m, x);
    auto ce = [&](int node) {
        return softmax_cross_entropy(cache.outputs[static_cast<std::size_t>(node)], labels).loss;
    };
    const TotalLoss t = total_loss(ds, cache, labels, 0.7, 0.3);
    CHECK(t.main == doctest::Approx(0.7 * ce(ds.main_output)));
    CHECK(t.aux == doctest::Approx(0.3 * (ce(ds.aux[0].output_node) + ce(ds.aux[1].output_node))));
    CHECK(t.total == doctest::Approx(t.main + t.aux));
    CHECK(t.heads.size() == 3);

    // With the main head switched off, layers past the deepest tap get no gradient.
    const TotalLoss aux_only = total_loss(ds, cache, labels, 0.0, 1.0);
    GradSeeds seeds;
    for (const HeadLoss &h : aux_only.heads)
        seeds.emplace_back(h.node, h.grad);
    const Gradients g = backward(m, cache, seeds);
    const int deepest = ds.conv_node(7);
    for (int i = 0; i < ds.head_start; i++)
    {
        const auto &p = g.params[static_cast<std::size_t>(i)];
        if (!ds.layers[static_cast<std::size_t>(i)].has_params())
            continue;
        CAPTURE(i);
        CHECK(all_zero(p.weight) == (i > deepest));
    }

    ForwardCache partial = forward(m, x, {}, ds.main_output, false);
    CHECK(code_of([&] {
        total_loss(ds, partial, labels);
    }) == ErrorCode::State);
}

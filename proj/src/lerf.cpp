#include "rfsv/lerf.hpp"
#include "rfsv/error.hpp"
#include "rfsv/netzoo.hpp"
#include "rfsv/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace rfsv
{
    const LerfEntry& LerfProfile::at(int ordinal) const
    {
        for (const auto &e : entries)
            if (e.ordinal == ordinal)
                return e;
        fail(ErrorCode::Config, "LERF profile has no layer with ordinal " + std::to_string(ordinal));
    }

    Pixel center_node(const NetworkSpec &net, int ordinal)
    {
        const Shape s = infer_shapes(net, 1)[net.conv_node(ordinal)];
        return { s.h / 2, s.w / 2 };
    }

    namespace
    {
        Tensor probe_input(const NetworkSpec &net)
        {
            return Tensor(net.input_shape(1), 1.0f);
        }

        RunContext probe_context(bool linear)
        {
            RunContext ctx;
            ctx.linear = linear;
            return ctx;
        }
    }

    Tensor lerf_map(const Model &model, const ForwardCache &cache, int ordinal, const LerfProbe &probe)
    {
        const NetworkSpec &net = model.spec;
        const int node = net.conv_node(ordinal);
        if (node >= cache.computed)
            fail(ErrorCode::State, "lerf_map: forward cache does not reach conv " + net.label(ordinal));
        const Shape out = cache.outputs[node].shape();
        const Pixel target = probe.node.value_or(Pixel { out.h / 2, out.w / 2 });
        if (target.y < 0 || target.y >= out.h || target.x < 0 || target.x >= out.w)
            fail(ErrorCode::Config, "lerf_map: node (" + std::to_string(target.y) + "," + std::to_string(target.x) + ") outside conv "
                    + net.label(ordinal) + " output " + std::to_string(out.h) + "x" + std::to_string(out.w));
        Tensor seed(out);
        for (int c = 0; c < out.c; c++)
            seed.at(0, c, target.y, target.x) = 1.0f;
        const Gradients grads = backward(model, cache, { { node, std::move(seed) } }, { true, false });
        const Shape in = grads.input.shape();
        Tensor map(Shape { 1, 1, in.h, in.w });
        for (int c = 0; c < in.c; c++)
        {
            const float *g = grads.input.plane(0, c);
            for (std::size_t i = 0; i < in.plane(); i++)
                map[i] = std::max(map[i], std::abs(g[i]));
        }
        const float peak = map.max();
        if (!(peak > 0.0f))
            fail(ErrorCode::DeadPath, "LERF map of conv " + net.label(ordinal) + " is all zero (dead path)");
        for (auto &v : map.values())
            v /= peak;
        return map;
    }

    Tensor lerf_map(const Model &model, int ordinal, const LerfProbe &probe)
    {
        const int node = model.spec.conv_node(ordinal);
        const ForwardCache cache = forward(model, probe_input(model.spec), probe_context(probe.linear), node, false);
        return lerf_map(model, cache, ordinal, probe);
    }

    LerfSize lerf_size(const Tensor &map, double threshold)
    {
        long count = 0;
        for (float v : map.values())
            if (v > threshold)
                count++;
        if (count == 0)
            fail(ErrorCode::EmptyMask, "LERF map has no pixel above threshold " + std::to_string(threshold));
        return { std::sqrt(static_cast<double>(count)), count };
    }

    namespace
    {
        void draw_parameters(Model &model, std::uint64_t seed, bool positive)
        {
            reinit_nodes(model, 0, static_cast<int>(model.params.size()), seed);
            if (!positive)
                return;
            for (std::size_t i = 0; i < model.params.size(); i++)
                if (model.spec.layers[i].kind == LayerKind::Conv)
                    for (auto &v : model.params[i].weight.values())
                        v = std::abs(v);
        }
    }

    LerfProfile lerf_profile(const NetworkSpec &net, const LerfOptions &options)
    {
        if (options.iterations < 1)
            fail(ErrorCode::Config, "lerf_profile: iterations must be at least 1");
        validate(net);
        const std::vector<int> ordinals = net.conv_ordinals();
        const int last_node = net.conv_node(ordinals.back());
        const Tensor input = probe_input(net);
        const RunContext ctx = probe_context(options.linear);
        const LerfProbe probe { std::nullopt, options.linear };

        std::vector<std::vector<double>> sizes(ordinals.size());
        std::vector<std::vector<double>> counts(ordinals.size());
        Model model { net, std::vector<LayerParams>(net.layers.size()) };
        for (int it = 0; it < options.iterations; it++)
        {
            const std::uint64_t seed = derive_seed(options.seed, static_cast<std::uint64_t>(it));
            draw_parameters(model, seed, options.positive_weights);
            const ForwardCache cache = forward(model, input, ctx, last_node, false);
            if (options.last_maps)
                options.last_maps->clear();
            for (std::size_t l = 0; l < ordinals.size(); l++)
            {
                std::optional<Tensor> map;
                try
                {
                    map = lerf_map(model, cache, ordinals[l], probe);
                }
                catch (const Error &e)
                {
                    if (e.code() != ErrorCode::DeadPath)
                        throw;
                    // one redraw with a fresh seed before giving up on this iteration
                    Model retry { net, std::vector<LayerParams>(net.layers.size()) };
                    draw_parameters(retry, derive_seed(seed, 0x5EEDull), options.positive_weights);
                    try
                    {
                        map = lerf_map(retry, ordinals[l], probe);
                    }
                    catch (const Error &again)
                    {
                        if (again.code() != ErrorCode::DeadPath)
                            throw;
                    }
                }
                if (!map)
                    continue;
                const LerfSize s = lerf_size(*map, options.threshold);
                sizes[l].push_back(s.size);
                counts[l].push_back(static_cast<double>(s.pixel_count));
                if (options.last_maps)
                    options.last_maps->emplace_back(ordinals[l], std::move(*map));
            }
        }

        const std::vector<RfEntry> rf = theoretical_rf(net);
        LerfProfile profile;
        profile.input_h = net.input_h;
        profile.input_w = net.input_w;
        profile.threshold = options.threshold;
        for (std::size_t l = 0; l < ordinals.size(); l++)
        {
            if (sizes[l].empty())
                fail(ErrorCode::DeadPath, "conv " + net.label(ordinals[l]) + " has a dead gradient path in every iteration (seed "
                        + std::to_string(options.seed) + ")");
            LerfEntry e;
            e.ordinal = ordinals[l];
            e.label = net.label(ordinals[l]);
            e.iterations = static_cast<int>(sizes[l].size());
            double sum = 0.0;
            double count_sum = 0.0;
            for (std::size_t i = 0; i < sizes[l].size(); i++)
            {
                sum += sizes[l][i];
                count_sum += counts[l][i];
            }
            e.lerf_size = sum / e.iterations;
            e.pixel_count = count_sum / e.iterations;
            double var = 0.0;
            for (double s : sizes[l])
                var += (s - e.lerf_size) * (s - e.lerf_size);
            e.lerf_stddev = std::sqrt(var / e.iterations);
            e.theoretical_rf = rf[l].rf;
            profile.entries.push_back(e);
        }
        return profile;
    }

    std::string profile_to_csv(const LerfProfile &profile)
    {
        std::ostringstream out;
        out << "layer,rf,lerf_size,pixel_count\n";
        char buf[128];
        for (const auto &e : profile.entries)
        {
            std::snprintf(buf, sizeof(buf), "%s,%d,%.6f,%.3f\n", e.label.c_str(), e.theoretical_rf, e.lerf_size, e.pixel_count);
            out << buf;
        }
        return out.str();
    }

    LerfProfile profile_from_csv(const std::string &text)
    {
        std::istringstream in(text);
        std::string line;
        if (!std::getline(in, line) || line.rfind("layer,rf,lerf_size,pixel_count", 0) != 0)
            fail(ErrorCode::Data, "LERF CSV must start with header layer,rf,lerf_size,pixel_count");
        LerfProfile profile;
        int row = 1;
        while (std::getline(in, line))
        {
            row++;
            if (line.empty())
                continue;
            std::istringstream fields(line);
            std::string label, rf, size, count;
            if (!std::getline(fields, label, ',') || !std::getline(fields, rf, ',') || !std::getline(fields, size, ',') || !std::getline(fields, count))
                fail(ErrorCode::Data, "LERF CSV row " + std::to_string(row) + " has fewer than 4 fields");
            LerfEntry e;
            e.label = label;
            try
            {
                e.theoretical_rf = std::stoi(rf);
                e.lerf_size = std::stod(size);
                e.pixel_count = std::stod(count);
            }
            catch (const std::exception&)
            {
                fail(ErrorCode::Data, "LERF CSV row " + std::to_string(row) + " is not numeric");
            }
            e.iterations = 1;
            profile.entries.push_back(e);
        }
        if (profile.entries.empty())
            fail(ErrorCode::Data, "LERF CSV has no rows");
        return profile;
    }
}

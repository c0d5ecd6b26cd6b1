#include "rfsv/netzoo.hpp"
#include "rfsv/error.hpp"

#include <algorithm>
#include <cmath>

namespace rfsv
{
    namespace
    {
        int scaled(int width, double scale)
        {
            return std::max(1, static_cast<int>(std::lround(width * scale)));
        }

        void check_options(const BuildOptions &options)
        {
            const double s = options.scale;
            if (s != 1.0 && s != 0.5 && s != 0.25)
                fail(ErrorCode::Config, "scale factor must be 1, 0.5 or 0.25, got " + std::to_string(s));
            if (options.num_classes < 2)
                fail(ErrorCode::Config, "num_classes must be at least 2");
            if (options.input_h < 32 || options.input_w < 32)
                fail(ErrorCode::Config, "input must be at least 32x32");
        }

        int push(NetworkSpec &net, LayerSpec layer, int input)
        {
            layer.input = input;
            net.layers.push_back(layer);
            return static_cast<int>(net.layers.size()) - 1;
        }

        LayerSpec conv(int in, int out, int k, int stride, int ordinal)
        {
            LayerSpec l;
            l.kind = LayerKind::Conv;
            l.in_channels = in;
            l.out_channels = out;
            l.kernel = k;
            l.stride = stride;
            l.padding = (k - 1) / 2;
            l.ordinal = ordinal;
            return l;
        }

        LayerSpec simple(LayerKind kind)
        {
            LayerSpec l;
            l.kind = kind;
            return l;
        }

        LayerSpec pool2()
        {
            LayerSpec l;
            l.kind = LayerKind::MaxPool;
            l.kernel = 2;
            l.stride = 2;
            return l;
        }

        LayerSpec fc(int in, int out)
        {
            LayerSpec l;
            l.kind = LayerKind::FullyConnected;
            l.in_channels = in;
            l.out_channels = out;
            return l;
        }

        LayerSpec channel_scale(int channels)
        {
            LayerSpec l;
            l.kind = LayerKind::ChannelScale;
            l.in_channels = channels;
            l.out_channels = channels;
            return l;
        }
    }

    int append_head(NetworkSpec &net, int source, int channels, HeadType type)
    {
        int node = push(net, simple(LayerKind::GlobalAvgPool), source);
        if (type == HeadType::ResNet)
            return push(net, fc(channels, net.num_classes), node);
        const int hidden = scaled(256, net.scale);
        LayerSpec drop = simple(LayerKind::Dropout);
        drop.drop_rate = 0.5f;
        node = push(net, fc(channels, hidden), node);
        node = push(net, simple(LayerKind::Relu), node);
        node = push(net, drop, node);
        node = push(net, fc(hidden, hidden), node);
        node = push(net, simple(LayerKind::Relu), node);
        node = push(net, drop, node);
        return push(net, fc(hidden, net.num_classes), node);
    }

    NetworkSpec build_vgg13(const BuildOptions &options)
    {
        check_options(options);
        NetworkSpec net;
        net.arch = "vgg13";
        net.scale = options.scale;
        net.input_h = options.input_h;
        net.input_w = options.input_w;
        net.num_classes = options.num_classes;
        net.head = options.head;
        static const int widths[5] = { 64, 128, 256, 512, 512 };
        static const char *labels[10] = { "L0", "L3", "L7", "L10", "L14", "L17", "L21", "L24", "L28", "L31" };
        int node = -1;
        int channels = 3;
        int ordinal = 0;
        for (int block = 0; block < 5; block++)
        {
            const int width = scaled(widths[block], options.scale);
            for (int i = 0; i < 2; i++)
            {
                ordinal++;
                node = push(net, conv(channels, width, 3, 1, ordinal), node);
                node = push(net, simple(LayerKind::Relu), node);
                net.labels.emplace_back(labels[ordinal - 1], ordinal);
                channels = width;
            }
            node = push(net, pool2(), node);
        }
        net.labels.emplace_back("L34", 10);
        net.features = node;
        net.head_start = node + 1;
        net.main_output = append_head(net, node, channels, options.head);
        validate(net);
        return net;
    }

    NetworkSpec build_resnet18(const BuildOptions &options)
    {
        check_options(options);
        NetworkSpec net;
        net.arch = "resnet18";
        net.scale = options.scale;
        net.input_h = options.input_h;
        net.input_w = options.input_w;
        net.num_classes = options.num_classes;
        net.head = options.head;
        int ordinal = 1;
        int channels = scaled(64, options.scale);
        int node = push(net, conv(3, channels, 7, 2, ordinal), -1);
        net.labels.emplace_back("conv1", ordinal);
        node = push(net, channel_scale(channels), node);
        node = push(net, simple(LayerKind::Relu), node);
        node = push(net, pool2(), node);
        static const int widths[4] = { 64, 128, 256, 512 };
        for (int stage = 0; stage < 4; stage++)
        {
            const int width = scaled(widths[stage], options.scale);
            for (int block = 0; block < 2; block++)
            {
                const int stride = (stage > 0 && block == 0) ? 2 : 1;
                const int block_input = node;
                const std::string prefix = "layer" + std::to_string(stage + 1) + "." + std::to_string(block) + ".";
                node = push(net, conv(channels, width, 3, stride, ++ordinal), node);
                net.labels.emplace_back(prefix + "conv1", ordinal);
                node = push(net, channel_scale(width), node);
                node = push(net, simple(LayerKind::Relu), node);
                node = push(net, conv(width, width, 3, 1, ++ordinal), node);
                net.labels.emplace_back(prefix + "conv2", ordinal);
                node = push(net, channel_scale(width), node);
                int shortcut = block_input;
                if (stride != 1 || channels != width)
                {
                    shortcut = push(net, conv(channels, width, 1, stride, 0), block_input);
                    shortcut = push(net, channel_scale(width), shortcut);
                }
                LayerSpec add = simple(LayerKind::AddSkip);
                add.skip = shortcut;
                node = push(net, add, node);
                node = push(net, simple(LayerKind::Relu), node);
                channels = width;
            }
        }
        net.features = node;
        net.head_start = node + 1;
        net.main_output = append_head(net, node, channels, options.head);
        validate(net);
        return net;
    }

    NetworkSpec build_network(const std::string &arch, const BuildOptions &options)
    {
        if (arch == "vgg13")
            return build_vgg13(options);
        if (arch == "resnet18")
            return build_resnet18(options);
        fail(ErrorCode::Config, "unknown architecture '" + arch + "' (expected vgg13 or resnet18)");
    }

    std::vector<RfEntry> receptive_fields(const NetworkSpec &net)
    {
        std::vector<RfEntry> table(net.layers.size());
        const RfEntry origin;
        for (std::size_t i = 0; i < net.layers.size(); i++)
        {
            const LayerSpec &l = net.layers[i];
            const RfEntry &src = l.input < 0 ? origin : table[l.input];
            RfEntry e = src;
            e.node = static_cast<int>(i);
            e.layer_index = l.ordinal;
            switch (l.kind)
            {
                case LayerKind::Conv:
                case LayerKind::MaxPool:
                case LayerKind::AvgPool:
                    e.rf = src.rf + (l.kernel - 1) * src.jump;
                    e.jump = src.jump * l.stride;
                    e.center_offset = src.center_offset + ((l.kernel - 1) / 2.0 - l.padding) * src.jump;
                    break;
                case LayerKind::AddSkip:
                {
                    const RfEntry &other = table[l.skip];
                    if (other.rf > e.rf)
                    {
                        e.rf = other.rf;
                        e.center_offset = other.center_offset;
                    }
                    break;
                }
                case LayerKind::GlobalAvgPool:
                    e.rf = std::max(net.input_h, net.input_w);
                    break;
                default:
                    break;
            }
            table[i] = e;
        }
        return table;
    }

    std::vector<RfEntry> theoretical_rf(const NetworkSpec &net)
    {
        std::vector<RfEntry> result;
        for (const RfEntry &e : receptive_fields(net))
            if (e.layer_index > 0)
                result.push_back(e);
        return result;
    }
}

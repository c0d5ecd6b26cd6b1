#include "rfsv/network.hpp"
#include "rfsv/error.hpp"
#include "rfsv/kernels.hpp"
#include "rfsv/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <map>
#include <sstream>

namespace rfsv
{
    std::string head_name(HeadType type)
    {
        return type == HeadType::Vgg ? "vgg" : "resnet";
    }

    HeadType parse_head(const std::string &name)
    {
        if (name == "resnet" || name == "resnet_type" || name == "R")
            return HeadType::ResNet;
        if (name == "vgg" || name == "vgg_type" || name == "V")
            return HeadType::Vgg;
        fail(ErrorCode::Config, "unknown classifier type '" + name + "'");
    }

    int NetworkSpec::conv_count() const
    {
        return static_cast<int>(std::count_if(layers.begin(), layers.end(), [](const LayerSpec &l) { return l.ordinal > 0; }));
    }

    std::vector<int> NetworkSpec::conv_ordinals() const
    {
        std::vector<int> result;
        for (const auto &l : layers)
            if (l.ordinal > 0)
                result.push_back(l.ordinal);
        return result;
    }

    int NetworkSpec::conv_node(int ordinal) const
    {
        for (std::size_t i = 0; i < layers.size(); i++)
            if (layers[i].ordinal == ordinal && layers[i].kind == LayerKind::Conv)
                return static_cast<int>(i);
        fail(ErrorCode::Config, "network has no conv layer with ordinal " + std::to_string(ordinal));
    }

    int NetworkSpec::activation_node(int ordinal) const
    {
        const int node = conv_node(ordinal);
        for (std::size_t i = node + 1; i < layers.size(); i++)
            if (layers[i].input == node)
                return layers[i].kind == LayerKind::Relu ? static_cast<int>(i) : node;
        return node;
    }

    int NetworkSpec::resolve(const std::string &handle) const
    {
        for (const auto &[name, ordinal] : labels)
            if (name == handle)
                return ordinal;
        std::string digits = handle;
        if (!digits.empty() && digits.front() == '#')
            digits.erase(0, 1);
        int value = 0;
        const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
        if (ec == std::errc() && ptr == digits.data() + digits.size() && !digits.empty())
        {
            conv_node(value);
            return value;
        }
        fail(ErrorCode::Config, "unknown layer handle '" + handle + "' for " + arch);
    }

    std::string NetworkSpec::label(int ordinal) const
    {
        for (const auto &[name, value] : labels)
            if (value == ordinal)
                return name;
        return "#" + std::to_string(ordinal);
    }

    std::vector<Shape> infer_shapes(const NetworkSpec &net, int batch)
    {
        std::vector<Shape> shapes;
        shapes.reserve(net.layers.size());
        const Shape in = net.input_shape(batch);
        int last_ordinal = 0;
        for (std::size_t i = 0; i < net.layers.size(); i++)
        {
            const LayerSpec &layer = net.layers[i];
            if (layer.input >= static_cast<int>(i) || layer.input < -1)
                fail(ErrorCode::Config, "node " + std::to_string(i) + " reads from node " + std::to_string(layer.input) + " which is not earlier");
            if (layer.ordinal > 0)
            {
                if (layer.kind != LayerKind::Conv)
                    fail(ErrorCode::Config, "node " + std::to_string(i) + " has a conv ordinal but is " + kind_name(layer.kind));
                if (layer.ordinal <= last_ordinal)
                    fail(ErrorCode::Config, "conv ordinals must increase along the network (node " + std::to_string(i) + ")");
                last_ordinal = layer.ordinal;
            }
            const Shape src = layer.input < 0 ? in : shapes[layer.input];
            if (layer.kind == LayerKind::AddSkip)
            {
                if (layer.skip < 0 || layer.skip >= static_cast<int>(i))
                    fail(ErrorCode::Config, "residual node " + std::to_string(i) + " has no valid skip operand");
                if (shapes[layer.skip] != src)
                    fail(ErrorCode::Shape, "residual node " + std::to_string(i) + ": operands " + src.str() + " and "
                            + shapes[layer.skip].str() + " differ");
            }
            try
            {
                shapes.push_back(output_shape(layer, src));
            }
            catch (const Error &e)
            {
                throw Error(e.code(), "node " + std::to_string(i) + ": " + e.what());
            }
        }
        return shapes;
    }

    void validate(const NetworkSpec &net)
    {
        if (net.layers.empty())
            fail(ErrorCode::Config, "network has no layers");
        if (net.conv_count() < 1)
            fail(ErrorCode::Config, "network has no conv layer");
        if (net.num_classes < 2)
            fail(ErrorCode::Config, "num_classes must be at least 2");
        const auto shapes = infer_shapes(net, 1);
        const int count = static_cast<int>(net.layers.size());
        if (net.main_output < 0 || net.main_output >= count)
            fail(ErrorCode::Config, "main output node out of range");
        if (shapes[net.main_output] != Shape { 1, net.num_classes, 1, 1 })
            fail(ErrorCode::Shape, "main output shape " + shapes[net.main_output].str() + " is not [1," + std::to_string(net.num_classes) + ",1,1]");
        for (const auto &a : net.aux)
        {
            if (a.output_node < 0 || a.output_node >= count || a.tap_node < 0 || a.tap_node >= count)
                fail(ErrorCode::Config, "aux branch nodes out of range");
            if (shapes[a.output_node] != Shape { 1, net.num_classes, 1, 1 })
                fail(ErrorCode::Shape, "aux output shape " + shapes[a.output_node].str());
        }
        for (const auto &[name, ordinal] : net.labels)
            net.conv_node(ordinal);
    }

    namespace
    {
        std::string format_double(double v)
        {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            return buf;
        }

        std::string layer_kind_token(const LayerSpec &l)
        {
            switch (l.kind)
            {
                case LayerKind::Conv:
                case LayerKind::MaxPool:
                case LayerKind::AvgPool:
                    return kind_name(l.kind) + std::to_string(l.kernel) + "x" + std::to_string(l.kernel);
                default:
                    return kind_name(l.kind);
            }
        }

        std::map<std::string, std::string> parse_fields(std::istringstream &line, int line_no)
        {
            std::map<std::string, std::string> fields;
            std::string token;
            while (line >> token)
            {
                const auto eq = token.find('=');
                if (eq == std::string::npos || eq == 0)
                    fail(ErrorCode::Config, "network line " + std::to_string(line_no) + ": expected key=value, got '" + token + "'");
                fields[token.substr(0, eq)] = token.substr(eq + 1);
            }
            return fields;
        }

        int to_int(const std::string &s, const std::string &key, int line_no)
        {
            int value = 0;
            const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
            if (ec != std::errc() || ptr != s.data() + s.size())
                fail(ErrorCode::Config, "network line " + std::to_string(line_no) + ": " + key + " is not an integer: '" + s + "'");
            return value;
        }

        class Fields
        {
        public:
            Fields(std::map<std::string, std::string> fields, int line_no) :
                    m_fields(std::move(fields)), m_line(line_no)
            {
            }
            bool has(const std::string &key) const
            {
                return m_fields.count(key) != 0;
            }
            std::string str(const std::string &key)
            {
                const auto it = m_fields.find(key);
                if (it == m_fields.end())
                    fail(ErrorCode::Config, "network line " + std::to_string(m_line) + ": missing key '" + key + "'");
                std::string v = it->second;
                m_fields.erase(it);
                return v;
            }
            int integer(const std::string &key)
            {
                return to_int(str(key), key, m_line);
            }
            int integer(const std::string &key, int fallback)
            {
                return has(key) ? integer(key) : fallback;
            }
            void finish() const
            {
                if (!m_fields.empty())
                    fail(ErrorCode::Config, "network line " + std::to_string(m_line) + ": unknown key '" + m_fields.begin()->first + "'");
            }
        private:
            std::map<std::string, std::string> m_fields;
            int m_line;
        };

        /// "conv3x3" -> {"conv", 3}
        std::pair<std::string, int> split_kind(const std::string &token)
        {
            const auto x = token.rfind('x');
            std::size_t digits = token.size();
            while (digits > 0 && std::isdigit(static_cast<unsigned char>(token[digits - 1])))
                digits--;
            if (x != std::string::npos && x > 0 && digits == x + 1)
            {
                std::size_t start = x;
                while (start > 0 && std::isdigit(static_cast<unsigned char>(token[start - 1])))
                    start--;
                if (start < x && token.substr(start, x - start) == token.substr(x + 1))
                    return { token.substr(0, start), std::stoi(token.substr(x + 1)) };
            }
            return { token, 0 };
        }
    }

    std::string to_text(const NetworkSpec &net)
    {
        std::ostringstream out;
        out << "network arch=" << net.arch << " scale=" << format_double(net.scale) << " input=" << net.input_channels << "x" << net.input_h
                << "x" << net.input_w << " classes=" << net.num_classes << " head=" << head_name(net.head) << "\n";
        for (std::size_t i = 0; i < net.layers.size(); i++)
        {
            const LayerSpec &l = net.layers[i];
            out << "layer kind=" << layer_kind_token(l);
            if (l.has_params())
                out << " in=" << l.in_channels << " out=" << l.out_channels;
            if (l.kind == LayerKind::Conv || l.kind == LayerKind::MaxPool || l.kind == LayerKind::AvgPool)
                out << " stride=" << l.stride;
            if (l.kind == LayerKind::Conv)
                out << " pad=" << l.padding;
            if (l.has_params() && !l.bias)
                out << " bias=0";
            if (l.kind == LayerKind::Dropout)
                out << " rate=" << format_double(l.drop_rate);
            if (l.ordinal > 0)
                out << " ordinal=" << l.ordinal;
            if (l.input != static_cast<int>(i) - 1)
                out << " from=" << l.input;
            if (l.kind == LayerKind::AddSkip)
                out << " skip=" << l.skip;
            out << "\n";
        }
        out << "output main=" << net.main_output << " features=" << net.features << " head_start=" << net.head_start << "\n";
        for (const auto &a : net.aux)
            out << "aux ordinal=" << a.target_ordinal << " tap=" << a.tap_node << " first=" << a.first_node << " out=" << a.output_node << " type="
                    << head_name(a.type) << "\n";
        for (const auto &[name, ordinal] : net.labels)
            out << "label name=" << name << " ordinal=" << ordinal << "\n";
        return out.str();
    }

    NetworkSpec parse_network(const std::string &text)
    {
        NetworkSpec net;
        net.layers.clear();
        std::istringstream in(text);
        std::string raw;
        int line_no = 0;
        bool have_header = false;
        while (std::getline(in, raw))
        {
            line_no++;
            const auto hash = raw.find('#');
            if (hash != std::string::npos && (hash == 0 || raw[hash - 1] == ' '))
                raw.erase(hash);
            std::istringstream line(raw);
            std::string word;
            if (!(line >> word))
                continue;
            Fields f(parse_fields(line, line_no), line_no);
            if (word == "network")
            {
                net.arch = f.str("arch");
                net.scale = std::stod(f.str("scale"));
                const std::string input = f.str("input");
                if (std::sscanf(input.c_str(), "%dx%dx%d", &net.input_channels, &net.input_h, &net.input_w) != 3)
                    fail(ErrorCode::Config, "network line " + std::to_string(line_no) + ": input must be CxHxW");
                net.num_classes = f.integer("classes");
                net.head = parse_head(f.str("head"));
                have_header = true;
            }
            else if (word == "layer")
            {
                LayerSpec l;
                const auto [kind, k] = split_kind(f.str("kind"));
                if (kind == "conv")
                    l.kind = LayerKind::Conv;
                else if (kind == "maxpool")
                    l.kind = LayerKind::MaxPool;
                else if (kind == "avgpool")
                    l.kind = LayerKind::AvgPool;
                else if (kind == "relu")
                    l.kind = LayerKind::Relu;
                else if (kind == "global_avg_pool")
                    l.kind = LayerKind::GlobalAvgPool;
                else if (kind == "fully_connected")
                    l.kind = LayerKind::FullyConnected;
                else if (kind == "add_skip")
                    l.kind = LayerKind::AddSkip;
                else if (kind == "channel_scale")
                    l.kind = LayerKind::ChannelScale;
                else if (kind == "dropout")
                    l.kind = LayerKind::Dropout;
                else
                    fail(ErrorCode::Config, "network line " + std::to_string(line_no) + ": unknown layer kind '" + kind + "'");
                const bool windowed = l.kind == LayerKind::Conv || l.kind == LayerKind::MaxPool || l.kind == LayerKind::AvgPool;
                if (windowed && k <= 0)
                    fail(ErrorCode::Config, "network line " + std::to_string(line_no) + ": window size missing in kind");
                l.kernel = windowed ? k : 1;
                const bool pool = l.kind == LayerKind::MaxPool || l.kind == LayerKind::AvgPool;
                l.stride = f.integer("stride", pool ? l.kernel : 1);
                l.padding = f.integer("pad", 0);
                if (l.has_params())
                {
                    l.in_channels = f.integer("in");
                    l.out_channels = f.integer("out");
                    l.bias = f.integer("bias", 1) != 0;
                }
                if (f.has("rate"))
                    l.drop_rate = std::stof(f.str("rate"));
                l.ordinal = f.integer("ordinal", 0);
                l.input = f.integer("from", static_cast<int>(net.layers.size()) - 1);
                l.skip = f.integer("skip", -1);
                net.layers.push_back(l);
            }
            else if (word == "output")
            {
                net.main_output = f.integer("main");
                net.features = f.integer("features", -1);
                net.head_start = f.integer("head_start", -1);
            }
            else if (word == "aux")
            {
                AuxBranch a;
                a.target_ordinal = f.integer("ordinal");
                a.tap_node = f.integer("tap");
                a.first_node = f.integer("first");
                a.output_node = f.integer("out");
                a.type = parse_head(f.str("type"));
                net.aux.push_back(a);
            }
            else if (word == "label")
            {
                const std::string name = f.str("name");
                net.labels.emplace_back(name, f.integer("ordinal"));
            }
            else
                fail(ErrorCode::Config, "network line " + std::to_string(line_no) + ": unknown record '" + word + "'");
            f.finish();
        }
        if (!have_header)
            fail(ErrorCode::Config, "network description has no 'network' header line");
        // channel scales carry their width in out=, mirror it to in=
        for (auto &l : net.layers)
            if (l.kind == LayerKind::ChannelScale && l.in_channels == 0)
                l.in_channels = l.out_channels;
        validate(net);
        return net;
    }

    std::size_t Model::parameter_count() const
    {
        std::size_t total = 0;
        for (const auto &p : params)
            total += p.weight.size() + p.bias.size();
        return total;
    }

    void reinit_nodes(Model &model, int first, int last, std::uint64_t seed)
    {
        const auto &layers = model.spec.layers;
        for (int i = first; i < last; i++)
        {
            const LayerSpec &l = layers[i];
            LayerParams &p = model.params[i];
            if (!l.has_params())
            {
                p = {};
                continue;
            }
            if (l.kind == LayerKind::ChannelScale)
                p.weight = Tensor(weight_shape(l), 1.0f);
            else
                p.weight = he_init(weight_shape(l), derive_seed(seed, static_cast<std::uint64_t>(i)));
            p.bias = l.bias ? Tensor(bias_shape(l), 0.0f) : Tensor();
        }
    }

    Model init_model(const NetworkSpec &net, std::uint64_t seed)
    {
        validate(net);
        Model model { net, std::vector<LayerParams>(net.layers.size()) };
        reinit_nodes(model, 0, static_cast<int>(net.layers.size()), seed);
        return model;
    }

    namespace
    {
        bool is_aux_node(const NetworkSpec &net, int node)
        {
            for (const auto &a : net.aux)
                if (node >= a.first_node && node <= a.output_node)
                    return true;
            return false;
        }

        RunContext node_context(const RunContext &ctx, int node)
        {
            RunContext c = ctx;
            c.dropout_seed = derive_seed(ctx.dropout_seed, static_cast<std::uint64_t>(node));
            return c;
        }
    }

    ForwardCache forward(const Model &model, const Tensor &input, const RunContext &ctx, int upto, bool with_aux)
    {
        const NetworkSpec &net = model.spec;
        const Shape expected = net.input_shape(input.shape().n);
        if (input.shape() != expected)
            fail(ErrorCode::Shape, "network input " + input.shape().str() + " does not match expected " + expected.str());
        const int count = static_cast<int>(net.layers.size());
        const int last = upto < 0 ? count - 1 : std::min(upto, count - 1);
        ForwardCache cache;
        cache.input = input;
        cache.ctx = ctx;
        cache.outputs.resize(count);
        for (int i = 0; i <= last; i++)
        {
            if (!with_aux && is_aux_node(net, i))
                continue;
            const LayerSpec &l = net.layers[i];
            const Tensor &src = l.input < 0 ? cache.input : cache.outputs[l.input];
            const Tensor *skip = l.kind == LayerKind::AddSkip ? &cache.outputs[l.skip] : nullptr;
            try
            {
                cache.outputs[i] = rfsv::forward(l, model.params[i], src, skip, node_context(ctx, i));
            }
            catch (const Error &e)
            {
                throw Error(e.code(), "node " + std::to_string(i) + ": " + e.what());
            }
            require_finite(cache.outputs[i], "node " + std::to_string(i) + " (" + l.describe() + ")");
        }
        cache.computed = last + 1;
        return cache;
    }

    namespace
    {
        void accumulate(Tensor &dst, const Tensor &src)
        {
            if (src.empty())
                return;
            if (dst.empty())
            {
                dst = src;
                return;
            }
            if (dst.shape() != src.shape())
                fail(ErrorCode::Shape, "gradient accumulation shape mismatch " + dst.shape().str() + " vs " + src.shape().str());
            kernels::axpy(dst.size(), 1.0f, src.data(), dst.data());
        }
    }

    Gradients backward(const Model &model, const ForwardCache &cache, const GradSeeds &seeds, BackwardOptions options)
    {
        const NetworkSpec &net = model.spec;
        const int count = static_cast<int>(net.layers.size());
        std::vector<Tensor> node_grads(count);
        int start = -1;
        for (const auto &[node, grad] : seeds)
        {
            if (node < 0 || node >= count || node >= cache.computed || cache.outputs[node].empty())
                fail(ErrorCode::State, "backward: node " + std::to_string(node) + " has no cached forward output");
            if (grad.shape() != cache.outputs[node].shape())
                fail(ErrorCode::Shape, "backward: seed gradient " + grad.shape().str() + " does not match node " + std::to_string(node) + " output "
                        + cache.outputs[node].shape().str());
            accumulate(node_grads[node], grad);
            start = std::max(start, node);
        }
        Gradients result;
        result.params.resize(count);
        for (int i = start; i >= 0; i--)
        {
            if (node_grads[i].empty())
                continue;
            const LayerSpec &l = net.layers[i];
            const Tensor &src = l.input < 0 ? cache.input : cache.outputs[l.input];
            if (src.empty())
                fail(ErrorCode::State, "backward: input of node " + std::to_string(i) + " was not cached");
            const Tensor *skip = l.kind == LayerKind::AddSkip ? &cache.outputs[l.skip] : nullptr;
            const bool need_input = options.input_grad || l.input >= 0;
            LayerGrads g = rfsv::backward(l, model.params[i], src, skip, node_grads[i], node_context(cache.ctx, i),
                    { need_input, options.param_grads });
            if (options.param_grads && l.has_params())
            {
                require_finite(g.params.weight, "gradient of node " + std::to_string(i));
                result.params[i] = std::move(g.params);
            }
            if (l.input >= 0)
                accumulate(node_grads[l.input], g.input);
            else if (options.input_grad)
                accumulate(result.input, g.input);
            if (l.kind == LayerKind::AddSkip)
                accumulate(node_grads[l.skip], g.skip);
            node_grads[i] = Tensor();
        }
        if (options.input_grad && result.input.empty())
            result.input = Tensor(cache.input.shape());
        return result;
    }
}

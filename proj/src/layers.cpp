#include "rfsv/layers.hpp"
#include "rfsv/error.hpp"
#include "rfsv/kernels.hpp"
#include "rfsv/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace rfsv
{
    std::string kind_name(LayerKind kind)
    {
        switch (kind)
        {
            case LayerKind::Conv:
                return "conv";
            case LayerKind::Relu:
                return "relu";
            case LayerKind::MaxPool:
                return "maxpool";
            case LayerKind::AvgPool:
                return "avgpool";
            case LayerKind::GlobalAvgPool:
                return "global_avg_pool";
            case LayerKind::FullyConnected:
                return "fully_connected";
            case LayerKind::AddSkip:
                return "add_skip";
            case LayerKind::ChannelScale:
                return "channel_scale";
            case LayerKind::Dropout:
                return "dropout";
        }
        return "unknown";
    }

    std::string LayerSpec::describe() const
    {
        std::string name = kind_name(kind);
        if (kind == LayerKind::Conv)
            name += std::to_string(kernel) + "x" + std::to_string(kernel);
        if (ordinal > 0)
            name += " #" + std::to_string(ordinal);
        return name;
    }

    namespace
    {
        [[noreturn]] void shape_error(const LayerSpec &layer, Shape in, const std::string &what)
        {
            fail(ErrorCode::Shape, "layer " + layer.describe() + ": input " + in.str() + " " + what);
        }

        struct PoolGeometry
        {
            int out_h;
            int out_w;
        };

        PoolGeometry pool_geometry(const LayerSpec &layer, Shape in)
        {
            if (layer.kernel < 1 || layer.stride < 1)
                shape_error(layer, in, "has invalid pooling window");
            if (in.h < layer.kernel || in.w < layer.kernel)
                shape_error(layer, in, "is smaller than the pooling window " + std::to_string(layer.kernel));
            return { (in.h - layer.kernel) / layer.stride + 1, (in.w - layer.kernel) / layer.stride + 1 };
        }

        LayerKind effective_kind(const LayerSpec &layer, const RunContext &ctx)
        {
            if (ctx.linear && layer.kind == LayerKind::MaxPool)
                return LayerKind::AvgPool;
            return layer.kind;
        }
    }

    Shape weight_shape(const LayerSpec &layer)
    {
        switch (layer.kind)
        {
            case LayerKind::Conv:
                return { layer.out_channels, layer.in_channels, layer.kernel, layer.kernel };
            case LayerKind::FullyConnected:
                return { layer.out_channels, layer.in_channels, 1, 1 };
            case LayerKind::ChannelScale:
                return { 1, layer.out_channels, 1, 1 };
            default:
                return {};
        }
    }

    Shape bias_shape(const LayerSpec &layer)
    {
        if (!layer.has_params() || !layer.bias)
            return {};
        return { 1, layer.out_channels, 1, 1 };
    }

    Shape output_shape(const LayerSpec &layer, Shape in)
    {
        if (in.n < 1 || in.c < 1 || in.h < 1 || in.w < 1)
            shape_error(layer, in, "is empty");
        switch (layer.kind)
        {
            case LayerKind::Conv:
            {
                if (in.c != layer.in_channels)
                    shape_error(layer, in, "has " + std::to_string(in.c) + " channels, expected " + std::to_string(layer.in_channels));
                if (layer.kernel < 1 || layer.kernel % 2 == 0)
                    shape_error(layer, in, "kernel must be odd");
                if (layer.stride < 1 || layer.padding < 0 || layer.padding > layer.kernel - 1)
                    shape_error(layer, in, "stride/padding invalid");
                const int oh = (in.h + 2 * layer.padding - layer.kernel) / layer.stride + 1;
                const int ow = (in.w + 2 * layer.padding - layer.kernel) / layer.stride + 1;
                if (in.h + 2 * layer.padding < layer.kernel || in.w + 2 * layer.padding < layer.kernel)
                    shape_error(layer, in, "is smaller than the kernel");
                return { in.n, layer.out_channels, oh, ow };
            }
            case LayerKind::Relu:
            case LayerKind::Dropout:
            case LayerKind::AddSkip:
                return in;
            case LayerKind::ChannelScale:
                if (in.c != layer.out_channels)
                    shape_error(layer, in, "channel count differs from scale vector " + std::to_string(layer.out_channels));
                return in;
            case LayerKind::MaxPool:
            case LayerKind::AvgPool:
            {
                const PoolGeometry g = pool_geometry(layer, in);
                return { in.n, in.c, g.out_h, g.out_w };
            }
            case LayerKind::GlobalAvgPool:
                return { in.n, in.c, 1, 1 };
            case LayerKind::FullyConnected:
                if (in.c * in.h * in.w != layer.in_channels)
                    shape_error(layer, in, "flattens to " + std::to_string(in.c * in.h * in.w) + " features, expected "
                            + std::to_string(layer.in_channels));
                return { in.n, layer.out_channels, 1, 1 };
        }
        shape_error(layer, in, "unknown layer kind");
    }

    namespace
    {
        void check_params(const LayerSpec &layer, const LayerParams &params)
        {
            if (!layer.has_params())
                return;
            if (params.weight.shape() != weight_shape(layer))
                fail(ErrorCode::Shape, "layer " + layer.describe() + ": weight shape " + params.weight.shape().str() + ", expected "
                        + weight_shape(layer).str());
            if (layer.bias && params.bias.shape() != bias_shape(layer))
                fail(ErrorCode::Shape, "layer " + layer.describe() + ": bias shape " + params.bias.shape().str() + ", expected "
                        + bias_shape(layer).str());
        }

        /// Zero-padded copy of one sample, planes of (h+2p) x (w+2p) with a zeroed tail
        /// so that wide row reads past the last plane stay in bounds.
        struct Padded
        {
            std::vector<float> data;
            int hp = 0;
            int wp = 0;
            std::size_t plane = 0;
        };

        Padded pad_sample(const Tensor &t, int n, int pad, int tail)
        {
            const Shape s = t.shape();
            Padded p;
            p.hp = s.h + 2 * pad;
            p.wp = s.w + 2 * pad;
            p.plane = static_cast<std::size_t>(p.hp) * p.wp;
            p.data.assign(p.plane * s.c + p.wp + tail, 0.0f);
            for (int c = 0; c < s.c; c++)
            {
                const float *src = t.plane(n, c);
                float *dst = p.data.data() + c * p.plane;
                for (int y = 0; y < s.h; y++)
                    std::copy(src + y * s.w, src + (y + 1) * s.w, dst + (y + pad) * p.wp + pad);
            }
            return p;
        }

        /// Valid stride-1 correlation over padded planes, writing rows [row0, row1)
        /// of `out` (already initialised, width out_w) through a wide scratch row buffer.
        void correlate_stride1(const Padded &in, int channels, const float *weights, int out_channels, int k, int out_h,
                int out_w, float *out, std::size_t out_plane, int row0, int row1)
        {
            if (row0 >= row1)
                return;
            const std::size_t taps = static_cast<std::size_t>(channels) * k * k;
            std::vector<std::ptrdiff_t> offsets(taps);
            for (int c = 0, t = 0; c < channels; c++)
                for (int ky = 0; ky < k; ky++)
                    for (int kx = 0; kx < k; kx++, t++)
                        offsets[t] = static_cast<std::ptrdiff_t>(c * in.plane) + ky * in.wp + kx + row0 * in.wp;
            const std::size_t rows = row1 - row0;
            const std::size_t wide = rows * in.wp;
            std::vector<float> acc(wide);
            for (int o = 0; o < out_channels; o++)
            {
                float *dst = out + o * out_plane;
                for (std::size_t r = 0; r < rows; r++)
                    std::copy(dst + (row0 + r) * out_w, dst + (row0 + r + 1) * out_w, acc.data() + r * in.wp);
                kernels::taps(wide, taps, weights + o * taps, offsets.data(), in.data.data(), acc.data());
                for (std::size_t r = 0; r < rows; r++)
                    std::copy(acc.data() + r * in.wp, acc.data() + r * in.wp + out_w, dst + (row0 + r) * out_w);
            }
            (void) out_h;
        }

        /// im2col for one sample: col[t][oy*ow+ox], t = (c*k + ky)*k + kx.
        std::vector<float> im2col(const Padded &in, int channels, int k, int stride, int oh, int ow)
        {
            const std::size_t plane = static_cast<std::size_t>(oh) * ow;
            std::vector<float> col(static_cast<std::size_t>(channels) * k * k * plane);
            std::size_t t = 0;
            for (int c = 0; c < channels; c++)
                for (int ky = 0; ky < k; ky++)
                    for (int kx = 0; kx < k; kx++, t++)
                    {
                        float *dst = col.data() + t * plane;
                        const float *src = in.data.data() + c * in.plane;
                        for (int oy = 0; oy < oh; oy++)
                            for (int ox = 0; ox < ow; ox++)
                                dst[oy * ow + ox] = src[(oy * stride + ky) * in.wp + ox * stride + kx];
                    }
            return col;
        }

        void init_with_bias(Tensor &out, const LayerSpec &layer, const LayerParams &params)
        {
            const Shape s = out.shape();
            for (int n = 0; n < s.n; n++)
                for (int c = 0; c < s.c; c++)
                {
                    const float b = layer.bias ? params.bias[c] : 0.0f;
                    std::fill(out.plane(n, c), out.plane(n, c) + s.plane(), b);
                }
        }

        Tensor conv_forward(const LayerSpec &layer, const LayerParams &params, const Tensor &input)
        {
            const Shape in = input.shape();
            Tensor out(output_shape(layer, in));
            const Shape os = out.shape();
            init_with_bias(out, layer, params);
            const int k = layer.kernel;
            const std::size_t taps = static_cast<std::size_t>(in.c) * k * k;
            for (int n = 0; n < in.n; n++)
            {
                const Padded pad = pad_sample(input, n, layer.padding, k);
                if (layer.stride == 1)
                {
                    correlate_stride1(pad, in.c, params.weight.data(), os.c, k, os.h, os.w, out.plane(n, 0), os.plane(), 0, os.h);
                    continue;
                }
                const std::vector<float> col = im2col(pad, in.c, k, layer.stride, os.h, os.w);
                std::vector<std::ptrdiff_t> offsets(taps);
                for (std::size_t t = 0; t < taps; t++)
                    offsets[t] = static_cast<std::ptrdiff_t>(t * os.plane());
                for (int o = 0; o < os.c; o++)
                    kernels::taps(os.plane(), taps, params.weight.data() + o * taps, offsets.data(), col.data(), out.plane(n, o));
            }
            return out;
        }

        /// Row range of grad_out that holds any non-zero value, as [first, last).
        std::pair<int, int> nonzero_rows(const Tensor &t)
        {
            const Shape s = t.shape();
            int first = s.h;
            int last = 0;
            for (int n = 0; n < s.n; n++)
                for (int c = 0; c < s.c; c++)
                {
                    const float *p = t.plane(n, c);
                    for (int y = 0; y < s.h; y++)
                    {
                        const float *row = p + y * s.w;
                        if (std::any_of(row, row + s.w, [](float v) { return v != 0.0f; }))
                        {
                            first = std::min(first, y);
                            last = std::max(last, y + 1);
                        }
                    }
                }
            return { first, last };
        }

        LayerGrads conv_backward(const LayerSpec &layer, const LayerParams &params, const Tensor &input, const Tensor &grad_out,
                BackwardOptions options)
        {
            const Shape in = input.shape();
            const Shape os = grad_out.shape();
            const int k = layer.kernel;
            const int p = layer.padding;
            const std::size_t taps = static_cast<std::size_t>(in.c) * k * k;
            LayerGrads result;
            if (options.param_grads)
            {
                result.params.weight = Tensor(params.weight.shape());
                if (layer.bias)
                {
                    result.params.bias = Tensor(params.bias.shape());
                    for (int n = 0; n < os.n; n++)
                        for (int o = 0; o < os.c; o++)
                        {
                            const float *g = grad_out.plane(n, o);
                            double sum = 0.0;
                            for (std::size_t i = 0; i < os.plane(); i++)
                                sum += g[i];
                            result.params.bias[o] += static_cast<float>(sum);
                        }
                }
            }
            if (options.input_grad)
                result.input = Tensor(in);

            if (layer.stride == 1)
            {
                // Input gradient is a stride-1 correlation of the gradient, zero padded by
                // k-1-p, with the spatially flipped and channel-transposed kernel.
                std::vector<float> flipped;
                if (options.input_grad)
                {
                    flipped.resize(params.weight.size());
                    for (int o = 0; o < os.c; o++)
                        for (int c = 0; c < in.c; c++)
                            for (int ky = 0; ky < k; ky++)
                                for (int kx = 0; kx < k; kx++)
                                    flipped[((static_cast<std::size_t>(c) * os.c + o) * k + ky) * k + kx] = params.weight[((static_cast<std::size_t>(o)
                                            * in.c + c) * k + (k - 1 - ky)) * k + (k - 1 - kx)];
                }
                const auto [g0, g1] = nonzero_rows(grad_out);
                for (int n = 0; n < in.n; n++)
                {
                    if (options.input_grad && g0 < g1)
                    {
                        const int q = k - 1 - p;
                        const Padded gpad = pad_sample(grad_out, n, q, k);
                        const int row0 = std::max(0, g0 - p);
                        const int row1 = std::min(in.h, g1 + k - 1 - p);
                        correlate_stride1(gpad, os.c, flipped.data(), in.c, k, in.h, in.w, result.input.plane(n, 0), in.plane(), row0, row1);
                    }
                    if (options.param_grads)
                    {
                        const Padded xpad = pad_sample(input, n, p, k);
                        std::vector<float> wide(static_cast<std::size_t>(os.h) * xpad.wp, 0.0f);
                        for (int o = 0; o < os.c; o++)
                        {
                            const float *g = grad_out.plane(n, o);
                            for (int y = 0; y < os.h; y++)
                                std::copy(g + y * os.w, g + (y + 1) * os.w, wide.data() + y * xpad.wp);
                            float *dw = result.params.weight.data() + o * taps;
                            for (int c = 0, t = 0; c < in.c; c++)
                                for (int ky = 0; ky < k; ky++)
                                    for (int kx = 0; kx < k; kx++, t++)
                                        dw[t] += kernels::dot(wide.size(), wide.data(), xpad.data.data() + c * xpad.plane + ky * xpad.wp + kx);
                        }
                    }
                }
                return result;
            }

            std::vector<float> column_weights(os.c);
            std::vector<std::ptrdiff_t> channel_offsets(os.c);
            for (int o = 0; o < os.c; o++)
                channel_offsets[o] = static_cast<std::ptrdiff_t>(o * os.plane());
            for (int n = 0; n < in.n; n++)
            {
                const Padded xpad = pad_sample(input, n, p, k);
                if (options.param_grads)
                {
                    const std::vector<float> col = im2col(xpad, in.c, k, layer.stride, os.h, os.w);
                    for (int o = 0; o < os.c; o++)
                        for (std::size_t t = 0; t < taps; t++)
                            result.params.weight[o * taps + t] += kernels::dot(os.plane(), grad_out.plane(n, o), col.data() + t * os.plane());
                }
                if (!options.input_grad)
                    continue;
                std::vector<float> dcol(taps * os.plane(), 0.0f);
                for (std::size_t t = 0; t < taps; t++)
                {
                    for (int o = 0; o < os.c; o++)
                        column_weights[o] = params.weight[o * taps + t];
                    kernels::taps(os.plane(), os.c, column_weights.data(), channel_offsets.data(), grad_out.plane(n, 0), dcol.data() + t * os.plane());
                }
                std::vector<float> gpad(xpad.plane * in.c, 0.0f);
                std::size_t t = 0;
                for (int c = 0; c < in.c; c++)
                    for (int ky = 0; ky < k; ky++)
                        for (int kx = 0; kx < k; kx++, t++)
                        {
                            const float *src = dcol.data() + t * os.plane();
                            float *dst = gpad.data() + c * xpad.plane;
                            for (int oy = 0; oy < os.h; oy++)
                                for (int ox = 0; ox < os.w; ox++)
                                    dst[(oy * layer.stride + ky) * xpad.wp + ox * layer.stride + kx] += src[oy * os.w + ox];
                        }
                for (int c = 0; c < in.c; c++)
                {
                    float *dst = result.input.plane(n, c);
                    const float *src = gpad.data() + c * xpad.plane;
                    for (int y = 0; y < in.h; y++)
                        std::copy(src + (y + p) * xpad.wp + p, src + (y + p) * xpad.wp + p + in.w, dst + y * in.w);
                }
            }
            return result;
        }

        Tensor pool_forward(LayerKind kind, const LayerSpec &layer, const Tensor &input)
        {
            const Shape in = input.shape();
            const PoolGeometry g = pool_geometry(layer, in);
            Tensor out(Shape { in.n, in.c, g.out_h, g.out_w });
            const float inv_area = 1.0f / static_cast<float>(layer.kernel * layer.kernel);
            for (int n = 0; n < in.n; n++)
                for (int c = 0; c < in.c; c++)
                {
                    const float *src = input.plane(n, c);
                    float *dst = out.plane(n, c);
                    for (int oy = 0; oy < g.out_h; oy++)
                        for (int ox = 0; ox < g.out_w; ox++)
                        {
                            const float *win = src + oy * layer.stride * in.w + ox * layer.stride;
                            float value = kind == LayerKind::MaxPool ? win[0] : 0.0f;
                            for (int ky = 0; ky < layer.kernel; ky++)
                                for (int kx = 0; kx < layer.kernel; kx++)
                                {
                                    const float v = win[ky * in.w + kx];
                                    if (kind == LayerKind::MaxPool)
                                        value = std::max(value, v);
                                    else
                                        value += v;
                                }
                            dst[oy * g.out_w + ox] = kind == LayerKind::MaxPool ? value : value * inv_area;
                        }
                }
            return out;
        }

        Tensor pool_backward(LayerKind kind, const LayerSpec &layer, const Tensor &input, const Tensor &grad_out)
        {
            const Shape in = input.shape();
            const PoolGeometry g = pool_geometry(layer, in);
            Tensor grad(in);
            const float inv_area = 1.0f / static_cast<float>(layer.kernel * layer.kernel);
            for (int n = 0; n < in.n; n++)
                for (int c = 0; c < in.c; c++)
                {
                    const float *src = input.plane(n, c);
                    const float *go = grad_out.plane(n, c);
                    float *dst = grad.plane(n, c);
                    for (int oy = 0; oy < g.out_h; oy++)
                        for (int ox = 0; ox < g.out_w; ox++)
                        {
                            const float gv = go[oy * g.out_w + ox];
                            if (gv == 0.0f)
                                continue;
                            const int base = oy * layer.stride * in.w + ox * layer.stride;
                            if (kind == LayerKind::AvgPool)
                            {
                                for (int ky = 0; ky < layer.kernel; ky++)
                                    for (int kx = 0; kx < layer.kernel; kx++)
                                        dst[base + ky * in.w + kx] += gv * inv_area;
                                continue;
                            }
                            // first maximum in scan order receives the gradient
                            int best = base;
                            for (int ky = 0; ky < layer.kernel; ky++)
                                for (int kx = 0; kx < layer.kernel; kx++)
                                    if (src[base + ky * in.w + kx] > src[best])
                                        best = base + ky * in.w + kx;
                            dst[best] += gv;
                        }
                }
            return grad;
        }

        /// Inverted-dropout keep mask for one call, regenerated from the seed on backward.
        std::vector<float> dropout_mask(std::size_t size, float rate, std::uint64_t seed)
        {
            Rng rng(seed);
            const float keep_scale = 1.0f / (1.0f - rate);
            std::vector<float> mask(size);
            for (auto &m : mask)
                m = rng.uniform() < rate ? 0.0f : keep_scale;
            return mask;
        }
    }

    Tensor forward(const LayerSpec &layer, const LayerParams &params, const Tensor &input, const Tensor *skip, const RunContext &ctx)
    {
        const Shape out_shape = output_shape(layer, input.shape());
        check_params(layer, params);
        const LayerKind kind = effective_kind(layer, ctx);
        switch (kind)
        {
            case LayerKind::Conv:
                return conv_forward(layer, params, input);
            case LayerKind::Relu:
            {
                Tensor out = input;
                if (!ctx.linear)
                    for (auto &v : out.values())
                        v = v > 0.0f ? v : 0.0f;
                return out;
            }
            case LayerKind::MaxPool:
            case LayerKind::AvgPool:
                return pool_forward(kind, layer, input);
            case LayerKind::GlobalAvgPool:
            {
                const Shape in = input.shape();
                Tensor out(out_shape);
                for (int n = 0; n < in.n; n++)
                    for (int c = 0; c < in.c; c++)
                    {
                        const float *p = input.plane(n, c);
                        double sum = 0.0;
                        for (std::size_t i = 0; i < in.plane(); i++)
                            sum += p[i];
                        out.at(n, c, 0, 0) = static_cast<float>(sum / static_cast<double>(in.plane()));
                    }
                return out;
            }
            case LayerKind::FullyConnected:
            {
                Tensor out(out_shape);
                const std::size_t features = layer.in_channels;
                for (int n = 0; n < out_shape.n; n++)
                    for (int o = 0; o < layer.out_channels; o++)
                    {
                        const float b = layer.bias ? params.bias[o] : 0.0f;
                        out.at(n, o, 0, 0) = b + kernels::dot(features, params.weight.data() + o * features, input.data() + n * features);
                    }
                return out;
            }
            case LayerKind::AddSkip:
            {
                if (skip == nullptr || skip->shape() != input.shape())
                    fail(ErrorCode::Shape, "layer " + layer.describe() + ": residual operands " + input.shape().str() + " and "
                            + (skip ? skip->shape().str() : std::string("<missing>")) + " differ");
                Tensor out = input;
                kernels::axpy(out.size(), 1.0f, skip->data(), out.data());
                return out;
            }
            case LayerKind::ChannelScale:
            {
                Tensor out(out_shape);
                const Shape in = input.shape();
                for (int n = 0; n < in.n; n++)
                    for (int c = 0; c < in.c; c++)
                    {
                        const float g = params.weight[c];
                        const float b = layer.bias ? params.bias[c] : 0.0f;
                        const float *src = input.plane(n, c);
                        float *dst = out.plane(n, c);
                        for (std::size_t i = 0; i < in.plane(); i++)
                            dst[i] = g * src[i] + b;
                    }
                return out;
            }
            case LayerKind::Dropout:
            {
                if (!ctx.training || layer.drop_rate <= 0.0f)
                    return input;
                Tensor out = input;
                const std::vector<float> mask = dropout_mask(out.size(), layer.drop_rate, ctx.dropout_seed);
                for (std::size_t i = 0; i < out.size(); i++)
                    out[i] *= mask[i];
                return out;
            }
        }
        fail(ErrorCode::Shape, "unknown layer kind");
    }

    LayerGrads backward(const LayerSpec &layer, const LayerParams &params, const Tensor &input, const Tensor *skip,
            const Tensor &grad_out, const RunContext &ctx, BackwardOptions options)
    {
        const Shape out_shape = output_shape(layer, input.shape());
        check_params(layer, params);
        if (grad_out.shape() != out_shape)
            fail(ErrorCode::Shape, "layer " + layer.describe() + ": gradient shape " + grad_out.shape().str() + " does not match output "
                    + out_shape.str());
        const LayerKind kind = effective_kind(layer, ctx);
        LayerGrads result;
        switch (kind)
        {
            case LayerKind::Conv:
                return conv_backward(layer, params, input, grad_out, options);
            case LayerKind::Relu:
                result.input = grad_out;
                if (!ctx.linear)
                    for (std::size_t i = 0; i < input.size(); i++)
                        if (!(input[i] > 0.0f))
                            result.input[i] = 0.0f;
                return result;
            case LayerKind::MaxPool:
            case LayerKind::AvgPool:
                result.input = pool_backward(kind, layer, input, grad_out);
                return result;
            case LayerKind::GlobalAvgPool:
            {
                const Shape in = input.shape();
                result.input = Tensor(in);
                const float inv = 1.0f / static_cast<float>(in.plane());
                for (int n = 0; n < in.n; n++)
                    for (int c = 0; c < in.c; c++)
                        std::fill(result.input.plane(n, c), result.input.plane(n, c) + in.plane(), grad_out.at(n, c, 0, 0) * inv);
                return result;
            }
            case LayerKind::FullyConnected:
            {
                const std::size_t features = layer.in_channels;
                const int batch = out_shape.n;
                if (options.input_grad)
                {
                    result.input = Tensor(input.shape());
                    for (int n = 0; n < batch; n++)
                        for (int o = 0; o < layer.out_channels; o++)
                            kernels::axpy(features, grad_out.at(n, o, 0, 0), params.weight.data() + o * features, result.input.data() + n * features);
                }
                if (options.param_grads)
                {
                    result.params.weight = Tensor(params.weight.shape());
                    for (int o = 0; o < layer.out_channels; o++)
                        for (int n = 0; n < batch; n++)
                            kernels::axpy(features, grad_out.at(n, o, 0, 0), input.data() + n * features, result.params.weight.data() + o * features);
                    if (layer.bias)
                    {
                        result.params.bias = Tensor(params.bias.shape());
                        for (int o = 0; o < layer.out_channels; o++)
                            for (int n = 0; n < batch; n++)
                                result.params.bias[o] += grad_out.at(n, o, 0, 0);
                    }
                }
                return result;
            }
            case LayerKind::AddSkip:
                if (skip == nullptr || skip->shape() != input.shape())
                    fail(ErrorCode::Shape, "layer " + layer.describe() + ": residual operand missing or mismatched");
                result.input = grad_out;
                result.skip = grad_out;
                return result;
            case LayerKind::ChannelScale:
            {
                const Shape in = input.shape();
                result.input = Tensor(in);
                if (options.param_grads)
                {
                    result.params.weight = Tensor(params.weight.shape());
                    if (layer.bias)
                        result.params.bias = Tensor(params.bias.shape());
                }
                for (int n = 0; n < in.n; n++)
                    for (int c = 0; c < in.c; c++)
                    {
                        const float g = params.weight[c];
                        const float *x = input.plane(n, c);
                        const float *go = grad_out.plane(n, c);
                        float *gi = result.input.plane(n, c);
                        double dg = 0.0;
                        double db = 0.0;
                        for (std::size_t i = 0; i < in.plane(); i++)
                        {
                            gi[i] = g * go[i];
                            dg += static_cast<double>(go[i]) * x[i];
                            db += go[i];
                        }
                        if (options.param_grads)
                        {
                            result.params.weight[c] += static_cast<float>(dg);
                            if (layer.bias)
                                result.params.bias[c] += static_cast<float>(db);
                        }
                    }
                return result;
            }
            case LayerKind::Dropout:
            {
                result.input = grad_out;
                if (!ctx.training || layer.drop_rate <= 0.0f)
                    return result;
                const std::vector<float> mask = dropout_mask(grad_out.size(), layer.drop_rate, ctx.dropout_seed);
                for (std::size_t i = 0; i < grad_out.size(); i++)
                    result.input[i] *= mask[i];
                return result;
            }
        }
        fail(ErrorCode::Shape, "unknown layer kind");
    }

    Tensor he_init(Shape shape, std::uint64_t seed)
    {
        const long fan_in = static_cast<long>(shape.c) * shape.h * shape.w;
        if (fan_in <= 0)
            fail(ErrorCode::Config, "he_init: fan_in must be positive, got shape " + shape.str());
        Tensor t(shape);
        Rng rng(seed);
        const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (auto &v : t.values())
            v = static_cast<float>(rng.normal() * stddev);
        return t;
    }
}

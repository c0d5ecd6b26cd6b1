#pragma once

#include "rfsv/error.hpp"
#include "rfsv/network.hpp"
#include "rfsv/rng.hpp"
#include "rfsv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace rfsv::testing
{
    /// Error code thrown by f, or nullopt when it returns normally.
    template<typename F>
    std::optional<ErrorCode> code_of(F &&f)
    {
        try
        {
            f();
        }
        catch (const Error &e)
        {
            return e.code();
        }
        return std::nullopt;
    }

    inline Tensor random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0)
    {
        Rng rng(seed);
        Tensor t(s);
        for (float &v : t.values())
            v = static_cast<float>(rng.uniform(lo, hi));
        return t;
    }

    inline double max_abs_diff(const Tensor &a, const Tensor &b)
    {
        double m = 0.0;
        for (std::size_t i = 0; i < a.size(); i++)
            m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
        return m;
    }

    /// Direct-summation convolution in double.
    inline Tensor reference_conv(const Tensor &x, const Tensor &w, const Tensor *b, int stride, int pad)
    {
        const Shape s = x.shape(), ws = w.shape();
        const int k = ws.h;
        const int oh = (s.h + 2 * pad - k) / stride + 1, ow = (s.w + 2 * pad - k) / stride + 1;
        Tensor out(Shape { s.n, ws.n, oh, ow });
        for (int n = 0; n < s.n; n++)
            for (int o = 0; o < ws.n; o++)
                for (int y = 0; y < oh; y++)
                    for (int xo = 0; xo < ow; xo++)
                    {
                        double acc = b ? (*b)[static_cast<std::size_t>(o)] : 0.0;
                        for (int c = 0; c < s.c; c++)
                            for (int ky = 0; ky < k; ky++)
                                for (int kx = 0; kx < k; kx++)
                                {
                                    const int iy = y * stride - pad + ky, ix = xo * stride - pad + kx;
                                    if (iy >= 0 && iy < s.h && ix >= 0 && ix < s.w)
                                        acc += static_cast<double>(w.at(o, c, ky, kx)) * x.at(n, c, iy, ix);
                                }
                        out.at(n, o, y, xo) = static_cast<float>(acc);
                    }
        return out;
    }

    /// Isotropic Gaussian bump with peak 1 at (cy, cx), as [1,1,size,size].
    inline Tensor gaussian_bump(int size, double cy, double cx, double sigma)
    {
        Tensor t(Shape { 1, 1, size, size });
        for (int y = 0; y < size; y++)
            for (int x = 0; x < size; x++)
            {
                const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                t.at(0, 0, y, x) = static_cast<float>(std::exp(-d2 / (2.0 * sigma * sigma)));
            }
        return t;
    }

    /**
     * Random graph of 1-4 body layers of mixed kinds (conv of several sizes,
     * strides and paddings, ReLU, max/avg pool, channel scale, dropout, residual
     * add, fully connected) closed by GAP + FC so it is a valid classifier. The
     * body's last node is returned through `body_out`.
     */
    inline NetworkSpec random_small_network(Rng &rng, int &body_out)
    {
        NetworkSpec net;
        net.arch = "random";
        net.input_channels = 1 + static_cast<int>(rng.below(3));
        net.input_h = 6 + static_cast<int>(rng.below(5));
        net.input_w = 6 + static_cast<int>(rng.below(5));
        net.num_classes = 3;
        const int body = 1 + static_cast<int>(rng.below(4));
        int ch = net.input_channels, h = net.input_h, w = net.input_w;
        int ordinal = 0;
        bool flat = false;
        auto add = [&](LayerSpec l) {
            l.input = static_cast<int>(net.layers.size()) - 1;
            net.layers.push_back(l);
        };
        for (int i = 0; i < body; i++)
        {
            int pick = i == 0 ? 0 : static_cast<int>(rng.below(8));
            if (flat && pick != 2)
                pick = 2;
            if (pick == 3 && (h < 2 || w < 2))
                pick = 2;
            if (pick == 7 && (h < 3 || w < 3))
                pick = 2;
            LayerSpec l;
            switch (pick)
            {
                case 0:
                {
                    const int ks[] = { 1, 3, 5 };
                    l.kind = LayerKind::Conv;
                    l.kernel = ks[rng.below(3)];
                    while (l.kernel > std::min(h, w) + 2 * (l.kernel - 1))
                        l.kernel -= 2;
                    l.padding = static_cast<int>(rng.below(static_cast<std::uint64_t>(l.kernel)));
                    l.stride = (h + 2 * l.padding >= l.kernel + 2 && w + 2 * l.padding >= l.kernel + 2 && rng.bernoulli(0.3)) ? 2 : 1;
                    if (h + 2 * l.padding < l.kernel || w + 2 * l.padding < l.kernel)
                        l.padding = l.kernel - 1;
                    l.in_channels = ch;
                    l.out_channels = 1 + static_cast<int>(rng.below(4));
                    l.ordinal = ++ordinal;
                    add(l);
                    h = (h + 2 * l.padding - l.kernel) / l.stride + 1;
                    w = (w + 2 * l.padding - l.kernel) / l.stride + 1;
                    ch = l.out_channels;
                    break;
                }
                case 1:
                    l.kind = LayerKind::Relu;
                    add(l);
                    break;
                case 2:
                    l.kind = LayerKind::ChannelScale;
                    l.in_channels = l.out_channels = ch;
                    add(l);
                    break;
                case 3:
                    l.kind = rng.bernoulli(0.5) ? LayerKind::MaxPool : LayerKind::AvgPool;
                    l.kernel = 2;
                    l.stride = 2;
                    add(l);
                    h /= 2;
                    w /= 2;
                    break;
                case 4:
                    l.kind = LayerKind::Dropout;
                    l.drop_rate = 0.25f;
                    add(l);
                    break;
                case 5:
                {
                    const int from = static_cast<int>(net.layers.size()) - 1;
                    LayerSpec c;
                    c.kind = LayerKind::Conv;
                    c.kernel = 3;
                    c.padding = 1;
                    c.in_channels = c.out_channels = ch;
                    c.ordinal = ++ordinal;
                    add(c);
                    LayerSpec a;
                    a.kind = LayerKind::AddSkip;
                    a.skip = from;
                    add(a);
                    break;
                }
                case 6:
                {
                    l.kind = LayerKind::FullyConnected;
                    l.in_channels = ch * h * w;
                    l.out_channels = 2 + static_cast<int>(rng.below(4));
                    add(l);
                    ch = l.out_channels;
                    h = w = 1;
                    flat = true;
                    break;
                }
                default:
                    l.kind = LayerKind::AvgPool;
                    l.kernel = 3;
                    l.stride = 1;
                    add(l);
                    h -= 2;
                    w -= 2;
                    break;
            }
        }
        body_out = static_cast<int>(net.layers.size()) - 1;
        LayerSpec gap;
        gap.kind = LayerKind::GlobalAvgPool;
        add(gap);
        LayerSpec fc;
        fc.kind = LayerKind::FullyConnected;
        fc.in_channels = ch;
        fc.out_channels = net.num_classes;
        add(fc);
        net.features = body_out;
        net.head_start = body_out + 1;
        net.main_output = static_cast<int>(net.layers.size()) - 1;
        validate(net);
        return net;
    }

    /// Randomises biases and channel scales so every parameter carries signal.
    inline void perturb_params(Model &model, std::uint64_t seed)
    {
        Rng rng(seed);
        for (std::size_t i = 0; i < model.params.size(); i++)
        {
            const LayerSpec &l = model.spec.layers[i];
            auto &p = model.params[i];
            if (!p.bias.empty())
                for (float &v : p.bias.values())
                    v = static_cast<float>(rng.uniform(-0.5, 0.5));
            if (l.kind == LayerKind::ChannelScale)
                for (float &v : p.weight.values())
                    v = static_cast<float>(rng.uniform(0.5, 1.5));
        }
    }

    struct GradCheck
    {
        double worst = 0.0;   ///< largest relative error over all checked tensors
        int checked = 0;      ///< tensors compared
        double min_span = 0.0;  ///< narrowest secant used, a measure of distance to a kink
    };

    /// ReLU sign bits and max-pool winners of a forward pass.
    inline std::vector<int> activation_pattern(const Model &model, const ForwardCache &cache)
    {
        std::vector<int> pattern;
        for (std::size_t i = 0; i < model.spec.layers.size(); i++)
        {
            const LayerSpec &l = model.spec.layers[i];
            const Tensor &in = l.input < 0 ? cache.input : cache.outputs[static_cast<std::size_t>(l.input)];
            if (l.kind == LayerKind::Relu)
                for (float v : in.values())
                    pattern.push_back(v > 0.0f);
            else if (l.kind == LayerKind::MaxPool)
            {
                const Shape s = in.shape();
                for (int n = 0; n < s.n; n++)
                    for (int c = 0; c < s.c; c++)
                        for (int y = 0; y + l.kernel <= s.h; y += l.stride)
                            for (int x = 0; x + l.kernel <= s.w; x += l.stride)
                            {
                                int best = 0;
                                for (int k = 1; k < l.kernel * l.kernel; k++)
                                    if (in.at(n, c, y + k / l.kernel, x + k % l.kernel) > in.at(n, c, y + best / l.kernel, x + best % l.kernel))
                                        best = k;
                                pattern.push_back(best);
                            }
            }
        }
        return pattern;
    }

    /**
     * Compares analytic gradients with central differences of
     * L = sum(r_body * body) + sum(r_logit * logits) along one direction per
     * tensor (every weight, bias and the input). Direction entries have random
     * magnitude in [0.5, 1] and the sign of the analytic gradient (random where
     * it is zero), so the projection cannot cancel. On each side the step starts at
     * `eps` and is halved until no ReLU sign or max-pool winner differs from the
     * base point, so the two-sided secant never straddles a kink.
     * Relative error is |a - n| / max(|a|, |n|, floor).
     */
    inline GradCheck finite_difference_check(const Model &model, const Tensor &input, std::uint64_t seed, int body_out, double eps = 0.5,
            double floor = 1e-3)
    {
        RunContext ctx;
        ctx.training = true;
        ctx.dropout_seed = derive_seed(seed, 77);
        const ForwardCache cache = forward(model, input, ctx);
        const std::vector<int> base_pattern = activation_pattern(model, cache);
        const Tensor r_body = random_tensor(cache.outputs[static_cast<std::size_t>(body_out)].shape(), derive_seed(seed, 1));
        const Tensor r_logit = random_tensor(cache.outputs[static_cast<std::size_t>(model.spec.main_output)].shape(), derive_seed(seed, 2));
        struct Probe
        {
            double loss;
            bool same;
        };
        auto probe = [&](const Model &m, const Tensor &x) {
            const ForwardCache c = forward(m, x, ctx);
            double s = 0.0;
            for (std::size_t i = 0; i < r_body.size(); i++)
                s += static_cast<double>(r_body[i]) * c.outputs[static_cast<std::size_t>(body_out)][i];
            for (std::size_t i = 0; i < r_logit.size(); i++)
                s += static_cast<double>(r_logit[i]) * c.outputs[static_cast<std::size_t>(m.spec.main_output)][i];
            return Probe { s, activation_pattern(m, c) == base_pattern };
        };
        const Gradients g = backward(model, cache, { { body_out, r_body }, { model.spec.main_output, r_logit } });

        GradCheck result;
        auto compare = [&](const Tensor &analytic, auto &&perturbed, std::uint64_t dir_seed) {
            Tensor d = random_tensor(analytic.shape(), dir_seed, 0.5, 1.0);
            Rng signs(derive_seed(dir_seed, 3));
            for (std::size_t i = 0; i < d.size(); i++)
                if (analytic[i] < 0.0f || (analytic[i] == 0.0f && signs.bernoulli(0.5)))
                    d[i] = -d[i];
            double a = 0.0;
            for (std::size_t i = 0; i < d.size(); i++)
                a += static_cast<double>(analytic[i]) * d[i];
            auto widest = [&](double sign) {
                double step = eps;
                Probe p = perturbed(d, sign * step);
                while (!p.same && step > 1e-7)
                {
                    step *= 0.5;
                    p = perturbed(d, sign * step);
                }
                return std::pair { step, p.loss };
            };
            const auto [up, loss_up] = widest(1.0);
            const auto [down, loss_down] = widest(-1.0);
            const double n = (loss_up - loss_down) / (up + down);
            result.min_span = result.checked == 0 ? up + down : std::min(result.min_span, up + down);
            const double rel = std::abs(a - n) / std::max({ std::abs(a), std::abs(n), floor });
            result.worst = std::max(result.worst, rel);
            result.checked++;
        };
        for (std::size_t i = 0; i < model.params.size(); i++)
            for (int which = 0; which < 2; which++)
            {
                const Tensor &base = which == 0 ? model.params[i].weight : model.params[i].bias;
                if (base.empty())
                    continue;
                const Tensor &analytic = which == 0 ? g.params[i].weight : g.params[i].bias;
                compare(analytic, [&](const Tensor &d, double step) {
                    Model m = model;
                    Tensor &t = which == 0 ? m.params[i].weight : m.params[i].bias;
                    for (std::size_t k = 0; k < t.size(); k++)
                        t[k] = static_cast<float>(t[k] + step * d[k]);
                    return probe(m, input);
                }, derive_seed(seed, 100 + i * 2 + static_cast<std::size_t>(which)));
            }
        compare(g.input, [&](const Tensor &d, double step) {
            Tensor x = input;
            for (std::size_t k = 0; k < x.size(); k++)
                x[k] = static_cast<float>(x[k] + step * d[k]);
            return probe(model, x);
        }, derive_seed(seed, 99));
        return result;
    }

    /**
     * Draws parameters and an input for `net` and gradient-checks them. Sample
     * points closer than `min_span` to a kink along any probe direction are
     * re-drawn, up to `attempts` times; the last draw is reported regardless.
     */
    inline GradCheck check_random_point(const NetworkSpec &net, int body_out, std::uint64_t seed, double min_span = 1e-2, int attempts = 20)
    {
        GradCheck g;
        for (int a = 0; a < attempts; a++)
        {
            const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(a));
            Model model = init_model(net, derive_seed(s, 1));
            perturb_params(model, derive_seed(s, 2));
            const Tensor x = random_tensor(net.input_shape(2), derive_seed(s, 3));
            g = finite_difference_check(model, x, derive_seed(s, 4), body_out);
            if (g.min_span >= min_span)
                break;
        }
        return g;
    }
}

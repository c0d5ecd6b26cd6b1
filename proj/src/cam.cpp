#include "rfsv/cam.hpp"
#include "rfsv/error.hpp"
#include "rfsv/optim.hpp"
#include "rfsv/resize.hpp"

#include <algorithm>
#include <cmath>

namespace rfsv
{
    namespace
    {
        struct CamHead
        {
            int features = -1;
            int fc = -1;
        };

        CamHead locate_head(const NetworkSpec &net, HeadSelector head)
        {
            int output = net.main_output;
            if (head.aux_index >= 0)
            {
                if (head.aux_index >= static_cast<int>(net.aux.size()))
                    fail(ErrorCode::Config, "network has no aux branch " + std::to_string(head.aux_index));
                output = net.aux[head.aux_index].output_node;
            }
            const LayerSpec &fc = net.layers[output];
            const bool gap_fc = fc.kind == LayerKind::FullyConnected && fc.input >= 0 && net.layers[fc.input].kind == LayerKind::GlobalAvgPool;
            if (!gap_fc)
                fail(ErrorCode::Config, "class activation maps need a global-average-pool + single FC head; this " + head_name(net.head)
                        + "-type head is not compatible, use an aux branch with a resnet-type (GAP) head instead");
            return { net.layers[fc.input].input, output };
        }
    }

    ActivationMap activation_map(const Model &model, const Tensor &image, int class_id, HeadSelector head)
    {
        const NetworkSpec &net = model.spec;
        const CamHead h = locate_head(net, head);
        if (class_id < 0 || class_id >= net.num_classes)
            fail(ErrorCode::Config, "class id " + std::to_string(class_id) + " outside [0, " + std::to_string(net.num_classes) + ")");
        if (image.shape().n != 1)
            fail(ErrorCode::Shape, "activation_map expects a single image, got " + image.shape().str());
        const ForwardCache cache = forward(model, image, {}, h.fc, head.aux_index >= 0);
        const Tensor &f = cache.outputs[h.features];
        const Shape fs = f.shape();
        const Tensor &w = model.params[h.fc].weight;
        ActivationMap result;
        result.class_id = class_id;
        result.logit = cache.outputs[h.fc][class_id];
        result.raw = Tensor(Shape { 1, 1, fs.h, fs.w });
        for (int k = 0; k < fs.c; k++)
        {
            const float wk = w[static_cast<std::size_t>(class_id) * fs.c + k];
            const float *src = f.plane(0, k);
            for (std::size_t i = 0; i < fs.plane(); i++)
                result.raw[i] += wk * src[i];
        }
        result.raw_min = result.raw.min();
        result.raw_max = result.raw.max();
        if (fs.h >= 2 && fs.w >= 2)
            result.upsampled = bicubic_resize(result.raw, net.input_h, net.input_w);
        else
            result.upsampled = Tensor(Shape { 1, 1, net.input_h, net.input_w }, result.raw[0]);
        const float lo = result.upsampled.min();
        const float hi = result.upsampled.max();
        if (hi > lo)
            for (auto &v : result.upsampled.values())
                v = (v - lo) / (hi - lo);
        else
            result.upsampled.fill(1.0f);
        return result;
    }

    ActivationMap predicted_activation_map(const Model &model, const Tensor &image, HeadSelector head)
    {
        const NetworkSpec &net = model.spec;
        const int output = head.aux_index >= 0 ? net.aux.at(head.aux_index).output_node : net.main_output;
        const ForwardCache cache = forward(model, image, {}, output, head.aux_index >= 0);
        const Tensor &logits = cache.outputs[output];
        const auto best = std::max_element(logits.values().begin(), logits.values().end());
        return activation_map(model, image, static_cast<int>(best - logits.values().begin()), head);
    }

    MaskRegions summary_and_central(const Tensor &map, double delta, double delta_central)
    {
        const Shape s = map.shape();
        const int h = s.h;
        const int w = s.w;
        MaskRegions result;
        result.summary.resize(static_cast<std::size_t>(h) * w);
        std::vector<int> label(static_cast<std::size_t>(h) * w, -1);
        for (int i = 0; i < h * w; i++)
            result.summary[i] = map[i] >= delta ? 1 : 0;
        const auto peak_it = std::max_element(map.values().begin(), map.values().end());
        const int peak = static_cast<int>(peak_it - map.values().begin());

        struct Component
        {
            long pixels = 0;
            int top, left, bottom, right;
            bool has_peak = false;
        };
        std::vector<Component> components;
        std::vector<int> stack;
        for (int start = 0; start < h * w; start++)
        {
            if (label[start] >= 0 || !(map[start] >= delta_central))
                continue;
            const int id = static_cast<int>(components.size());
            Component comp { 0, h, w, -1, -1, false };
            stack.assign(1, start);
            label[start] = id;
            while (!stack.empty())
            {
                const int p = stack.back();
                stack.pop_back();
                const int y = p / w;
                const int x = p % w;
                comp.pixels++;
                comp.top = std::min(comp.top, y);
                comp.bottom = std::max(comp.bottom, y);
                comp.left = std::min(comp.left, x);
                comp.right = std::max(comp.right, x);
                comp.has_peak = comp.has_peak || p == peak;
                for (int dy = -1; dy <= 1; dy++)
                    for (int dx = -1; dx <= 1; dx++)
                    {
                        const int ny = y + dy;
                        const int nx = x + dx;
                        if (ny < 0 || ny >= h || nx < 0 || nx >= w)
                            continue;
                        const int q = ny * w + nx;
                        if (label[q] < 0 && map[q] >= delta_central)
                        {
                            label[q] = id;
                            stack.push_back(q);
                        }
                    }
            }
            components.push_back(comp);
        }
        if (components.empty())
            fail(ErrorCode::EmptyMask, "activation map has no pixel at or above " + std::to_string(delta_central));
        std::size_t best = 0;
        for (std::size_t i = 1; i < components.size(); i++)
        {
            const Component &c = components[i];
            const Component &b = components[best];
            if (c.pixels > b.pixels || (c.pixels == b.pixels && c.has_peak && !b.has_peak))
                best = i;
        }
        const Component &c = components[best];
        result.central = { c.top, c.left, c.bottom - c.top + 1, c.right - c.left + 1 };
        result.central_pixels = c.pixels;
        return result;
    }

    ObjectMask grow_box(const Tensor &map, const BBox &central, double delta)
    {
        const Shape s = map.shape();
        const int h = s.h;
        const int w = s.w;
        if (central.height < 1 || central.width < 1 || central.top < 0 || central.left < 0 || central.bottom() > h || central.right() > w)
            fail(ErrorCode::Shape, "grow_box: central box outside the map");
        // center lines of the central box; even spans have two middle pixels
        const int col_a = central.left + (central.width - 1) / 2;
        const int col_b = central.left + central.width / 2;
        const int row_a = central.top + (central.height - 1) / 2;
        const int row_b = central.top + central.height / 2;
        auto at = [&](int y, int x) { return static_cast<double>(map[static_cast<std::size_t>(y) * w + x]); };

        int top = central.top;
        int bottom = central.bottom() - 1;
        int left = central.left;
        int right = central.right() - 1;
        bool grow_top = true, grow_bottom = true, grow_left = true, grow_right = true;
        while (grow_top || grow_bottom || grow_left || grow_right)
        {
            if (grow_top)
            {
                grow_top = top > 0 && at(top - 1, col_a) >= delta && at(top - 1, col_b) >= delta;
                top -= grow_top ? 1 : 0;
            }
            if (grow_bottom)
            {
                grow_bottom = bottom < h - 1 && at(bottom + 1, col_a) >= delta && at(bottom + 1, col_b) >= delta;
                bottom += grow_bottom ? 1 : 0;
            }
            if (grow_left)
            {
                grow_left = left > 0 && at(row_a, left - 1) >= delta && at(row_b, left - 1) >= delta;
                left -= grow_left ? 1 : 0;
            }
            if (grow_right)
            {
                grow_right = right < w - 1 && at(row_a, right + 1) >= delta && at(row_b, right + 1) >= delta;
                right += grow_right ? 1 : 0;
            }
        }
        ObjectMask mask;
        mask.central_bbox = central;
        mask.bbox = { top, left, bottom - top + 1, right - left + 1 };
        mask.size = std::sqrt(static_cast<double>(mask.bbox.area()));
        return mask;
    }

    ObjectMask object_mask(const Tensor &map, double delta, double delta_central)
    {
        const MaskRegions regions = summary_and_central(map, delta, delta_central);
        return grow_box(map, regions.central, delta);
    }

    ObjEstimate summarize_sizes(const std::vector<double> &sizes)
    {
        ObjEstimate est;
        double sum = 0.0;
        for (double s : sizes)
        {
            if (s < 0.0)
            {
                est.skipped++;
                continue;
            }
            est.per_image_sizes.push_back(s);
            sum += s;
        }
        est.n_images = static_cast<int>(est.per_image_sizes.size());
        if (est.n_images == 0)
            fail(ErrorCode::EmptyMask, "every image produced a degenerate activation map");
        est.obj = sum / est.n_images;
        return est;
    }

    ObjEstimate estimate_obj(const Model &model, const std::vector<Tensor> &images, HeadSelector head)
    {
        if (images.empty())
            fail(ErrorCode::Data, "estimate_obj needs at least one image");
        std::vector<double> sizes;
        std::vector<ObjectMask> masks;
        for (const Tensor &image : images)
        {
            try
            {
                const ActivationMap a = predicted_activation_map(model, image, head);
                const ObjectMask m = object_mask(a.upsampled);
                sizes.push_back(m.size);
                masks.push_back(m);
            }
            catch (const Error &e)
            {
                if (e.code() != ErrorCode::EmptyMask)
                    throw;
                sizes.push_back(-1.0);
                masks.push_back({});
            }
        }
        ObjEstimate est = summarize_sizes(sizes);
        est.masks = std::move(masks);
        return est;
    }
}

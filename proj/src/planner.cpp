#include "rfsv/planner.hpp"
#include "rfsv/error.hpp"
#include "rfsv/netzoo.hpp"
#include "rfsv/optim.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace rfsv
{
    std::size_t select_entry(const LerfProfile &profile, double obj)
    {
        if (profile.entries.empty())
            fail(ErrorCode::Config, "cannot select a target layer from an empty LERF profile");
        if (!(obj > 0.0))
            fail(ErrorCode::Config, "object size must be positive");
        std::size_t best = 0;
        double best_gap = std::abs(obj - profile.entries[0].lerf_size);
        // entries are ordered shallow to deep, so <= hands ties to the deeper layer
        for (std::size_t i = 1; i < profile.entries.size(); i++)
        {
            const double gap = std::abs(obj - profile.entries[i].lerf_size);
            if (gap <= best_gap)
            {
                best = i;
                best_gap = gap;
            }
        }
        return best;
    }

    int select_target_layer(const LerfProfile &profile, double obj)
    {
        return profile.entries[select_entry(profile, obj)].ordinal;
    }

    SupervisionPlan make_plan(const NetworkSpec &net, const LerfProfile &profile, double obj, HeadType aux)
    {
        const LerfEntry &e = profile.entries[select_entry(profile, obj)];
        SupervisionPlan plan;
        plan.arch = net.arch;
        plan.target_layer = e.ordinal > 0 ? e.ordinal : net.resolve(e.label);
        plan.target_label = net.label(plan.target_layer);
        plan.obj = obj;
        plan.lerf_at_target = e.lerf_size;
        plan.aux_classifier = aux;
        return plan;
    }

    std::string plan_to_text(const SupervisionPlan &plan)
    {
        char buf[64];
        std::ostringstream out;
        out << "arch=" << plan.arch << "\n";
        out << "target_layer=" << plan.target_label << "\n";
        out << "target_ordinal=" << plan.target_layer << "\n";
        std::snprintf(buf, sizeof(buf), "%.6f", plan.obj);
        out << "obj=" << buf << "\n";
        std::snprintf(buf, sizeof(buf), "%.6f", plan.lerf_at_target);
        out << "lerf_at_target=" << buf << "\n";
        out << "aux_classifier=" << head_name(plan.aux_classifier) << "\n";
        std::snprintf(buf, sizeof(buf), "%g", plan.weight_main);
        out << "weight_main=" << buf << "\n";
        std::snprintf(buf, sizeof(buf), "%g", plan.weight_aux);
        out << "weight_aux=" << buf << "\n";
        return out.str();
    }

    SupervisionPlan parse_plan(const std::string &text)
    {
        std::map<std::string, std::string> kv;
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line))
        {
            if (line.empty() || line[0] == '#')
                continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                fail(ErrorCode::Config, "plan line without '=': " + line);
            kv[line.substr(0, eq)] = line.substr(eq + 1);
        }
        auto take = [&](const std::string &key) {
            const auto it = kv.find(key);
            if (it == kv.end())
                fail(ErrorCode::Config, "plan is missing key '" + key + "'");
            std::string v = it->second;
            kv.erase(it);
            return v;
        };
        SupervisionPlan plan;
        try
        {
            plan.arch = take("arch");
            plan.target_label = take("target_layer");
            plan.target_layer = std::stoi(take("target_ordinal"));
            plan.obj = std::stod(take("obj"));
            plan.lerf_at_target = std::stod(take("lerf_at_target"));
            plan.aux_classifier = parse_head(take("aux_classifier"));
            plan.weight_main = std::stod(take("weight_main"));
            plan.weight_aux = std::stod(take("weight_aux"));
        }
        catch (const std::invalid_argument&)
        {
            fail(ErrorCode::Config, "plan holds a non-numeric value");
        }
        if (!kv.empty())
            fail(ErrorCode::Config, "plan has unknown key '" + kv.begin()->first + "'");
        if (!(plan.weight_main > 0.0) || !(plan.weight_aux > 0.0))
            fail(ErrorCode::Config, "plan loss weights must be positive");
        return plan;
    }

    NetworkSpec attach_aux(const NetworkSpec &net, int ordinal, HeadType type)
    {
        NetworkSpec result = net;
        const int conv = result.conv_node(ordinal);
        const int tap = result.activation_node(ordinal);
        AuxBranch branch;
        branch.target_ordinal = ordinal;
        branch.tap_node = tap;
        branch.type = type;
        branch.first_node = static_cast<int>(result.layers.size());
        branch.output_node = append_head(result, tap, result.layers[conv].out_channels, type);
        result.aux.push_back(branch);
        validate(result);
        return result;
    }

    NetworkSpec attach_aux(const NetworkSpec &net, const SupervisionPlan &plan)
    {
        if (!plan.arch.empty() && plan.arch != net.arch)
            fail(ErrorCode::Config, "plan targets " + plan.arch + " but the backbone is " + net.arch);
        int ordinal = plan.target_layer;
        if (ordinal <= 0)
            ordinal = net.resolve(plan.target_label);
        return attach_aux(net, ordinal, plan.aux_classifier);
    }

    TotalLoss total_loss(const NetworkSpec &net, const ForwardCache &cache, std::span<const int> labels, double weight_main, double weight_aux)
    {
        TotalLoss result;
        auto add_head = [&](int node, double weight) {
            if (node >= cache.computed || cache.outputs[node].empty())
                fail(ErrorCode::State, "total_loss: head node " + std::to_string(node) + " was not evaluated");
            LossResult ce = softmax_cross_entropy(cache.outputs[node], labels);
            if (weight != 1.0)
                for (auto &g : ce.grad.values())
                    g = static_cast<float>(g * weight);
            result.heads.push_back({ node, ce.loss, weight, std::move(ce.grad) });
            return ce.loss * weight;
        };
        result.main = add_head(net.main_output, weight_main);
        for (const auto &a : net.aux)
            result.aux += add_head(a.output_node, weight_aux);
        result.total = result.main + result.aux;
        return result;
    }
}

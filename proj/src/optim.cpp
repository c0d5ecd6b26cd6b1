#include "rfsv/optim.hpp"
#include "rfsv/error.hpp"

#include <cmath>
#include <string>

namespace rfsv
{
    namespace
    {
        void check_logits(const Tensor &logits)
        {
            const Shape s = logits.shape();
            if (s.n < 1 || s.c < 2 || s.h != 1 || s.w != 1)
                fail(ErrorCode::Shape, "logits must be [N, K>=2, 1, 1], got " + s.str());
        }
    }

    Tensor softmax(const Tensor &logits)
    {
        check_logits(logits);
        const Shape s = logits.shape();
        Tensor probs(s);
        for (int n = 0; n < s.n; n++)
        {
            const float *row = logits.data() + n * s.c;
            double peak = row[0];
            for (int k = 1; k < s.c; k++)
                peak = std::max(peak, static_cast<double>(row[k]));
            double total = 0.0;
            for (int k = 0; k < s.c; k++)
                total += std::exp(row[k] - peak);
            for (int k = 0; k < s.c; k++)
                probs[n * s.c + k] = static_cast<float>(std::exp(row[k] - peak) / total);
        }
        return probs;
    }

    LossResult softmax_cross_entropy(const Tensor &logits, std::span<const int> labels)
    {
        check_logits(logits);
        const Shape s = logits.shape();
        if (static_cast<int>(labels.size()) != s.n)
            fail(ErrorCode::Shape, "got " + std::to_string(labels.size()) + " labels for a batch of " + std::to_string(s.n));
        LossResult result;
        result.grad = Tensor(s);
        const double inv_batch = 1.0 / s.n;
        for (int n = 0; n < s.n; n++)
        {
            const int label = labels[n];
            if (label < 0 || label >= s.c)
                fail(ErrorCode::Data, "label " + std::to_string(label) + " outside [0, " + std::to_string(s.c) + ")");
            const float *row = logits.data() + n * s.c;
            double peak = row[0];
            for (int k = 1; k < s.c; k++)
                peak = std::max(peak, static_cast<double>(row[k]));
            double total = 0.0;
            for (int k = 0; k < s.c; k++)
                total += std::exp(row[k] - peak);
            const double log_total = std::log(total);
            result.loss += (log_total - (row[label] - peak)) * inv_batch;
            // subtracting the one-hot term last keeps the row sum at zero
            double row_sum = 0.0;
            for (int k = 0; k < s.c; k++)
            {
                const double p = std::exp(row[k] - peak - log_total);
                result.grad[n * s.c + k] = static_cast<float>(p * inv_batch);
                if (k != label)
                    row_sum += result.grad[n * s.c + k];
            }
            result.grad[n * s.c + label] = static_cast<float>(-row_sum);
        }
        return result;
    }

    AdamState adam_init(const Model &model)
    {
        AdamState state;
        state.m.resize(model.params.size());
        state.v.resize(model.params.size());
        for (std::size_t i = 0; i < model.params.size(); i++)
        {
            const LayerParams &p = model.params[i];
            if (!p.weight.empty())
            {
                state.m[i].weight = Tensor(p.weight.shape());
                state.v[i].weight = Tensor(p.weight.shape());
            }
            if (!p.bias.empty())
            {
                state.m[i].bias = Tensor(p.bias.shape());
                state.v[i].bias = Tensor(p.bias.shape());
            }
        }
        return state;
    }

    namespace
    {
        void update(Tensor &param, const Tensor &grad, Tensor &m, Tensor &v, const AdamConfig &c, double correction1, double correction2)
        {
            if (grad.empty() || param.empty())
                return;
            if (grad.shape() != param.shape() || m.shape() != param.shape() || v.shape() != param.shape())
                fail(ErrorCode::Shape, "adam: gradient/state shape " + grad.shape().str() + " does not match parameter " + param.shape().str());
            const float b1 = static_cast<float>(c.beta1);
            const float b2 = static_cast<float>(c.beta2);
            for (std::size_t i = 0; i < param.size(); i++)
            {
                const float g = grad[i];
                m[i] = b1 * m[i] + (1.0f - b1) * g;
                v[i] = b2 * v[i] + (1.0f - b2) * g * g;
                const double m_hat = m[i] / correction1;
                const double v_hat = v[i] / correction2;
                param[i] = static_cast<float>(param[i] - c.lr * m_hat / (std::sqrt(v_hat) + c.eps));
            }
        }
    }

    void adam_step(std::vector<LayerParams> &params, const std::vector<LayerParams> &grads, AdamState &state, const AdamConfig &config)
    {
        if (grads.size() != params.size() || state.m.size() != params.size())
            fail(ErrorCode::Shape, "adam: parameter, gradient and state node counts differ");
        state.step++;
        const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
        const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
        for (std::size_t i = 0; i < params.size(); i++)
        {
            update(params[i].weight, grads[i].weight, state.m[i].weight, state.v[i].weight, config, correction1, correction2);
            update(params[i].bias, grads[i].bias, state.m[i].bias, state.v[i].bias, config, correction1, correction2);
        }
    }
}

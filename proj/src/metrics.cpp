#include "rfsv/metrics.hpp"
#include "rfsv/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace rfsv
{
    double roc_auc(std::span<const double> scores, std::span<const int> labels)
    {
        if (scores.size() != labels.size())
            fail(ErrorCode::Shape, "roc_auc: " + std::to_string(scores.size()) + " scores vs " + std::to_string(labels.size()) + " labels");
        long pos = 0, neg = 0;
        for (std::size_t i = 0; i < scores.size(); i++)
        {
            if (!std::isfinite(scores[i]))
                fail(ErrorCode::Numeric, "roc_auc: non-finite score");
            if (labels[i] == 1)
                pos++;
            else if (labels[i] == 0)
                neg++;
            else
                fail(ErrorCode::Data, "roc_auc: labels must be 0 or 1");
        }
        if (pos == 0 || neg == 0)
            fail(ErrorCode::Data, "AUC undefined: split holds a single class");

        std::vector<std::size_t> order(scores.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return scores[a] > scores[b];
        });
        double area = 0.0;
        long tp = 0, fp = 0;
        std::size_t i = 0;
        while (i < order.size())
        {
            const long tp0 = tp, fp0 = fp;
            const double s = scores[order[i]];
            while (i < order.size() && scores[order[i]] == s)
            {
                if (labels[order[i]] == 1)
                    tp++;
                else
                    fp++;
                i++;
            }
            area += static_cast<double>(fp - fp0) * static_cast<double>(tp + tp0) * 0.5;
        }
        return area / (static_cast<double>(pos) * static_cast<double>(neg));
    }

    void fill_rates(Metrics &m)
    {
        const auto &c = m.confusion;
        auto ratio = [](long a, long b) {
            return b > 0 ? static_cast<double>(a) / static_cast<double>(b) : 0.0;
        };
        m.accuracy = ratio(c.tp + c.tn, c.total());
        m.sensitivity = ratio(c.tp, c.tp + c.fn);
        m.specificity = ratio(c.tn, c.tn + c.fp);
    }

    Metrics binary_metrics(std::span<const double> positive_scores, std::span<const int> predictions, std::span<const int> labels)
    {
        if (labels.empty())
            fail(ErrorCode::Data, "cannot evaluate an empty split");
        if (predictions.size() != labels.size())
            fail(ErrorCode::Shape, "predictions and labels differ in length");
        Metrics m;
        m.n = static_cast<long>(labels.size());
        m.auc = roc_auc(positive_scores, labels);
        for (std::size_t i = 0; i < labels.size(); i++)
        {
            const bool truth = labels[i] == 1, said = predictions[i] == 1;
            if (truth && said)
                m.confusion.tp++;
            else if (truth)
                m.confusion.fn++;
            else if (said)
                m.confusion.fp++;
            else
                m.confusion.tn++;
        }
        fill_rates(m);
        return m;
    }

    Metrics metrics_from_probabilities(std::span<const double> probs, int k, std::span<const int> labels)
    {
        if (k < 2)
            fail(ErrorCode::Config, "need at least two classes");
        if (probs.size() != labels.size() * static_cast<std::size_t>(k))
            fail(ErrorCode::Shape, "probability table does not match label count");
        if (labels.empty())
            fail(ErrorCode::Data, "cannot evaluate an empty split");
        const std::size_t n = labels.size();
        std::vector<int> pred(n);
        for (std::size_t i = 0; i < n; i++)
        {
            const auto row = probs.subspan(i * k, k);
            pred[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
            if (labels[i] < 0 || labels[i] >= k)
                fail(ErrorCode::Data, "label " + std::to_string(labels[i]) + " out of range");
        }
        if (k == 2)
        {
            std::vector<double> pos(n);
            for (std::size_t i = 0; i < n; i++)
                pos[i] = probs[i * 2 + 1];
            return binary_metrics(pos, pred, labels);
        }

        Metrics m;
        m.num_classes = k;
        m.n = static_cast<long>(n);
        long correct = 0;
        for (std::size_t i = 0; i < n; i++)
            correct += pred[i] == labels[i];
        m.accuracy = static_cast<double>(correct) / static_cast<double>(n);
        double auc_sum = 0.0, sen_sum = 0.0, spe_sum = 0.0;
        int auc_classes = 0;
        for (int c = 0; c < k; c++)
        {
            std::vector<double> score(n);
            std::vector<int> is_c(n), said_c(n);
            for (std::size_t i = 0; i < n; i++)
            {
                score[i] = probs[i * k + c];
                is_c[i] = labels[i] == c;
                said_c[i] = pred[i] == c;
            }
            Metrics one;
            for (std::size_t i = 0; i < n; i++)
            {
                auto &cf = one.confusion;
                (is_c[i] ? (said_c[i] ? cf.tp : cf.fn) : (said_c[i] ? cf.fp : cf.tn))++;
            }
            fill_rates(one);
            sen_sum += one.sensitivity;
            spe_sum += one.specificity;
            const long present = std::count(is_c.begin(), is_c.end(), 1);
            if (present > 0 && present < static_cast<long>(n))
            {
                auc_sum += roc_auc(score, is_c);
                auc_classes++;
            }
        }
        if (auc_classes == 0)
            fail(ErrorCode::Data, "AUC undefined: split holds a single class");
        m.auc = auc_sum / auc_classes;
        m.sensitivity = sen_sum / k;
        m.specificity = spe_sum / k;
        return m;
    }

    std::string metrics_to_text(const Metrics &m)
    {
        char buf[256];
        std::snprintf(buf, sizeof buf, "auc=%.6f acc=%.6f sen=%.6f spe=%.6f tp=%ld fp=%ld tn=%ld fn=%ld n=%ld", m.auc, m.accuracy, m.sensitivity,
                m.specificity, m.confusion.tp, m.confusion.fp, m.confusion.tn, m.confusion.fn, m.n);
        return buf;
    }
}

#pragma once

#include <span>
#include <string>
#include <vector>

namespace rfsv
{
    struct Confusion
    {
        long tp = 0;
        long fp = 0;
        long tn = 0;
        long fn = 0;

        long total() const noexcept
        {
            return tp + fp + tn + fn;
        }
        friend bool operator==(const Confusion&, const Confusion&) = default;
    };

    struct Metrics
    {
        double auc = 0.0;
        double accuracy = 0.0;
        double sensitivity = 0.0;
        double specificity = 0.0;
        Confusion confusion;
        int num_classes = 2;
        long n = 0;
    };

    /**
     * Area under the ROC curve of class-1 scores. The curve is swept over every
     * distinct score (descending) and integrated with the trapezoid rule, which
     * counts tied positive/negative pairs as one half. Throws E_DATA unless both
     * classes are present, E_NUMERIC on non-finite scores.
     */
    double roc_auc(std::span<const double> scores, std::span<const int> labels);

    /// acc = (TP+TN)/total, sen = TP/(TP+FN), spe = TN/(TN+FP); undefined ratios are 0.
    void fill_rates(Metrics &m);

    /// Binary metrics; the operating point is the argmax decision (score > 0.5 for
    /// two-class softmax, ties predicted negative).
    Metrics binary_metrics(std::span<const double> positive_scores, std::span<const int> predictions, std::span<const int> labels);

    /**
     * Metrics from row-major class probabilities [n x k]. With k = 2 this is
     * binary_metrics; with k > 2 accuracy is exact, auc is the macro mean of
     * one-vs-rest AUCs, and sensitivity / specificity are macro means of the
     * per-class one-vs-rest rates.
     */
    Metrics metrics_from_probabilities(std::span<const double> probs, int k, std::span<const int> labels);

    std::string metrics_to_text(const Metrics &m);
}

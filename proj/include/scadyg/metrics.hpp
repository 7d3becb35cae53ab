#pragma once

#include <numeric>

#include "scadyg/common.hpp"

namespace scadyg::train {

/// Mean reciprocal rank of each positive among its row of negatives. Rank is
/// 1 + #(negatives scoring higher) + #(ties) / 2.
inline double mrr(std::span<const double> scores_pos, const Matrix& scores_neg) {
    if (scores_neg.rows() != scores_pos.size()) throw std::invalid_argument("mrr: row count mismatch");
    if (scores_pos.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t r = 0; r < scores_pos.size(); ++r) {
        const double p = scores_pos[r];
        if (std::isnan(p)) throw NumericError("mrr: NaN positive score");
        double rank = 1.0;
        for (double s : scores_neg.row(r)) {
            if (std::isnan(s)) throw NumericError("mrr: NaN negative score");
            if (s > p) rank += 1.0;
            else if (s == p) rank += 0.5;
        }
        total += 1.0 / rank;
    }
    return total / static_cast<double>(scores_pos.size());
}

/// NDCG@k with linear gains and log2 discounts. Ties in `pred` are broken by
/// index. Returns 0 when the ideal DCG is 0.
inline double ndcg_at_k(std::span<const double> pred, std::span<const double> truth, std::size_t k) {
    if (k < 1) throw std::invalid_argument("ndcg_at_k: k must be >= 1");
    if (pred.size() != truth.size()) throw std::invalid_argument("ndcg_at_k: size mismatch");
    for (double t : truth)
        if (t < 0) throw std::invalid_argument("ndcg_at_k: negative relevance");
    const auto c = pred.size();
    const auto top = std::min(k, c);
    std::vector<std::size_t> order(c);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return pred[a] > pred[b]; });
    std::vector<double> ideal(truth.begin(), truth.end());
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    double dcg = 0.0, idcg = 0.0;
    for (std::size_t r = 0; r < top; ++r) {
        const double disc = 1.0 / std::log2(static_cast<double>(r) + 2.0);
        dcg += truth[order[r]] * disc;
        idcg += ideal[r] * disc;
    }
    return idcg > 0 ? dcg / idcg : 0.0;
}

struct ApAuc {
    double ap = 0.0;
    double auc = 0.0;
};

/// AUC as the rank statistic (ties count half) and AP as the step-wise area
/// under the precision-recall curve over distinct score thresholds.
inline ApAuc ap_auc(std::span<const double> scores_pos, std::span<const double> scores_neg) {
    if (scores_pos.empty() || scores_neg.empty()) throw std::invalid_argument("ap_auc: each class needs a sample");
    struct Item {
        double score;
        bool positive;
    };
    std::vector<Item> items;
    items.reserve(scores_pos.size() + scores_neg.size());
    for (double s : scores_pos) items.push_back({s, true});
    for (double s : scores_neg) items.push_back({s, false});
    for (const auto& it : items)
        if (std::isnan(it.score)) throw NumericError("ap_auc: NaN score");
    std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score > b.score; });

    const double P = static_cast<double>(scores_pos.size());
    const double N = static_cast<double>(scores_neg.size());
    double tp = 0, fp = 0, ap = 0, auc = 0, prev_recall = 0;
    for (std::size_t i = 0; i < items.size();) {
        std::size_t j = i;
        double gp = 0, gn = 0;
        while (j < items.size() && items[j].score == items[i].score) {
            (items[j].positive ? gp : gn) += 1;
            ++j;
        }
        // Each negative in this group is outranked by every positive seen so
        // far and ties with the group's own positives.
        auc += gn * (tp + 0.5 * gp);
        tp += gp;
        fp += gn;
        const double recall = tp / P;
        ap += (recall - prev_recall) * (tp / (tp + fp));
        prev_recall = recall;
        i = j;
    }
    return {ap, auc / (P * N)};
}

}  // namespace scadyg::train

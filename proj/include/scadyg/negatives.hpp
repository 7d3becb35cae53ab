#pragma once

#include <random>
#include <unordered_map>
#include <unordered_set>

#include "scadyg/partition.hpp"

namespace scadyg::train {

struct NegativeSet {
    std::vector<std::vector<NodeId>> dst;  // one list per positive
    std::size_t fallbacks = 0;             // positives that exhausted the rejection budget
};

/// Uniform negative destinations for positive interactions.
///
/// Candidates exclude the source itself. With collision checking, a
/// candidate w is rejected when (src, w) occurs in the positive's step. After
/// 100 * n_per_pos rejected draws the remaining draws only exclude the
/// positive's own destination. Each positive's stream is seeded from (seed,
/// interaction index), so results do not depend on batching.
class NegativeSampler {
public:
    NegativeSampler(const tgraph::TemporalGraph& g, const ttr::StepPartition& part)
        : g_(g), part_(part), offsets_(ttr::step_offsets(g, part)) {}

    NegativeSet sample(std::span<const std::size_t> positives, std::size_t n_per_pos, std::uint64_t seed,
                       bool collision_check) {
        if (n_per_pos < 1) throw UsageError("sample_negatives: n_per_pos must be >= 1");
        if (g_.n_nodes < 2) throw DataError("sample_negatives: node set too small for negatives");
        NegativeSet out;
        out.dst.resize(positives.size());
        for (std::size_t r = 0; r < positives.size(); ++r) {
            const auto j = positives[r];
            const auto u = g_.src[j];
            const auto v = g_.dst[j];
            const auto* seen = collision_check ? &step_pairs(part_.step_of(g_.time[j])) : nullptr;
            std::mt19937_64 rng(mix_seed(seed, j));
            std::uniform_int_distribution<NodeId> other(0, g_.n_nodes - 2);
            auto draw = [&] {
                const auto o = other(rng);
                return o >= u ? o + 1 : o;
            };
            auto& list = out.dst[r];
            list.reserve(n_per_pos);
            std::size_t budget = 100 * n_per_pos;
            bool fell_back = false;
            while (list.size() < n_per_pos) {
                if (!fell_back && budget == 0) {
                    fell_back = true;
                    ++out.fallbacks;
                    if (u != v && g_.n_nodes < 3) {
                        throw DataError("sample_negatives: node set too small to draw a negative for interaction " +
                                        std::to_string(j));
                    }
                }
                const auto w = draw();
                if (fell_back) {
                    if (w != v) list.push_back(w);
                    continue;
                }
                --budget;
                if (seen && seen->count(key(u, w))) continue;
                list.push_back(w);
            }
        }
        return out;
    }

private:
    std::uint64_t key(NodeId a, NodeId b) const { return a * g_.n_nodes + b; }

    const std::unordered_set<std::uint64_t>& step_pairs(std::size_t step) {
        auto it = pairs_.find(step);
        if (it != pairs_.end()) return it->second;
        auto& set = pairs_[step];
        for (auto j = offsets_[step - 1]; j < offsets_[step]; ++j) set.insert(key(g_.src[j], g_.dst[j]));
        return set;
    }

    const tgraph::TemporalGraph& g_;
    const ttr::StepPartition& part_;
    std::vector<std::size_t> offsets_;
    std::unordered_map<std::size_t, std::unordered_set<std::uint64_t>> pairs_;
};

inline NegativeSet sample_negatives(const tgraph::TemporalGraph& g, const ttr::StepPartition& part,
                                    std::span<const std::size_t> positives, std::size_t n_per_pos, std::uint64_t seed,
                                    bool collision_check = true) {
    NegativeSampler s(g, part);
    return s.sample(positives, n_per_pos, seed, collision_check);
}

}  // namespace scadyg::train

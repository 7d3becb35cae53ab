#pragma once

#include "scadyg/ttr.hpp"

namespace scadyg::ttr {

/// Reference temporal message of node `u` at time t, computed straight from
/// the interaction history without any step decomposition of time: every
/// interaction at or before t contributes its features scaled by
/// encode(t - t_e) directly.
///
/// Hop l > 1 enumerates walks of l interactions that share a step (multi-hop
/// propagation never crosses steps); interactions after the last closed
/// boundary form their own group. O(k) setup per call; test use only.
inline std::vector<double> oracle_direct_message(const tgraph::TemporalGraph& g, const StepPartition& part,
                                                 const timecode::TimeEncoder& enc, NodeId u, double t,
                                                 std::size_t hops) {
    const auto d = g.d_e();
    std::vector<double> out(message_dim(d, hops), 0.0);

    const auto last_closed = part.last_closed_step(t);
    std::vector<std::vector<std::size_t>> incident(g.n_nodes);
    std::vector<std::size_t> group;
    std::vector<std::vector<double>> decay;
    std::vector<std::size_t> history;
    for (std::size_t j = 0; j < g.n_interactions() && g.time[j] <= t; ++j) {
        history.push_back(j);
        incident[g.src[j]].push_back(history.size() - 1);
        if (g.dst[j] != g.src[j]) incident[g.dst[j]].push_back(history.size() - 1);
        group.push_back(std::min(part.step_of(g.time[j]), last_closed + 1));
        decay.push_back(enc.encode(t - g.time[j]));
    }

    auto ends = [&](std::size_t h) {
        const auto j = history[h];
        std::vector<NodeId> e{g.src[j]};
        if (g.dst[j] != g.src[j]) e.push_back(g.dst[j]);
        return e;
    };

    // One-hop term of interaction h: [f * T || (sum of endpoint features) * T].
    auto add_base = [&](std::size_t h, std::span<double> acc) {
        const auto j = history[h];
        for (std::size_t c = 0; c < d; ++c) {
            double node_sum = 0.0;
            for (auto w : ends(h)) node_sum += g.node_feats(w, c);
            acc[c] += g.edge_feats(j, c) * decay[h][c];
            acc[d + c] += node_sum * decay[h][c];
        }
    };

    // Walks starting at v of `remaining` interactions inside group `grp`.
    auto walk = [&](auto&& self, NodeId v, std::size_t remaining, std::size_t grp, std::span<double> acc) -> void {
        for (auto h : incident[v]) {
            if (group[h] != grp) continue;
            if (remaining == 1) {
                add_base(h, acc);
            } else {
                for (auto w : ends(h)) self(self, w, remaining - 1, grp, acc);
            }
        }
    };

    for (std::size_t l = 1; l <= hops; ++l) {
        std::span<double> block(out.data() + (l - 1) * 2 * d, 2 * d);
        if (l == 1) {
            for (auto h : incident[u]) add_base(h, block);
            continue;
        }
        std::vector<std::size_t> groups;
        for (auto h : incident[u]) groups.push_back(group[h]);
        std::sort(groups.begin(), groups.end());
        groups.erase(std::unique(groups.begin(), groups.end()), groups.end());
        for (auto grp : groups) walk(walk, u, l, grp, block);
    }
    return out;
}

}  // namespace scadyg::ttr

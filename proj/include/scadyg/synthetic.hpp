#pragma once

#include <numbers>
#include <random>
#include <unordered_map>

#include "scadyg/tgraph.hpp"

namespace scadyg::tgraph {

enum class SynthPattern { uniform, decay_planted, periodic_planted };

inline std::string to_string(SynthPattern p) {
    switch (p) {
        case SynthPattern::uniform: return "uniform";
        case SynthPattern::decay_planted: return "decay-planted";
        case SynthPattern::periodic_planted: return "periodic-planted";
    }
    return "?";
}

inline SynthPattern parse_pattern(std::string_view s) {
    if (s == "uniform") return SynthPattern::uniform;
    if (s == "decay-planted" || s == "decay") return SynthPattern::decay_planted;
    if (s == "periodic-planted" || s == "periodic") return SynthPattern::periodic_planted;
    throw UsageError("unknown synthetic pattern '" + std::string(s) + "'");
}

/// Generator knobs; also returned as the ground truth of a generated graph.
///
/// For the planted patterns, an endpoint v of a new interaction at time t is
/// drawn with weight
///   base_weight + node_excitation * K_v(t) + pair_excitation * K_uv(t)
/// where K sums exp(-decay_rate * age) over past events of v (or of the pair)
/// for the decay pattern, and is (1 + cos(2 pi age / period)) / 2 of the most
/// recent such event for the periodic pattern. Sources use the node term only.
struct SynthParams {
    SynthPattern pattern = SynthPattern::uniform;
    std::size_t n = 0;
    std::size_t k = 0;
    std::uint64_t seed = 0;
    double time_span = 1000.0;
    double decay_rate = 0.02;
    double base_weight = 0.2;
    double node_excitation = 1.0;
    double pair_excitation = 0.0;
    double period = 100.0;
};

struct SyntheticGraph {
    TemporalGraph graph;
    SynthParams params;
};

namespace detail {

struct Excitation {
    double value = 0.0;
    double at = 0.0;

    double periodic(double t, double period) const {
        return value > 0 ? 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * (t - at) / period)) : 0.0;
    }

    double current(double t, double rate) const { return value * std::exp(-rate * (t - at)); }
    void bump(double t, double rate) {
        value = current(t, rate) + 1.0;
        at = t;
    }
};

}  // namespace detail

/// Deterministic synthetic interaction stream (no features; normalize later).
inline SyntheticGraph generate_synthetic(SynthParams p) {
    if (p.n < 2) throw UsageError("generate_synthetic: n must be >= 2");
    if (p.k < 1) throw UsageError("generate_synthetic: k must be >= 1");
    if (p.pattern != SynthPattern::uniform && !(p.base_weight > 0)) {
        throw UsageError("generate_synthetic: base_weight must be positive");
    }
    std::mt19937_64 rng(p.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<double> times(p.k);
    for (auto& t : times) t = unit(rng) * p.time_span;
    std::sort(times.begin(), times.end());

    std::vector<NodeId> src(p.k), dst(p.k);
    if (p.pattern == SynthPattern::uniform) {
        std::uniform_int_distribution<NodeId> pick(0, p.n - 1);
        std::uniform_int_distribution<NodeId> other(0, p.n - 2);
        for (std::size_t j = 0; j < p.k; ++j) {
            src[j] = pick(rng);
            const auto o = other(rng);
            dst[j] = o >= src[j] ? o + 1 : o;
        }
    } else {
        std::vector<detail::Excitation> node(p.n);
        std::vector<std::unordered_map<NodeId, detail::Excitation>> pairs(p.n);
        std::vector<double> w(p.n);
        auto draw = [&](std::span<const double> weights) {
            double total = 0.0;
            for (double x : weights) total += x;
            double r = unit(rng) * total;
            for (std::size_t v = 0; v < weights.size(); ++v) {
                r -= weights[v];
                if (r < 0) return static_cast<NodeId>(v);
            }
            for (std::size_t v = weights.size(); v-- > 0;)
                if (weights[v] > 0) return static_cast<NodeId>(v);
            return NodeId{0};
        };
        const bool periodic = p.pattern == SynthPattern::periodic_planted;
        auto kernel = [&](const detail::Excitation& ex, double t) {
            return periodic ? ex.periodic(t, p.period) : ex.current(t, p.decay_rate);
        };
        for (std::size_t j = 0; j < p.k; ++j) {
            const double t = times[j];
            for (std::size_t v = 0; v < p.n; ++v) w[v] = p.base_weight + p.node_excitation * kernel(node[v], t);
            const auto u = draw(w);
            w[u] = 0.0;
            if (p.pair_excitation != 0.0) {
                for (const auto& [v, ex] : pairs[u])
                    if (v != u) w[v] += p.pair_excitation * kernel(ex, t);
            }
            const auto v = draw(w);
            src[j] = u;
            dst[j] = v;
            node[u].bump(t, p.decay_rate);
            node[v].bump(t, p.decay_rate);
            if (p.pair_excitation != 0.0) {
                pairs[u][v].bump(t, p.decay_rate);
                pairs[v][u].bump(t, p.decay_rate);
            }
        }
    }
    SyntheticGraph out;
    out.graph = make_graph(p.n, std::move(src), std::move(dst), std::move(times));
    out.params = p;
    return out;
}

inline SyntheticGraph generate_synthetic(std::size_t n, std::size_t k, SynthPattern pattern, std::uint64_t seed) {
    SynthParams p;
    p.n = n;
    p.k = k;
    p.pattern = pattern;
    p.seed = seed;
    return generate_synthetic(p);
}

}  // namespace scadyg::tgraph

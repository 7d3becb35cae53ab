#pragma once

#include <sys/resource.h>

#include "scadyg/synthetic.hpp"
#include "scadyg/trainer.hpp"

namespace scadyg::bench {

struct BenchPoint {
    std::size_t edges = 0;
    std::size_t nodes = 0;
    std::size_t steps = 0;
    std::size_t hops = 0;
    double preprocess_ms = 0.0;            // best of the repeats
    std::optional<double> epoch_ms;        // one link-prediction training epoch
    std::size_t active_rows = 0;
    std::size_t peak_rss_bytes = 0;
};

struct BenchSpec {
    std::size_t steps = 50;
    std::size_t hops = 1;
    std::size_t d_e = 8;
    std::size_t repeats = 3;
    std::size_t threads = 1;
    bool time_epoch = true;
    std::uint64_t seed = 0;
};

inline std::size_t peak_rss_bytes() {
    rusage ru{};
    if (getrusage(RUSAGE_SELF, &ru) != 0) return 0;
    return static_cast<std::size_t>(ru.ru_maxrss) * 1024;  // kilobytes on Linux
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope: need >= 2 paired points");
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0) || !(y[i] > 0)) throw std::invalid_argument("loglog_slope: values must be positive");
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    if (sxx == 0) throw std::invalid_argument("loglog_slope: x values are all equal");
    return sxy / sxx;
}

/// Geometric sweep from `lo` to `hi` (inclusive) with `per_decade` points per
/// factor of ten.
inline std::vector<std::size_t> geometric_sizes(std::size_t lo, std::size_t hi, std::size_t per_decade = 2) {
    if (lo < 1 || hi < lo || per_decade < 1) throw UsageError("geometric_sizes: need 1 <= lo <= hi");
    std::vector<std::size_t> out;
    const double ratio = std::pow(10.0, 1.0 / static_cast<double>(per_decade));
    for (double v = static_cast<double>(lo); v <= static_cast<double>(hi) * (1 + 1e-9); v *= ratio) {
        out.push_back(static_cast<std::size_t>(std::llround(v)));
    }
    return out;
}

/// Times preprocessing (and optionally one training epoch) on a uniform
/// synthetic graph with `k` interactions over k/10 nodes (at least 100).
inline BenchPoint bench_point(std::size_t k, const BenchSpec& spec) {
    const auto n = std::max<std::size_t>(100, k / 10);
    auto syn = tgraph::generate_synthetic(n, k, tgraph::SynthPattern::uniform, spec.seed);
    const auto g = tgraph::normalize_features(syn.graph, spec.d_e);
    const auto part = ttr::partition_by_count(g, spec.steps);
    const double span = g.t_max() > g.t_min() ? g.t_max() - g.t_min() : 1.0;
    const auto enc = timecode::default_schedule(spec.d_e, 1.0 / span);

    BenchPoint pt;
    pt.edges = k;
    pt.nodes = n;
    pt.steps = spec.steps;
    pt.hops = spec.hops;
    pt.preprocess_ms = std::numeric_limits<double>::infinity();
    ttr::MessageCache cache;
    for (std::size_t r = 0; r < std::max<std::size_t>(1, spec.repeats); ++r) {
        ttr::PrecomputeStats stats;
        cache = ttr::precompute_all(g, part, enc, spec.hops, spec.threads, &stats);
        pt.preprocess_ms = std::min(pt.preprocess_ms, stats.wall_ms);
        pt.active_rows = stats.active_rows;
    }
    if (spec.time_epoch && spec.steps >= 3) {
        const auto split = tgraph::chronological_split(g, part);
        hyper::ModelShape shape;
        shape.d_m = cache.d_m();
        auto params = hyper::init_params(shape, spec.seed);
        train::TrainConfig cfg;
        cfg.seed = spec.seed;
        train::TrainInputs in{g, cache, split};
        train::NegativeSampler sampler(g, part);
        const auto t0 = std::chrono::steady_clock::now();
        (void)train::train_epoch(in, params, cfg, 1, sampler);
        pt.epoch_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
    pt.peak_rss_bytes = peak_rss_bytes();
    return pt;
}

inline std::string to_json_line(const BenchPoint& p) {
    nlohmann::ordered_json j;
    j["edges"] = p.edges;
    j["nodes"] = p.nodes;
    j["steps"] = p.steps;
    j["hops"] = p.hops;
    j["active_rows"] = p.active_rows;
    j["wall_ms"] = p.preprocess_ms;
    if (p.epoch_ms) j["epoch_ms"] = *p.epoch_ms;
    j["peak_rss_bytes"] = p.peak_rss_bytes;
    return j.dump();
}

}  // namespace scadyg::bench

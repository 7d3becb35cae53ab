#pragma once

#include "scadyg/tgraph.hpp"

namespace scadyg::ttr {

/// Equal-interval step boundaries covering a graph's time span.
///
/// Step i (1-based) is the half-open interval (b[i-2], b[i-1]]; the first step
/// also owns interactions exactly at `origin`.
struct StepPartition {
    double origin = 0.0;
    double interval = 1.0;
    std::vector<double> boundaries;

    std::size_t steps() const noexcept { return boundaries.size(); }

    /// Closing boundary of step i.
    double boundary(std::size_t step) const { return boundaries.at(step - 1); }

    /// Opening boundary of step i (the origin for step 1).
    double opening(std::size_t step) const { return step <= 1 ? origin : boundaries.at(step - 2); }

    /// 1-based step containing time t.
    std::size_t step_of(double t) const {
        if (t < origin) throw std::out_of_range("StepPartition: time " + format_double(t) + " before origin");
        const auto it = std::lower_bound(boundaries.begin(), boundaries.end(), t);
        if (it == boundaries.end()) {
            throw std::out_of_range("StepPartition: time " + format_double(t) + " after last boundary");
        }
        return static_cast<std::size_t>(it - boundaries.begin()) + 1;
    }

    /// Largest step index whose closing boundary is <= t (0 when none).
    std::size_t last_closed_step(double t) const {
        return static_cast<std::size_t>(std::upper_bound(boundaries.begin(), boundaries.end(), t) -
                                        boundaries.begin());
    }

    friend bool operator==(const StepPartition&, const StepPartition&) = default;
};

/// Partitions the span into ceil((t_max - t_min) / interval) steps.
inline StepPartition partition(const tgraph::TemporalGraph& g, double interval) {
    if (!(interval > 0) || !std::isfinite(interval)) throw UsageError("partition: interval must be positive");
    if (g.n_interactions() == 0) throw DataError("partition: graph has no interactions");
    StepPartition p;
    p.origin = g.t_min();
    p.interval = interval;
    const double span = g.t_max() - g.t_min();
    if (span == 0.0) {
        p.boundaries = {g.t_max()};
        return p;
    }
    auto L = static_cast<std::size_t>(std::ceil(span / interval));
    L = std::max<std::size_t>(L, 1);
    while (p.origin + static_cast<double>(L) * interval < g.t_max()) ++L;
    p.boundaries.resize(L);
    for (std::size_t i = 0; i < L; ++i) p.boundaries[i] = p.origin + static_cast<double>(i + 1) * interval;
    return p;
}

/// Partitions the span into exactly `steps` equal intervals; the last boundary is t_max.
inline StepPartition partition_by_count(const tgraph::TemporalGraph& g, std::size_t steps) {
    if (steps == 0) throw UsageError("partition_by_count: step count must be >= 1");
    if (g.n_interactions() == 0) throw DataError("partition_by_count: graph has no interactions");
    StepPartition p;
    p.origin = g.t_min();
    const double span = g.t_max() - g.t_min();
    if (span == 0.0) {
        p.interval = 1.0;
        p.boundaries = {g.t_max()};
        return p;
    }
    p.interval = span / static_cast<double>(steps);
    p.boundaries.resize(steps);
    for (std::size_t i = 0; i < steps; ++i) p.boundaries[i] = p.origin + static_cast<double>(i + 1) * p.interval;
    p.boundaries.back() = g.t_max();
    return p;
}

/// Offsets into the time-sorted interaction arrays: step i owns
/// [offsets[i-1], offsets[i]). Size is steps() + 1.
inline std::vector<std::size_t> step_offsets(const tgraph::TemporalGraph& g, const StepPartition& p) {
    std::vector<std::size_t> off(p.steps() + 1, 0);
    if (g.n_interactions() && (g.t_min() < p.origin || g.t_max() > p.boundaries.back())) {
        throw DataError("step_offsets: partition does not cover the graph's time span");
    }
    for (std::size_t i = 0; i < p.steps(); ++i) {
        off[i + 1] = static_cast<std::size_t>(std::upper_bound(g.time.begin(), g.time.end(), p.boundaries[i]) -
                                              g.time.begin());
    }
    return off;
}

}  // namespace scadyg::ttr

namespace scadyg::tgraph {

struct SplitSpec {
    double train_frac = 0.70;
    double val_frac = 0.15;
    double test_frac = 0.15;

    void validate() const {
        for (double f : {train_frac, val_frac, test_frac})
            if (!(f > 0 && f < 1)) throw UsageError("SplitSpec: fractions must lie in (0, 1)");
        if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
            throw UsageError("SplitSpec: fractions must sum to 1");
        }
    }
};

/// Inclusive 1-based step range plus the interaction index range it owns.
struct SplitRange {
    std::size_t first_step = 0;
    std::size_t last_step = 0;
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t steps() const noexcept { return last_step + 1 - first_step; }
    bool contains_step(std::size_t s) const noexcept { return s >= first_step && s <= last_step; }
};

struct ChronoSplit {
    SplitRange train, val, test;
};

/// Step-aligned chronological split. Train takes ceil(train_frac * L) steps,
/// validation floor(val_frac * L), test the rest; each keeps at least one step.
inline ChronoSplit chronological_split(const TemporalGraph& g, const ttr::StepPartition& part,
                                       const SplitSpec& spec = {}) {
    spec.validate();
    const auto L = part.steps();
    if (L < 3) throw UsageError("chronological_split: need at least 3 steps, got " + std::to_string(L));
    const double Ld = static_cast<double>(L);
    auto n_train = static_cast<std::size_t>(std::ceil(spec.train_frac * Ld - 1e-9));
    n_train = std::clamp<std::size_t>(n_train, 1, L - 2);
    auto n_val = static_cast<std::size_t>(std::floor(spec.val_frac * Ld + 1e-9));
    n_val = std::clamp<std::size_t>(n_val, 1, L - n_train - 1);

    const auto off = ttr::step_offsets(g, part);
    auto range = [&](std::size_t first, std::size_t last) {
        return SplitRange{first, last, off[first - 1], off[last]};
    };
    ChronoSplit s;
    s.train = range(1, n_train);
    s.val = range(n_train + 1, n_train + n_val);
    s.test = range(n_train + n_val + 1, L);
    return s;
}

}  // namespace scadyg::tgraph

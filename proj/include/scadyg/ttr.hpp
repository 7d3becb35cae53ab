#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <thread>
#include <utility>

#include "scadyg/partition.hpp"
#include "scadyg/timecode.hpp"

namespace scadyg::ttr {

/// Edge/node incidence of one step, over the nodes active in that step.
///
/// A_ev (active x k) is stored row-compressed: node r touches local edges
/// node_edges[node_ptr[r] .. node_ptr[r+1]). A_ve (k x active) is its
/// transpose: edge e touches local nodes edge_nodes[edge_ptr[e] .. edge_ptr[e+1]),
/// one entry for a self-loop and two otherwise. All nonzeros are 1.
struct IncidenceStep {
    std::size_t step_index = 0;
    double boundary = 0.0;
    std::size_t edge_begin = 0;  // first interaction index of the step in the graph
    std::vector<NodeId> active;  // sorted global ids
    std::vector<std::size_t> node_ptr{0};
    std::vector<std::size_t> node_edges;
    std::vector<std::size_t> edge_ptr{0};
    std::vector<std::size_t> edge_nodes;
    std::vector<double> dt_intra;

    std::size_t k() const noexcept { return dt_intra.size(); }
    std::size_t n_active() const noexcept { return active.size(); }

    /// A_ev * X for X with one row per local edge.
    Matrix edge_to_node(const Matrix& x) const {
        Matrix out(n_active(), x.cols());
        for (std::size_t r = 0; r < n_active(); ++r) {
            auto o = out.row(r);
            for (auto p = node_ptr[r]; p < node_ptr[r + 1]; ++p) {
                const auto xr = x.row(node_edges[p]);
                for (std::size_t c = 0; c < o.size(); ++c) o[c] += xr[c];
            }
        }
        return out;
    }

    /// A_ve * X for X with one row per active node.
    Matrix node_to_edge(const Matrix& x) const {
        Matrix out(k(), x.cols());
        for (std::size_t e = 0; e < k(); ++e) {
            auto o = out.row(e);
            for (auto p = edge_ptr[e]; p < edge_ptr[e + 1]; ++p) {
                const auto xr = x.row(edge_nodes[p]);
                for (std::size_t c = 0; c < o.size(); ++c) o[c] += xr[c];
            }
        }
        return out;
    }

    /// Dense A_ev, for small-step checks.
    Matrix dense_edge_to_node() const {
        Matrix a(n_active(), k());
        for (std::size_t r = 0; r < n_active(); ++r)
            for (auto p = node_ptr[r]; p < node_ptr[r + 1]; ++p) a(r, node_edges[p]) = 1.0;
        return a;
    }
};

/// Reusable scratch for building incidences; holds an n-sized lookup table.
class IncidenceBuilder {
public:
    explicit IncidenceBuilder(std::size_t n_nodes) : local_of_(n_nodes, kUnset) {}

    /// Incidence over interactions [begin, end) closing at `boundary`.
    IncidenceStep build(const tgraph::TemporalGraph& g, std::size_t step_index, double boundary,
                        std::size_t begin, std::size_t end) {
        IncidenceStep inc;
        inc.step_index = step_index;
        inc.boundary = boundary;
        inc.edge_begin = begin;
        const auto k = end - begin;
        for (auto j = begin; j < end; ++j) {
            if (j + kAhead < end) {
                __builtin_prefetch(&local_of_[g.src[j + kAhead]], 1);
                __builtin_prefetch(&local_of_[g.dst[j + kAhead]], 1);
            }
            touch(g.src[j], inc.active);
            touch(g.dst[j], inc.active);
        }
        sort_ids(inc.active);
        for (std::size_t r = 0; r < inc.active.size(); ++r) local_of_[inc.active[r]] = r;

        inc.dt_intra.resize(k);
        inc.edge_ptr.assign(k + 1, 0);
        inc.edge_nodes.reserve(2 * k);
        std::vector<std::size_t> degree(inc.active.size(), 0);
        for (std::size_t e = 0; e < k; ++e) {
            const auto j = begin + e;
            if (j + kAhead < end) {
                __builtin_prefetch(&local_of_[g.src[j + kAhead]]);
                __builtin_prefetch(&local_of_[g.dst[j + kAhead]]);
            }
            inc.dt_intra[e] = boundary - g.time[j];
            const auto a = local_of_[g.src[j]];
            const auto b = local_of_[g.dst[j]];
            inc.edge_nodes.push_back(a);
            ++degree[a];
            if (b != a) {
                inc.edge_nodes.push_back(b);
                ++degree[b];
            }
            inc.edge_ptr[e + 1] = inc.edge_nodes.size();
        }
        inc.node_ptr.assign(inc.active.size() + 1, 0);
        for (std::size_t r = 0; r < degree.size(); ++r) inc.node_ptr[r + 1] = inc.node_ptr[r] + degree[r];
        inc.node_edges.resize(inc.node_ptr.back());
        std::vector<std::size_t> fill(inc.node_ptr.begin(), inc.node_ptr.end() - 1);
        for (std::size_t e = 0; e < k; ++e)
            for (auto p = inc.edge_ptr[e]; p < inc.edge_ptr[e + 1]; ++p) inc.node_edges[fill[inc.edge_nodes[p]]++] = e;

        for (auto v : inc.active) local_of_[v] = kUnset;
        return inc;
    }

private:
    static constexpr std::size_t kUnset = static_cast<std::size_t>(-1);
    static constexpr std::size_t kAhead = 16;  // prefetch distance for local_of_ lookups

    /// LSD radix sort on 11-bit digits; ids are below n_nodes, so the pass
    /// count is fixed by the graph and the sort stays linear in ids.size().
    void sort_ids(std::vector<NodeId>& ids) {
        if (ids.size() < 256) {
            std::sort(ids.begin(), ids.end());
            return;
        }
        constexpr unsigned kBits = 11;
        constexpr std::size_t kBuckets = std::size_t{1} << kBits;
        scratch_.resize(ids.size());
        std::array<std::size_t, kBuckets> count{};
        const auto top = local_of_.size();
        for (unsigned shift = 0; shift < 64 && (top >> shift) > 0; shift += kBits) {
            count.fill(0);
            for (auto v : ids) ++count[(v >> shift) & (kBuckets - 1)];
            std::size_t sum = 0;
            for (auto& c : count) sum += std::exchange(c, sum);
            for (auto v : ids) scratch_[count[(v >> shift) & (kBuckets - 1)]++] = v;
            ids.swap(scratch_);
        }
    }

    void touch(NodeId v, std::vector<NodeId>& active) {
        if (local_of_[v] == kUnset) {
            local_of_[v] = 0;
            active.push_back(v);
        }
    }

    std::vector<std::size_t> local_of_;
    std::vector<NodeId> scratch_;
};

inline IncidenceStep build_incidence(const tgraph::TemporalGraph& g, const StepPartition& part,
                                     std::size_t step_index) {
    if (step_index < 1 || step_index > part.steps()) {
        throw std::out_of_range("build_incidence: step " + std::to_string(step_index) + " outside 1.." +
                                std::to_string(part.steps()));
    }
    const double lo = part.opening(step_index);
    const double hi = part.boundary(step_index);
    auto first = step_index == 1 ? std::lower_bound(g.time.begin(), g.time.end(), lo)
                                 : std::upper_bound(g.time.begin(), g.time.end(), lo);
    auto last = std::upper_bound(g.time.begin(), g.time.end(), hi);
    IncidenceBuilder b(g.n_nodes);
    return b.build(g, step_index, hi, static_cast<std::size_t>(first - g.time.begin()),
                   static_cast<std::size_t>(last - g.time.begin()));
}

/// Per-step intermediate messages for the step's active nodes.
struct StepMessages {
    std::size_t step_index = 0;
    std::vector<NodeId> nodes;  // sorted
    Matrix rows;                // nodes.size() x d_m

    std::size_t d_m() const noexcept { return rows.cols(); }
    friend bool operator==(const StepMessages&, const StepMessages&) = default;
};

inline std::size_t message_dim(std::size_t d_e, std::size_t hops) { return 2 * d_e * hops; }

/// Weight-free propagation inside one step.
///
/// Hop 1 is [A_ev (F * T) || A_ev ((A_ve X) * T)] with F the step's edge
/// features, X the node features and T the per-edge encoding of the time to
/// the step's closing boundary. Hop l > 1 applies A_ev A_ve to both halves of
/// hop l-1; blocks are concatenated. Aggregation is a plain sum.
inline StepMessages intra_step(const tgraph::TemporalGraph& g, const IncidenceStep& inc,
                               const timecode::TimeEncoder& enc, std::size_t hops,
                               std::size_t* clamp_events = nullptr) {
    const auto d = g.d_e();
    if (hops < 1) throw UsageError("intra_step: hops must be >= 1");
    if (d == 0 || g.d_v() != d) {
        throw UsageError("intra_step: node/edge feature dims must match and be non-zero (d_v=" +
                         std::to_string(g.d_v()) + ", d_e=" + std::to_string(d) + ")");
    }
    if (enc.dim() != d) {
        throw UsageError("intra_step: encoder dim " + std::to_string(enc.dim()) + " != d_e " + std::to_string(d));
    }
    const auto k = inc.k();
    const auto dm = message_dim(d, hops);
    StepMessages out;
    out.step_index = inc.step_index;
    out.nodes = inc.active;
    out.rows = Matrix(inc.n_active(), dm);

    // Per edge: [F * T || (x_src + x_dst) * T], scattered straight into its
    // endpoints' rows. Edges are visited in order, which is the order each
    // node lists them in node_edges, so the sums match the gathered form.
    std::vector<double> tw(d), row(2 * d);
    std::size_t clamped = 0;
    // Endpoint rows are random reads once the node table leaves cache; the
    // exp work per edge is enough to hide them if fetched a few edges early.
    constexpr std::size_t kAhead = 4;
    for (std::size_t e = 0; e < k; ++e) {
        if (e + kAhead < k) {
            const auto ja = inc.edge_begin + e + kAhead;
            __builtin_prefetch(g.node_feats.row(g.src[ja]).data());
            __builtin_prefetch(g.node_feats.row(g.dst[ja]).data());
            for (auto p = inc.edge_ptr[e + kAhead]; p < inc.edge_ptr[e + kAhead + 1]; ++p) {
                const auto o = out.rows.row(inc.edge_nodes[p]);
                __builtin_prefetch(o.data(), 1);
                __builtin_prefetch(o.data() + 2 * d - 1, 1);
            }
        }
        clamped += enc.encode_into(inc.dt_intra[e], tw);
        const auto j = inc.edge_begin + e;
        const auto f = g.edge_feats.row(j);
        for (std::size_t c = 0; c < d; ++c) row[c] = f[c] * tw[c];
        const auto xs = g.node_feats.row(g.src[j]);
        if (g.dst[j] != g.src[j]) {
            const auto xd = g.node_feats.row(g.dst[j]);
            for (std::size_t c = 0; c < d; ++c) row[d + c] = (xs[c] + xd[c]) * tw[c];
        } else {
            for (std::size_t c = 0; c < d; ++c) row[d + c] = xs[c] * tw[c];
        }
        for (auto p = inc.edge_ptr[e]; p < inc.edge_ptr[e + 1]; ++p) {
            auto o = out.rows.row(inc.edge_nodes[p]);
            for (std::size_t c = 0; c < 2 * d; ++c) o[c] += row[c];
        }
    }
    if (clamp_events) *clamp_events += clamped;

    if (hops > 1) {
        Matrix prev(inc.n_active(), 2 * d);
        for (std::size_t r = 0; r < inc.n_active(); ++r) {
            const auto o = out.rows.row(r);
            std::copy(o.begin(), o.begin() + static_cast<std::ptrdiff_t>(2 * d), prev.row(r).begin());
        }
        for (std::size_t l = 2; l <= hops; ++l) {
            prev = inc.edge_to_node(inc.node_to_edge(prev));
            const auto off = static_cast<std::ptrdiff_t>((l - 1) * 2 * d);
            for (std::size_t r = 0; r < inc.n_active(); ++r) {
                std::copy(prev.row(r).begin(), prev.row(r).end(), out.rows.row(r).begin() + off);
            }
        }
    }
    if (!out.rows.all_finite()) throw NumericError("intra_step: non-finite message in step " + std::to_string(inc.step_index));
    return out;
}

/// Aggregated messages for a set of nodes, sorted by node id.
struct NodeMessages {
    std::vector<NodeId> nodes;
    Matrix rows;

    /// Row for `v`, or zeros if v has no history.
    std::vector<double> get(NodeId v) const {
        const auto it = std::lower_bound(nodes.begin(), nodes.end(), v);
        if (it == nodes.end() || *it != v) return std::vector<double>(rows.cols(), 0.0);
        const auto r = rows.row(static_cast<std::size_t>(it - nodes.begin()));
        return {r.begin(), r.end()};
    }
};

namespace detail {

/// Steps (1-based, inclusive) that feed a query closing at step `last` with an
/// optional window of the most recent `window` steps (0 = all).
inline std::pair<std::size_t, std::size_t> window_range(std::size_t last, std::size_t window) {
    const std::size_t first = (window == 0 || window >= last) ? 1 : last - window + 1;
    return {first, last};
}

/// Adds row * repeat(encoding) into acc.
inline void add_decayed(std::span<double> acc, std::span<const double> row, std::span<const double> e) {
    const auto d = e.size();
    for (std::size_t c = 0; c < row.size(); ++c) acc[c] += row[c] * e[c % d];
}

}  // namespace detail

/// Carries per-step messages forward to time t and sums them.
///
/// `steps[i]` holds the messages of step i+1. Steps closing after t are
/// ignored; `window` > 0 keeps only the most recent `window` closed steps.
inline NodeMessages inter_step(std::span<const StepMessages> steps, const StepPartition& part,
                               const timecode::TimeEncoder& enc, double t, std::size_t window = 0) {
    const auto last = std::min(part.last_closed_step(t), steps.size());
    if (part.last_closed_step(t) == 0) {
        throw std::out_of_range("inter_step: query time " + format_double(t) + " precedes the first boundary");
    }
    const auto [first, upto] = detail::window_range(last, window);
    const auto dm = steps.empty() ? 0 : steps.front().d_m();
    std::vector<NodeId> nodes;
    for (auto s = first; s <= upto; ++s) nodes.insert(nodes.end(), steps[s - 1].nodes.begin(), steps[s - 1].nodes.end());
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());

    NodeMessages out;
    out.nodes = nodes;
    out.rows = Matrix(nodes.size(), dm);
    std::vector<double> e(enc.dim());
    for (auto s = first; s <= upto; ++s) {
        const auto& sm = steps[s - 1];
        enc.encode_into(t - part.boundary(s), e);
        std::size_t cursor = 0;
        for (std::size_t r = 0; r < sm.nodes.size(); ++r) {
            while (nodes[cursor] != sm.nodes[r]) ++cursor;
            detail::add_decayed(out.rows.row(cursor), sm.rows.row(r), e);
        }
    }
    return out;
}

/// Dense variant of inter_step: out has one row per node of the graph.
/// Performs the same additions in the same order as inter_step.
inline void inter_step_dense(std::span<const StepMessages> steps, const StepPartition& part,
                             const timecode::TimeEncoder& enc, double t, std::size_t last_step,
                             std::size_t window, Matrix& out) {
    out.fill(0.0);
    if (last_step == 0) return;
    const auto [first, upto] = detail::window_range(last_step, window);
    std::vector<double> e(enc.dim());
    for (auto s = first; s <= upto; ++s) {
        const auto& sm = steps[s - 1];
        enc.encode_into(t - part.boundary(s), e);
        for (std::size_t r = 0; r < sm.nodes.size(); ++r) detail::add_decayed(out.row(sm.nodes[r]), sm.rows.row(r), e);
    }
}

/// Message of node `u` at an arbitrary time t: closed steps are carried
/// forward with inter_step, and interactions after the last closed boundary
/// (up to and including t) get an on-the-fly intra-step pass closing at t.
inline std::vector<double> query_message(const tgraph::TemporalGraph& g, std::span<const StepMessages> steps,
                                         const StepPartition& part, const timecode::TimeEncoder& enc, NodeId u,
                                         double t, std::size_t hops, std::size_t window = 0) {
    std::vector<double> acc(message_dim(g.d_e(), hops), 0.0);
    const auto last = part.last_closed_step(t);
    if (last > 0) acc = inter_step(steps, part, enc, t, window).get(u);
    const double open = last == 0 ? part.origin : part.boundary(last);
    auto first = last == 0 ? std::lower_bound(g.time.begin(), g.time.end(), open)
                           : std::upper_bound(g.time.begin(), g.time.end(), open);
    auto end = std::upper_bound(g.time.begin(), g.time.end(), t);
    if (first < end) {
        IncidenceBuilder b(g.n_nodes);
        const auto inc = b.build(g, last + 1, t, static_cast<std::size_t>(first - g.time.begin()),
                                 static_cast<std::size_t>(end - g.time.begin()));
        const auto partial = intra_step(g, inc, enc, hops);
        const auto it = std::lower_bound(partial.nodes.begin(), partial.nodes.end(), u);
        if (it != partial.nodes.end() && *it == u) {
            const auto r = partial.rows.row(static_cast<std::size_t>(it - partial.nodes.begin()));
            for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += r[c];
        }
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Message cache (SDM1)

inline constexpr std::string_view kMessageMagic = "SDM1";
inline constexpr std::uint32_t kMessageVersion = 1;

struct MessageCache {
    std::size_t n_nodes = 0;
    std::size_t d_e = 0;
    std::size_t hops = 1;
    timecode::TimeEncoder encoder;
    StepPartition partition;
    std::vector<StepMessages> steps;  // steps[i] is step i+1
    std::uint64_t clamp_events = 0;

    std::size_t d_m() const noexcept { return message_dim(d_e, hops); }
    std::size_t n_steps() const noexcept { return steps.size(); }

    friend bool operator==(const MessageCache&, const MessageCache&) = default;
};

inline BinaryWriter encode_message_cache(const MessageCache& c) {
    BinaryWriter w;
    w.bytes(kMessageMagic);
    w.u32(kMessageVersion);
    w.u64(c.partition.steps());
    w.u32(static_cast<std::uint32_t>(c.d_e));
    w.u32(static_cast<std::uint32_t>(c.d_m()));
    w.u32(static_cast<std::uint32_t>(c.hops));
    w.f64s(c.encoder.gammas);
    w.f64(c.encoder.exponent_clamp);
    w.u64(c.n_nodes);
    w.f64(c.partition.origin);
    w.f64(c.partition.interval);
    w.f64s(c.partition.boundaries);
    w.u64(c.clamp_events);
    for (const auto& s : c.steps) {
        w.u64(s.step_index);
        w.u64(s.nodes.size());
        w.u64s(s.nodes);
        w.f64s(s.rows.flat());
    }
    return w;
}

inline MessageCache decode_message_cache(BinaryReader& r) {
    r.expect_header(kMessageMagic, kMessageVersion);
    MessageCache c;
    const auto L = r.u64();
    c.d_e = r.u32();
    const auto dm = r.u32();
    c.hops = r.u32();
    if (c.hops == 0 || dm != message_dim(c.d_e, c.hops)) throw DataError(r.origin() + ": inconsistent message dims");
    c.encoder.gammas = r.f64s(c.d_e);
    c.encoder.exponent_clamp = r.f64();
    c.n_nodes = r.u64();
    c.partition.origin = r.f64();
    c.partition.interval = r.f64();
    c.partition.boundaries = r.f64s(L);
    c.clamp_events = r.u64();
    c.steps.resize(L);
    for (std::size_t i = 0; i < L; ++i) {
        auto& s = c.steps[i];
        s.step_index = r.u64();
        if (s.step_index != i + 1) throw DataError(r.origin() + ": step blocks out of order");
        const auto a = r.u64();
        s.nodes = r.u64s(a);
        s.rows = Matrix(a, dm, r.f64s(a * dm));
    }
    if (!r.at_end()) throw DataError(r.origin() + ": trailing bytes in message cache");
    return c;
}

inline void save_message_cache(const MessageCache& c, const std::string& path) { encode_message_cache(c).save(path); }

inline MessageCache load_message_cache(const std::string& path) {
    auto r = BinaryReader::from_file(path);
    return decode_message_cache(r);
}

struct PrecomputeStats {
    std::size_t edges = 0;
    std::size_t steps = 0;
    std::size_t hops = 0;
    std::size_t active_rows = 0;
    std::uint64_t clamp_events = 0;
    double wall_ms = 0.0;

    double edges_per_sec() const { return wall_ms > 0 ? 1000.0 * static_cast<double>(edges) / wall_ms : 0.0; }
};

inline std::size_t resolve_threads(std::size_t requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("SCADYG_THREADS")) {
        const auto v = std::strtoul(env, nullptr, 10);
        if (v > 0) return v;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs incidence construction and intra-step propagation for every step.
/// Steps are processed by up to `threads` workers (0 = auto) and merged in
/// step order, so the result does not depend on scheduling.
inline MessageCache precompute_all(const tgraph::TemporalGraph& g, const StepPartition& part,
                                   const timecode::TimeEncoder& enc, std::size_t hops, std::size_t threads = 1,
                                   PrecomputeStats* stats = nullptr) {
    const auto t0 = std::chrono::steady_clock::now();
    enc.validate();
    if (hops < 1) throw UsageError("precompute_all: hops must be >= 1");
    if (enc.dim() != g.d_e()) {
        throw UsageError("precompute_all: encoder dim " + std::to_string(enc.dim()) + " != graph d_e " +
                         std::to_string(g.d_e()));
    }
    const auto off = step_offsets(g, part);
    MessageCache c;
    c.n_nodes = g.n_nodes;
    c.d_e = g.d_e();
    c.hops = hops;
    c.encoder = enc;
    c.partition = part;
    c.steps.resize(part.steps());
    std::vector<std::size_t> clamps(part.steps(), 0);

    const auto L = part.steps();
    const auto workers = std::min<std::size_t>(resolve_threads(threads), std::max<std::size_t>(L, 1));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    auto work = [&] {
        IncidenceBuilder builder(g.n_nodes);
        try {
            for (auto i = next++; i < L && !failed; i = next++) {
                const auto inc = builder.build(g, i + 1, part.boundaries[i], off[i], off[i + 1]);
                c.steps[i] = intra_step(g, inc, enc, hops, &clamps[i]);
            }
        } catch (...) {
            if (!failed.exchange(true)) failure = std::current_exception();
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    for (auto cl : clamps) c.clamp_events += cl;

    if (stats) {
        stats->edges = g.n_interactions();
        stats->steps = L;
        stats->hops = hops;
        stats->active_rows = 0;
        for (const auto& s : c.steps) stats->active_rows += s.nodes.size();
        stats->clamp_events = c.clamp_events;
        stats->wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
    return c;
}

}  // namespace scadyg::ttr

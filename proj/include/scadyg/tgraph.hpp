#pragma once

#include <charconv>
#include <numeric>
#include <optional>
#include <sstream>
#include <unordered_map>
#include <utility>

#include "scadyg/common.hpp"

namespace scadyg::tgraph {

/// One temporal edge, viewed in place inside a TemporalGraph.
struct Interaction {
    NodeId src;
    NodeId dst;
    double time;
    std::span<const double> edge_feat;
};

/// Chronologically ordered interactions plus node and edge feature matrices.
///
/// Interactions are stored as parallel arrays; `edge_feats` has one row per
/// interaction and `node_feats` one row per node. `id_map[i]` is the external
/// id of internal node i.
struct TemporalGraph {
    std::size_t n_nodes = 0;
    std::vector<NodeId> src;
    std::vector<NodeId> dst;
    std::vector<double> time;
    Matrix edge_feats;  // k x d_e
    Matrix node_feats;  // n x d_v
    std::vector<std::string> id_map;

    std::size_t n_interactions() const noexcept { return time.size(); }
    std::size_t d_e() const noexcept { return edge_feats.cols(); }
    std::size_t d_v() const noexcept { return node_feats.cols(); }
    double t_min() const { return time.empty() ? 0.0 : time.front(); }
    double t_max() const { return time.empty() ? 0.0 : time.back(); }

    Interaction interaction(std::size_t j) const {
        return {src[j], dst[j], time[j],
                d_e() ? edge_feats.row(j) : std::span<const double>{}};
    }

    /// Throws DataError if any structural invariant is broken.
    void validate() const {
        const auto k = n_interactions();
        if (src.size() != k || dst.size() != k) throw DataError("graph: ragged interaction arrays");
        if (edge_feats.rows() != k && !(edge_feats.cols() == 0 && edge_feats.rows() == 0)) {
            throw DataError("graph: edge feature rows != interaction count");
        }
        if (node_feats.rows() != n_nodes && node_feats.cols() != 0) {
            throw DataError("graph: node feature rows != node count");
        }
        if (!id_map.empty() && id_map.size() != n_nodes) throw DataError("graph: id map size mismatch");
        for (std::size_t j = 0; j < k; ++j) {
            if (src[j] >= n_nodes || dst[j] >= n_nodes) throw DataError("graph: node id out of range");
            if (!std::isfinite(time[j]) || time[j] < 0) throw DataError("graph: bad timestamp");
            if (j > 0 && time[j] < time[j - 1]) throw DataError("graph: interactions not time-sorted");
        }
    }
};

/// Builds a graph from unsorted rows: stable-sorts by time and keeps the given
/// node count. Feature matrices may be empty.
inline TemporalGraph make_graph(std::size_t n_nodes, std::vector<NodeId> src, std::vector<NodeId> dst,
                                std::vector<double> time, Matrix edge_feats = {}, Matrix node_feats = {}) {
    const auto k = time.size();
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return time[a] < time[b]; });
    TemporalGraph g;
    g.n_nodes = n_nodes;
    g.src.resize(k);
    g.dst.resize(k);
    g.time.resize(k);
    const auto de = edge_feats.cols();
    if (de) g.edge_feats.resize(k, de);
    for (std::size_t j = 0; j < k; ++j) {
        const auto o = order[j];
        g.src[j] = src[o];
        g.dst[j] = dst[o];
        g.time[j] = time[o];
        if (de) std::copy_n(edge_feats.row(o).begin(), de, g.edge_feats.row(j).begin());
    }
    g.node_feats = std::move(node_feats);
    g.id_map.resize(n_nodes);
    for (std::size_t i = 0; i < n_nodes; ++i) g.id_map[i] = std::to_string(i);
    g.validate();
    return g;
}

/// Copy of `g` keeping only interactions for which `keep(j)` is true. Node
/// count, node features and id map are unchanged.
template <typename Pred>
TemporalGraph filter_interactions(const TemporalGraph& g, Pred keep) {
    TemporalGraph out;
    out.n_nodes = g.n_nodes;
    out.node_feats = g.node_feats;
    out.id_map = g.id_map;
    std::vector<std::size_t> kept;
    for (std::size_t j = 0; j < g.n_interactions(); ++j)
        if (keep(j)) kept.push_back(j);
    out.src.reserve(kept.size());
    if (g.d_e()) out.edge_feats.resize(kept.size(), g.d_e());
    for (std::size_t r = 0; r < kept.size(); ++r) {
        const auto j = kept[r];
        out.src.push_back(g.src[j]);
        out.dst.push_back(g.dst[j]);
        out.time.push_back(g.time[j]);
        if (g.d_e()) std::copy_n(g.edge_feats.row(j).begin(), g.d_e(), out.edge_feats.row(r).begin());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Edge-list text files

struct EdgeListSchema {
    char delimiter = ',';
    bool skip_header = false;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

}  // namespace detail

/// Parses `src,dst,time[,f1..fd]` text. Node ids are compacted to 0..n-1 in
/// order of first appearance after the stable time sort.
inline TemporalGraph parse_edge_list(std::istream& in, const EdgeListSchema& schema = {},
                                     const std::string& origin = "<stream>") {
    std::vector<std::string> ext_src, ext_dst;
    std::vector<double> times;
    std::vector<double> feats;
    std::optional<std::size_t> arity;
    std::string line;
    std::size_t line_no = 0;
    bool header_pending = schema.skip_header;
    while (std::getline(in, line)) {
        ++line_no;
        const auto body = detail::trim(line);
        if (body.empty() || body.front() == '#') continue;
        if (header_pending) {
            header_pending = false;
            continue;
        }
        std::vector<std::string_view> cols;
        std::size_t start = 0;
        while (true) {
            const auto pos = body.find(schema.delimiter, start);
            cols.push_back(detail::trim(body.substr(start, pos == std::string_view::npos ? pos : pos - start)));
            if (pos == std::string_view::npos) break;
            start = pos + 1;
        }
        const auto where = origin + ":" + std::to_string(line_no);
        if (cols.size() < 3) throw DataError(where + ": expected src,dst,time[,features...]");
        if (cols[0].empty() || cols[1].empty()) throw DataError(where + ": empty node id");
        const auto t = detail::parse_double(cols[2]);
        if (!t) throw DataError(where + ": malformed timestamp '" + std::string(cols[2]) + "'");
        if (!std::isfinite(*t)) throw DataError(where + ": non-finite timestamp");
        if (*t < 0) throw DataError(where + ": negative timestamp");
        const auto d = cols.size() - 3;
        if (arity && *arity != d) {
            throw DataError(where + ": inconsistent feature arity " + std::to_string(d) + " (expected " +
                            std::to_string(*arity) + ")");
        }
        arity = d;
        for (std::size_t c = 3; c < cols.size(); ++c) {
            const auto f = detail::parse_double(cols[c]);
            if (!f || !std::isfinite(*f)) throw DataError(where + ": malformed feature in column " + std::to_string(c + 1));
            feats.push_back(*f);
        }
        ext_src.emplace_back(cols[0]);
        ext_dst.emplace_back(cols[1]);
        times.push_back(*t);
    }
    if (times.empty()) throw DataError(origin + ": no interactions");

    const auto k = times.size();
    const auto de = *arity;
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return times[a] < times[b]; });

    TemporalGraph g;
    std::unordered_map<std::string, NodeId> ids;
    auto intern = [&](const std::string& s) {
        auto [it, fresh] = ids.try_emplace(s, g.id_map.size());
        if (fresh) g.id_map.push_back(s);
        return it->second;
    };
    g.src.resize(k);
    g.dst.resize(k);
    g.time.resize(k);
    if (de) g.edge_feats.resize(k, de);
    for (std::size_t j = 0; j < k; ++j) {
        const auto o = order[j];
        g.src[j] = intern(ext_src[o]);
        g.dst[j] = intern(ext_dst[o]);
        g.time[j] = times[o];
        if (de) std::copy_n(feats.begin() + static_cast<std::ptrdiff_t>(o * de), de, g.edge_feats.row(j).begin());
    }
    g.n_nodes = g.id_map.size();
    return g;
}

inline TemporalGraph load_edge_list(const std::string& path, const EdgeListSchema& schema = {}) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open edge list: " + path);
    return parse_edge_list(in, schema, path);
}

/// Writes the graph back out in edge-list form using external ids.
inline void write_edge_list(const TemporalGraph& g, std::ostream& out, char delimiter = ',') {
    for (std::size_t j = 0; j < g.n_interactions(); ++j) {
        out << g.id_map[g.src[j]] << delimiter << g.id_map[g.dst[j]] << delimiter << format_double(g.time[j]);
        for (std::size_t c = 0; c < g.d_e(); ++c) out << delimiter << format_double(g.edge_feats(j, c));
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// SDG1 binary cache

inline constexpr std::string_view kGraphMagic = "SDG1";
inline constexpr std::uint32_t kGraphVersion = 1;

inline BinaryWriter encode_graph(const TemporalGraph& g) {
    BinaryWriter w;
    w.bytes(kGraphMagic);
    w.u32(kGraphVersion);
    w.u64(g.n_nodes);
    w.u64(g.n_interactions());
    w.u32(static_cast<std::uint32_t>(g.d_v()));
    w.u32(static_cast<std::uint32_t>(g.d_e()));
    w.u64s(g.src);
    w.u64s(g.dst);
    w.f64s(g.time);
    w.f64s(g.edge_feats.flat());
    w.f64s(g.node_feats.flat());
    w.u64(g.id_map.size());
    for (const auto& s : g.id_map) w.str(s);
    return w;
}

inline TemporalGraph decode_graph(BinaryReader& r) {
    r.expect_header(kGraphMagic, kGraphVersion);
    TemporalGraph g;
    g.n_nodes = r.u64();
    const auto k = r.u64();
    const auto dv = r.u32();
    const auto de = r.u32();
    g.src = r.u64s(k);
    g.dst = r.u64s(k);
    g.time = r.f64s(k);
    if (de) g.edge_feats = Matrix(k, de, r.f64s(k * de));
    if (dv) g.node_feats = Matrix(g.n_nodes, dv, r.f64s(g.n_nodes * dv));
    const auto ids = r.u64();
    g.id_map.reserve(ids);
    for (std::uint64_t i = 0; i < ids; ++i) g.id_map.push_back(r.str());
    if (!r.at_end()) throw DataError(r.origin() + ": trailing bytes in graph cache");
    g.validate();
    return g;
}

inline void save_graph(const TemporalGraph& g, const std::string& path) { encode_graph(g).save(path); }

inline TemporalGraph load_graph(const std::string& path) {
    auto r = BinaryReader::from_file(path);
    return decode_graph(r);
}

// ---------------------------------------------------------------------------
// Feature normalization

namespace detail {

inline Matrix replicate_cyclic(const Matrix& m, std::size_t target_dim) {
    Matrix out(m.rows(), target_dim);
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < target_dim; ++c) out(r, c) = m(r, c % m.cols());
    return out;
}

}  // namespace detail

/// Brings edge and node features to a common width `target_dim`.
///
/// Featureless edges get a timestamp feature min-max scaled over
/// `time_range` (defaults to the graph's span) and clamped to [0, 1].
/// Narrower features are replicated cyclically; missing node features
/// become all-ones.
inline TemporalGraph normalize_features(const TemporalGraph& g, std::size_t target_dim,
                                        std::optional<std::pair<double, double>> time_range = {}) {
    if (target_dim < 1) throw UsageError("normalize_features: target_dim must be >= 1");
    if (g.d_e() > target_dim) {
        throw UsageError("normalize_features: edge feature dim " + std::to_string(g.d_e()) +
                         " exceeds target " + std::to_string(target_dim) + "; configure a projection");
    }
    if (g.d_v() > target_dim) {
        throw UsageError("normalize_features: node feature dim " + std::to_string(g.d_v()) +
                         " exceeds target " + std::to_string(target_dim));
    }
    TemporalGraph out = g;
    const auto k = g.n_interactions();
    if (g.d_e() == 0) {
        const auto [lo, hi] = time_range.value_or(std::pair{g.t_min(), g.t_max()});
        Matrix tf(k, 1);
        for (std::size_t j = 0; j < k; ++j) {
            const double v = hi > lo ? (g.time[j] - lo) / (hi - lo) : 0.0;
            tf(j, 0) = std::clamp(v, 0.0, 1.0);
        }
        out.edge_feats = detail::replicate_cyclic(tf, target_dim);
    } else if (g.d_e() < target_dim) {
        out.edge_feats = detail::replicate_cyclic(g.edge_feats, target_dim);
    }
    if (g.d_v() == 0) {
        out.node_feats = Matrix(g.n_nodes, target_dim, 1.0);
    } else if (g.d_v() < target_dim) {
        out.node_feats = detail::replicate_cyclic(g.node_feats, target_dim);
    }
    if (!out.edge_feats.all_finite() || !out.node_feats.all_finite()) {
        throw NumericError("normalize_features: non-finite feature entry");
    }
    return out;
}

}  // namespace scadyg::tgraph

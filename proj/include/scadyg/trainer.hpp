#pragma once

#include <chrono>
#include <optional>
#include <ostream>
#include <random>

#include <json.hpp>

#include "scadyg/hypermodel.hpp"
#include "scadyg/metrics.hpp"
#include "scadyg/negatives.hpp"
#include "scadyg/ttr.hpp"

namespace scadyg::train {

struct EvalProtocol {
    std::size_t n_negatives = 100;
    bool collision_check = true;
    std::size_t ndcg_k = 10;
    std::uint64_t seed = 0;
};

/// One evaluation record. `loss` is the mean training loss of the epoch
/// (absent for the untrained epoch-0 record and for test records);
/// `eval_loss` is the loss on the evaluated split.
struct MetricReport {
    std::size_t epoch = 0;
    std::string split;
    std::optional<double> loss;
    double eval_loss = 0.0;
    std::optional<double> mrr, ndcg, ap, auc;
    double wall_ms = 0.0;

    /// The early-stopping metric: MRR for links, NDCG for node affinity.
    double primary() const { return mrr ? *mrr : ndcg.value_or(0.0); }
};

/// JSON-lines record; wall time is only included on request so that metric
/// logs of identical runs are byte-identical.
inline std::string to_json_line(const MetricReport& m, bool with_timing = false) {
    nlohmann::ordered_json j;
    j["epoch"] = m.epoch;
    j["split"] = m.split;
    if (m.loss) j["loss"] = *m.loss;
    j["eval_loss"] = m.eval_loss;
    if (m.mrr) j["mrr"] = *m.mrr;
    if (m.ndcg) j["ndcg"] = *m.ndcg;
    if (m.ap) j["ap"] = *m.ap;
    if (m.auc) j["auc"] = *m.auc;
    if (with_timing) j["wall_ms"] = m.wall_ms;
    return j.dump();
}

// ---------------------------------------------------------------------------
// Node affinity labels

/// Per-step affinity rows: node `node` at step `step` has target distribution
/// `values` (length `classes`, non-negative, not necessarily normalized).
struct AffinityLabels {
    struct Row {
        std::size_t step;
        NodeId node;
        std::vector<double> values;
    };
    std::size_t classes = 0;
    std::vector<Row> rows;  // sorted by (step, node)

    std::span<const Row> in_steps(std::size_t first, std::size_t last) const {
        auto lo = std::lower_bound(rows.begin(), rows.end(), first, [](const Row& r, std::size_t s) { return r.step < s; });
        auto hi = std::lower_bound(rows.begin(), rows.end(), last + 1, [](const Row& r, std::size_t s) { return r.step < s; });
        return {rows.data() + (lo - rows.begin()), static_cast<std::size_t>(hi - lo)};
    }
};

/// Affinity of each source towards its destinations within each step, from
/// interaction counts; classes = node count.
inline AffinityLabels affinity_labels_from_graph(const tgraph::TemporalGraph& g, const ttr::StepPartition& part) {
    AffinityLabels out;
    out.classes = g.n_nodes;
    const auto off = ttr::step_offsets(g, part);
    for (std::size_t s = 1; s <= part.steps(); ++s) {
        std::vector<std::pair<NodeId, NodeId>> pairs;
        for (auto j = off[s - 1]; j < off[s]; ++j) pairs.emplace_back(g.src[j], g.dst[j]);
        std::sort(pairs.begin(), pairs.end());
        for (std::size_t i = 0; i < pairs.size();) {
            AffinityLabels::Row row{s, pairs[i].first, std::vector<double>(g.n_nodes, 0.0)};
            while (i < pairs.size() && pairs[i].first == row.node) row.values[pairs[i++].second] += 1.0;
            out.rows.push_back(std::move(row));
        }
    }
    return out;
}

/// Reads `time,node,class,weight` rows; `node` is an external id from the
/// graph's id map and `class` an integer in [0, classes). Rows are summed per
/// (step, node, class).
inline AffinityLabels load_affinity_labels(const std::string& path, const tgraph::TemporalGraph& g,
                                           const ttr::StepPartition& part, std::size_t classes = 0) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open label file: " + path);
    std::unordered_map<std::string, NodeId> ids;
    for (std::size_t i = 0; i < g.id_map.size(); ++i) ids.emplace(g.id_map[i], i);
    struct Raw {
        std::size_t step;
        NodeId node;
        std::size_t cls;
        double w;
    };
    std::vector<Raw> raw;
    std::size_t max_cls = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto body = tgraph::detail::trim(line);
        if (body.empty() || body.front() == '#') continue;
        std::vector<std::string_view> cols;
        std::size_t start = 0;
        for (auto pos = body.find(','); ; pos = body.find(',', start)) {
            cols.push_back(tgraph::detail::trim(body.substr(start, pos == std::string_view::npos ? pos : pos - start)));
            if (pos == std::string_view::npos) break;
            start = pos + 1;
        }
        const auto where = path + ":" + std::to_string(line_no);
        if (cols.size() != 4) throw DataError(where + ": expected time,node,class,weight");
        const auto t = tgraph::detail::parse_double(cols[0]);
        const auto c = tgraph::detail::parse_double(cols[2]);
        const auto w = tgraph::detail::parse_double(cols[3]);
        if (!t || !c || !w || *c < 0 || *c != std::floor(*c) || *w < 0) throw DataError(where + ": malformed label row");
        const auto it = ids.find(std::string(cols[1]));
        if (it == ids.end()) throw DataError(where + ": unknown node '" + std::string(cols[1]) + "'");
        const auto cls = static_cast<std::size_t>(*c);
        max_cls = std::max(max_cls, cls);
        const double tc = std::clamp(*t, part.origin, part.boundaries.back());
        raw.push_back({part.step_of(tc), it->second, cls, *w});
    }
    AffinityLabels out;
    out.classes = classes ? classes : max_cls + 1;
    if (max_cls >= out.classes) throw DataError(path + ": class index exceeds class count");
    std::stable_sort(raw.begin(), raw.end(), [](const Raw& a, const Raw& b) {
        return std::tie(a.step, a.node) < std::tie(b.step, b.node);
    });
    for (const auto& r : raw) {
        if (out.rows.empty() || out.rows.back().step != r.step || out.rows.back().node != r.node) {
            out.rows.push_back({r.step, r.node, std::vector<double>(out.classes, 0.0)});
        }
        out.rows.back().values[r.cls] += r.w;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
    hyper::Task task = hyper::Task::link;
    double lr = 0.01;
    double weight_decay = 0.0;
    double clip_norm = 0.0;
    std::size_t batch_size = 1024;
    std::size_t max_epochs = 500;
    std::size_t patience = 20;
    std::size_t train_negatives = 1;
    std::size_t window = 0;  // most recent historical steps fed to a query; 0 = all
    std::uint64_t seed = 0;
    EvalProtocol eval;
};

/// Everything a run reads; none of it is modified.
struct TrainInputs {
    const tgraph::TemporalGraph& graph;
    const ttr::MessageCache& cache;
    const tgraph::ChronoSplit& split;
    const AffinityLabels* labels = nullptr;
};

struct TrainResult {
    std::vector<MetricReport> history;  // epoch 0 (untrained) then one per epoch, validation split
    MetricReport test;
    std::size_t best_epoch = 0;
    hyper::ModelParams best;
};

/// Messages of every node at the opening boundary of `step`, built only from
/// steps before it (n_nodes x d_m).
inline void query_messages(const ttr::MessageCache& cache, std::size_t step, std::size_t window, Matrix& out) {
    if (out.rows() != cache.n_nodes || out.cols() != cache.d_m()) out.resize(cache.n_nodes, cache.d_m());
    const auto& part = cache.partition;
    ttr::inter_step_dense(cache.steps, part, cache.encoder, part.opening(step), step - 1, window, out);
}

namespace detail {

inline bool zero_row(std::span<const double> r) {
    return std::all_of(r.begin(), r.end(), [](double v) { return v == 0.0; });
}

/// Scores many (src, dst) pairs of one step: transformed messages and the
/// head's first-layer halves are computed once per node.
class LinkScorer {
public:
    LinkScorer(const hyper::ModelParams& p, const Matrix& messages) : p_(p) {
        const auto n = messages.rows();
        const auto dout = p.d_out();
        const auto& w0 = p.value.head_w.front();
        const auto h = w0.cols();
        left_ = Matrix(n, h);
        right_ = Matrix(n, h);
        for (std::size_t v = 0; v < n; ++v) {
            if (zero_row(messages.row(v))) continue;
            const auto y = hyper::hyper_forward(p, messages.row(v));
            for (std::size_t i = 0; i < dout; ++i) {
                const auto a = w0.row(i);
                const auto b = w0.row(dout + i);
                for (std::size_t c = 0; c < h; ++c) {
                    left_(v, c) += y[i] * a[c];
                    right_(v, c) += y[i] * b[c];
                }
            }
        }
        hidden_.resize(h);
    }

    double score(NodeId u, NodeId v) {
        const auto& b0 = p_.value.head_b.front();
        const auto layers = p_.value.head_w.size();
        for (std::size_t c = 0; c < hidden_.size(); ++c) {
            hidden_[c] = left_(u, c) + right_(v, c) + b0[c];
            if (layers > 1) hidden_[c] = std::max(hidden_[c], 0.0);
        }
        std::vector<double> a = hidden_;
        for (std::size_t l = 1; l < layers; ++l) {
            std::vector<double> z(p_.value.head_w[l].cols());
            row_times_matrix(a, p_.value.head_w[l], z);
            for (std::size_t j = 0; j < z.size(); ++j) {
                z[j] += p_.value.head_b[l][j];
                if (l + 1 < layers) z[j] = std::max(z[j], 0.0);
            }
            a = std::move(z);
        }
        return a.front();
    }

private:
    const hyper::ModelParams& p_;
    Matrix left_, right_;
    std::vector<double> hidden_;
};

inline void check_inputs(const TrainInputs& in, const hyper::ModelParams& p, const TrainConfig& cfg) {
    if (in.cache.n_nodes != in.graph.n_nodes) {
        throw DataError("message cache has " + std::to_string(in.cache.n_nodes) + " nodes, graph has " +
                        std::to_string(in.graph.n_nodes));
    }
    if (in.cache.d_m() != p.d_m()) {
        throw DataError("message width " + std::to_string(in.cache.d_m()) + " != model input width " +
                        std::to_string(p.d_m()));
    }
    if (p.task != cfg.task) throw UsageError("model task does not match training task");
    if (cfg.task == hyper::Task::node) {
        if (!in.labels) throw UsageError("node affinity task needs labels");
        if (in.labels->classes != p.label_dim()) throw DataError("label classes != model output width");
    }
}

}  // namespace detail

/// Scores one split: MRR against `eval.n_negatives` sampled destinations (plus
/// AP/AUC against the first negative of each positive) for links, mean
/// NDCG@k for node affinity.
inline MetricReport evaluate(const TrainInputs& in, const hyper::ModelParams& p, const tgraph::SplitRange& range,
                             const TrainConfig& cfg, std::string split_name) {
    const auto t0 = std::chrono::steady_clock::now();
    MetricReport rep;
    rep.split = std::move(split_name);
    Matrix q;
    if (cfg.task == hyper::Task::link) {
        const auto off = ttr::step_offsets(in.graph, in.cache.partition);
        NegativeSampler sampler(in.graph, in.cache.partition);
        std::vector<double> pos;
        std::vector<double> neg_first;
        Matrix negs(0, cfg.eval.n_negatives);
        std::vector<double> neg_flat;
        double loss = 0.0;
        for (auto s = range.first_step; s <= range.last_step; ++s) {
            if (off[s - 1] == off[s]) continue;
            query_messages(in.cache, s, cfg.window, q);
            detail::LinkScorer scorer(p, q);
            std::vector<std::size_t> idx(off[s] - off[s - 1]);
            std::iota(idx.begin(), idx.end(), off[s - 1]);
            const auto ns = sampler.sample(idx, cfg.eval.n_negatives, cfg.eval.seed, cfg.eval.collision_check);
            for (std::size_t r = 0; r < idx.size(); ++r) {
                const auto u = in.graph.src[idx[r]];
                const double sp = scorer.score(u, in.graph.dst[idx[r]]);
                pos.push_back(sp);
                for (std::size_t c = 0; c < ns.dst[r].size(); ++c) {
                    const double sn = scorer.score(u, ns.dst[r][c]);
                    neg_flat.push_back(sn);
                    if (c == 0) {
                        neg_first.push_back(sn);
                        loss += hyper::pair_loss(sp, sn);
                    }
                }
            }
        }
        if (!pos.empty()) {
            negs = Matrix(pos.size(), cfg.eval.n_negatives, std::move(neg_flat));
            rep.mrr = mrr(pos, negs);
            const auto pr = ap_auc(pos, neg_first);
            rep.ap = pr.ap;
            rep.auc = pr.auc;
            rep.eval_loss = loss / static_cast<double>(pos.size());
        } else {
            rep.mrr = 0.0;
        }
    } else {
        const auto rows = in.labels->in_steps(range.first_step, range.last_step);
        double total = 0.0, loss = 0.0;
        std::size_t last = 0;
        for (const auto& row : rows) {
            if (row.step != last) {
                query_messages(in.cache, row.step, cfg.window, q);
                last = row.step;
            }
            const auto y = hyper::hyper_forward(p, q.row(row.node));
            const auto logits = hyper::head_forward(p, y);
            total += ndcg_at_k(logits, row.values, cfg.eval.ndcg_k);
            loss += hyper::detail::softmax_xent(logits, hyper::detail::normalized_label(row.values), nullptr);
        }
        const double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
        rep.ndcg = total / n;
        rep.eval_loss = loss / n;
    }
    rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

/// One pass over the training steps in chronological order; returns the mean
/// per-example training loss.
inline double train_epoch(const TrainInputs& in, hyper::ModelParams& p, const TrainConfig& cfg, std::size_t epoch,
                          NegativeSampler& sampler) {
    const auto& range = in.split.train;
    std::mt19937_64 rng(mix_seed(cfg.seed, epoch));
    const auto neg_seed = mix_seed(cfg.seed ^ 0x5eed5eed5eedULL, epoch);
    const auto off = ttr::step_offsets(in.graph, in.cache.partition);
    Matrix q;
    double loss_sum = 0.0;
    std::size_t count = 0;
    std::vector<std::size_t> local(in.graph.n_nodes, static_cast<std::size_t>(-1));

    for (auto s = range.first_step; s <= range.last_step; ++s) {
        if (cfg.task == hyper::Task::link) {
            if (off[s - 1] == off[s]) continue;
            query_messages(in.cache, s, cfg.window, q);
            std::vector<std::size_t> idx(off[s] - off[s - 1]);
            std::iota(idx.begin(), idx.end(), off[s - 1]);
            std::shuffle(idx.begin(), idx.end(), rng);
            const auto ns = sampler.sample(idx, cfg.train_negatives, neg_seed, cfg.eval.collision_check);
            for (std::size_t b = 0; b < idx.size(); b += cfg.batch_size) {
                const auto e = std::min(idx.size(), b + cfg.batch_size);
                hyper::LinkBatch batch;
                std::vector<NodeId> nodes;
                auto row_of = [&](NodeId v) {
                    if (local[v] == static_cast<std::size_t>(-1)) {
                        local[v] = nodes.size();
                        nodes.push_back(v);
                    }
                    return local[v];
                };
                for (auto r = b; r < e; ++r) {
                    const auto su = row_of(in.graph.src[idx[r]]);
                    const auto dv = row_of(in.graph.dst[idx[r]]);
                    for (auto w : ns.dst[r]) batch.triples.push_back({su, dv, row_of(w)});
                }
                batch.messages = Matrix(nodes.size(), q.cols());
                for (std::size_t r = 0; r < nodes.size(); ++r) {
                    std::copy(q.row(nodes[r]).begin(), q.row(nodes[r]).end(), batch.messages.row(r).begin());
                    local[nodes[r]] = static_cast<std::size_t>(-1);
                }
                p.zero_grad();
                const auto n = static_cast<double>(batch.triples.size());
                loss_sum += hyper::backward(p, batch, 1.0 / n);
                count += batch.triples.size();
                hyper::sgd_step(p, cfg.lr, cfg.weight_decay, cfg.clip_norm);
            }
        } else {
            const auto rows = in.labels->in_steps(s, s);
            if (rows.empty()) continue;
            query_messages(in.cache, s, cfg.window, q);
            std::vector<std::size_t> order(rows.size());
            std::iota(order.begin(), order.end(), 0);
            std::shuffle(order.begin(), order.end(), rng);
            for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
                const auto e = std::min(order.size(), b + cfg.batch_size);
                hyper::NodeBatch batch{Matrix(e - b, q.cols()), Matrix(e - b, in.labels->classes)};
                for (auto r = b; r < e; ++r) {
                    const auto& row = rows[order[r]];
                    std::copy(q.row(row.node).begin(), q.row(row.node).end(), batch.messages.row(r - b).begin());
                    std::copy(row.values.begin(), row.values.end(), batch.labels.row(r - b).begin());
                }
                p.zero_grad();
                loss_sum += hyper::backward(p, batch, 1.0 / static_cast<double>(e - b));
                count += e - b;
                hyper::sgd_step(p, cfg.lr, cfg.weight_decay, cfg.clip_norm);
            }
        }
    }
    return count ? loss_sum / static_cast<double>(count) : 0.0;
}

/// Trains with early stopping on the validation split and reports the test
/// split with the best-on-validation parameters. Records stream to
/// `metrics_log` as JSON lines when given.
inline TrainResult train(const TrainInputs& in, hyper::ModelParams params, const TrainConfig& cfg,
                         std::ostream* metrics_log = nullptr, bool log_timing = false) {
    detail::check_inputs(in, params, cfg);
    if (in.split.train.end == in.split.train.begin && cfg.task == hyper::Task::link) {
        throw DataError("empty training split");
    }
    if (cfg.batch_size == 0) throw UsageError("batch size must be >= 1");
    auto emit = [&](const MetricReport& m) {
        if (metrics_log) *metrics_log << to_json_line(m, log_timing) << '\n';
    };
    NegativeSampler sampler(in.graph, in.cache.partition);
    TrainResult res;
    auto initial = evaluate(in, params, in.split.val, cfg, "val");
    emit(initial);
    res.history.push_back(initial);
    double best = initial.primary();
    res.best = params;
    std::size_t since_best = 0;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double loss = train_epoch(in, params, cfg, epoch, sampler);
        auto rep = evaluate(in, params, in.split.val, cfg, "val");
        rep.epoch = epoch;
        rep.loss = loss;
        rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        emit(rep);
        res.history.push_back(rep);
        if (rep.primary() > best) {
            best = rep.primary();
            res.best = params;
            res.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    res.test = evaluate(in, res.best, in.split.test, cfg, "test");
    res.test.epoch = res.best_epoch;
    emit(res.test);
    return res;
}

// ---------------------------------------------------------------------------
// Weight inspection

/// Writes the top-left 4x4 block of each node's transformation W_x at the
/// closing boundary of each requested step as `node,step,i,j,value` rows.
/// Nodes without history at a step get a zero block; those (node, step)
/// pairs are returned.
inline std::vector<std::pair<NodeId, std::size_t>> dump_weights(const hyper::ModelParams& p,
                                                                const ttr::MessageCache& cache,
                                                                std::span<const NodeId> nodes,
                                                                std::span<const std::size_t> steps, std::ostream& out,
                                                                std::size_t window = 0) {
    std::vector<std::pair<NodeId, std::size_t>> flagged;
    const auto bs = std::min<std::size_t>(4, std::min(p.d_m(), p.d_out()));
    for (auto s : steps) {
        if (s < 1 || s > cache.n_steps()) throw UsageError("dump_weights: step " + std::to_string(s) + " out of range");
    }
    for (auto v : nodes) {
        if (v >= cache.n_nodes) throw UsageError("dump_weights: node " + std::to_string(v) + " out of range");
    }
    for (auto v : nodes) {
        for (auto s : steps) {
            const auto msg = ttr::inter_step(cache.steps, cache.partition, cache.encoder, cache.partition.boundary(s), window);
            const auto x = msg.get(v);
            const bool empty = detail::zero_row(x);
            Matrix wx = empty ? Matrix(bs, bs) : hyper::materialize_transform(p, x);
            if (empty) flagged.emplace_back(v, s);
            for (std::size_t i = 0; i < bs; ++i)
                for (std::size_t j = 0; j < bs; ++j)
                    out << v << ',' << s << ',' << i << ',' << j << ',' << format_double(wx(i, j)) << '\n';
        }
    }
    return flagged;
}

}  // namespace scadyg::train

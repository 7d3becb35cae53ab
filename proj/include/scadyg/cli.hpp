#pragma once

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "scadyg/bench.hpp"
#include "scadyg/config.hpp"
#include "scadyg/synthetic.hpp"

namespace scadyg::cli {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Pipeline pieces shared by the commands

inline ttr::StepPartition make_partition(const tgraph::TemporalGraph& g, const RunConfig& c) {
    return c.steps > 0 ? ttr::partition_by_count(g, c.steps) : ttr::partition(g, c.interval);
}

/// [origin, closing boundary of the last training step]; used to scale the
/// timestamp feature without looking at later interactions. Partitions too
/// short to split (fewer than 3 steps) can only be preprocessed, not trained,
/// and use the full span.
inline std::pair<double, double> training_time_range(const tgraph::TemporalGraph& g, const RunConfig& c) {
    const auto part = make_partition(g, c);
    if (part.steps() < 3) return {part.origin, part.boundaries.back()};
    const auto split = tgraph::chronological_split(g, part, c.split_spec());
    return {part.origin, part.boundary(split.train.last_step)};
}

inline tgraph::TemporalGraph ingest_graph(const RunConfig& c) {
    if (c.data.empty()) throw UsageError("no edge list given (data=...)");
    tgraph::EdgeListSchema schema;
    schema.delimiter = c.delimiter.at(0);
    schema.skip_header = c.skip_header;
    auto raw = tgraph::load_edge_list(c.data, schema);
    return tgraph::normalize_features(raw, c.d_e, training_time_range(raw, c));
}

inline timecode::TimeEncoder make_encoder(const RunConfig& c, const tgraph::TemporalGraph& g) {
    double g0 = c.gamma0;
    if (g0 == 0.0) {
        const double span = g.t_max() - g.t_min();
        g0 = span > 0 ? 1.0 / span : 1.0;
    }
    const auto enc = timecode::default_schedule(c.d_e, g0, c.gamma_sign);
    return hyper::ablation_config(c.ablation_mode()).adjust(enc, c.gamma_sign * g0);
}

struct Prepared {
    tgraph::TemporalGraph graph;
    ttr::StepPartition partition;
    tgraph::ChronoSplit split;
    timecode::TimeEncoder encoder;
    ttr::MessageCache cache;
    std::optional<ttr::PrecomputeStats> stats;  // set when the cache was computed here
    std::optional<train::AffinityLabels> labels;
};

inline tgraph::TemporalGraph load_or_ingest(const RunConfig& c) {
    auto g = !c.graph.empty() ? tgraph::load_graph(c.graph) : ingest_graph(c);
    if (g.d_e() != c.d_e) {
        throw DataError("graph edge feature dim " + std::to_string(g.d_e()) + " != configured d_e " +
                        std::to_string(c.d_e));
    }
    return g;
}

inline void check_cache(const ttr::MessageCache& cache, const Prepared& p, const RunConfig& c) {
    if (cache.n_nodes != p.graph.n_nodes) {
        throw DataError("message cache has " + std::to_string(cache.n_nodes) + " nodes, graph has " +
                        std::to_string(p.graph.n_nodes));
    }
    if (cache.d_e != c.d_e) {
        throw DataError("message cache d_e " + std::to_string(cache.d_e) + " != configured d_e " + std::to_string(c.d_e));
    }
    if (cache.hops != c.hops) {
        throw DataError("message cache hops " + std::to_string(cache.hops) + " != configured hops " +
                        std::to_string(c.hops));
    }
    if (!(cache.partition == p.partition)) throw DataError("message cache partition differs from the configured one");
    if (!(cache.encoder == p.encoder)) throw DataError("message cache decay rates differ from the configured ones");
}

/// Graph, partition, split, encoder and message cache for a config. An
/// existing cache file is loaded and checked; otherwise it is computed.
inline Prepared prepare(const RunConfig& c, bool need_cache = true) {
    c.validate();
    Prepared p;
    p.graph = load_or_ingest(c);
    p.partition = make_partition(p.graph, c);
    p.split = tgraph::chronological_split(p.graph, p.partition, c.split_spec());
    p.encoder = make_encoder(c, p.graph);
    if (need_cache) {
        if (!c.cache.empty() && fs::exists(c.cache)) {
            p.cache = ttr::load_message_cache(c.cache);
            check_cache(p.cache, p, c);
        } else {
            ttr::PrecomputeStats stats;
            p.cache = ttr::precompute_all(p.graph, p.partition, p.encoder, c.hops, c.threads, &stats);
            p.stats = stats;
        }
    }
    if (c.task_kind() == hyper::Task::node) {
        p.labels = c.labels.empty() ? train::affinity_labels_from_graph(p.graph, p.partition)
                                    : train::load_affinity_labels(c.labels, p.graph, p.partition, c.classes);
    }
    return p;
}

inline hyper::ModelShape model_shape(const RunConfig& c, const Prepared& p) {
    hyper::ModelShape s;
    s.d_m = ttr::message_dim(c.d_e, c.hops);
    s.hidden = c.hidden_layers();
    s.task = c.task_kind();
    s.label_dim = s.task == hyper::Task::link ? 1 : p.labels->classes;
    s.hypernet = hyper::ablation_config(c.ablation_mode()).hypernet;
    return s;
}

inline void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path.string());
    f << text;
    if (!f) throw DataError("write failed: " + path.string());
}

inline std::vector<std::uint64_t> parse_id_list(std::string_view s, std::string_view what) {
    std::vector<std::uint64_t> out;
    std::size_t start = 0;
    for (auto pos = s.find(','); ; pos = s.find(',', start)) {
        std::uint64_t v = 0;
        detail::parse_into(what, s.substr(start, pos == std::string_view::npos ? pos : pos - start), v);
        out.push_back(v);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

/// Counts differing entries between two graphs; shape differences count once each.
inline std::size_t graph_diffs(const tgraph::TemporalGraph& a, const tgraph::TemporalGraph& b) {
    std::size_t d = 0;
    auto cmp = [&](const auto& x, const auto& y) {
        if (x.size() != y.size()) {
            ++d;
            return;
        }
        for (std::size_t i = 0; i < x.size(); ++i) d += !(x[i] == y[i]);
    };
    d += a.n_nodes != b.n_nodes;
    cmp(a.src, b.src);
    cmp(a.dst, b.dst);
    cmp(a.time, b.time);
    cmp(a.edge_feats.flat(), b.edge_feats.flat());
    cmp(a.node_feats.flat(), b.node_feats.flat());
    cmp(a.id_map, b.id_map);
    return d;
}

// ---------------------------------------------------------------------------
// Commands

struct Streams {
    std::ostream& out;
    std::ostream& err;
};

inline int cmd_ingest(RunConfig c, bool validate, Streams io) {
    auto g = ingest_graph(c);
    const auto path = c.graph.empty() ? c.data + ".sdg" : c.graph;
    tgraph::save_graph(g, path);
    io.out << "nodes=" << g.n_nodes << " interactions=" << g.n_interactions() << " span=" << format_double(g.t_max() - g.t_min())
           << " d_e=" << g.d_e() << " d_v=" << g.d_v() << " -> " << path << '\n';
    if (validate) {
        const auto back = tgraph::load_graph(path);
        const auto diffs = graph_diffs(g, back);
        if (diffs) {
            io.err << "validation failed, " << diffs << " diffs\n";
            return 3;
        }
        io.out << "OK, 0 diffs\n";
    }
    return 0;
}

inline int cmd_preprocess(RunConfig c, Streams io) {
    c.validate();
    if (c.cache.empty()) c.cache = (fs::path(c.out) / "cache.sdm").string();
    const auto g = load_or_ingest(c);
    const auto part = make_partition(g, c);
    const auto enc = make_encoder(c, g);
    ttr::PrecomputeStats stats;
    const auto cache = ttr::precompute_all(g, part, enc, c.hops, c.threads, &stats);
    if (fs::path(c.cache).has_parent_path()) fs::create_directories(fs::path(c.cache).parent_path());
    ttr::save_message_cache(cache, c.cache);
    io.out << "steps=" << stats.steps << " hops=" << stats.hops << " d_m=" << cache.d_m() << " active_rows=" << stats.active_rows
           << " clamp_events=" << stats.clamp_events << " wall_ms=" << format_double(stats.wall_ms)
           << " edges_per_sec=" << format_double(stats.edges_per_sec()) << " -> " << c.cache << '\n';
    return 0;
}

inline int cmd_train(RunConfig c, Streams io) {
    const auto p = prepare(c);
    const fs::path dir(c.out);
    fs::create_directories(dir);
    write_file(dir / "config.txt", to_text(c));
    if (p.stats) io.err << "preprocessed " << p.stats->steps << " steps in " << format_double(p.stats->wall_ms) << " ms\n";

    auto params = hyper::init_params(model_shape(c, p), c.seed);
    const auto tc = c.train_config();
    train::TrainInputs in{p.graph, p.cache, p.split, p.labels ? &*p.labels : nullptr};
    std::ostringstream metrics;
    auto res = train::train(in, std::move(params), tc, &metrics);
    write_file(dir / "metrics.jsonl", metrics.str());
    std::string timing;
    for (const auto& m : res.history) timing += train::to_json_line(m, true) + "\n";
    timing += train::to_json_line(res.test, true) + "\n";
    write_file(dir / "timing.jsonl", timing);

    hyper::Checkpoint ck;
    ck.params = std::move(res.best);
    ck.encoder = p.encoder;
    ck.ablation = c.ablation_mode();
    ck.seed = c.seed;
    ck.rng_state = hyper::rng_state_string(std::mt19937_64(mix_seed(c.seed, res.best_epoch)));
    hyper::save_checkpoint(ck, (dir / "checkpoint.sdp").string());
    io.out << train::to_json_line(res.test) << '\n';
    return 0;
}

inline void check_checkpoint(const hyper::Checkpoint& ck, const Prepared& p, const RunConfig& c) {
    if (!(ck.encoder == p.cache.encoder)) throw DataError("checkpoint decay rates differ from the message cache's");
    if (ck.params.d_m() != p.cache.d_m()) {
        throw DataError("checkpoint input width " + std::to_string(ck.params.d_m()) + " != message width " +
                        std::to_string(p.cache.d_m()));
    }
    if (ck.params.task != c.task_kind()) throw UsageError("checkpoint task does not match configured task");
}

inline int cmd_eval(RunConfig c, const std::string& checkpoint, const std::string& split, Streams io) {
    const auto p = prepare(c);
    const auto ck = hyper::load_checkpoint(checkpoint.empty() ? (fs::path(c.out) / "checkpoint.sdp").string() : checkpoint);
    check_checkpoint(ck, p, c);
    const auto tc = c.train_config();
    train::TrainInputs in{p.graph, p.cache, p.split, p.labels ? &*p.labels : nullptr};
    const tgraph::SplitRange* range = nullptr;
    if (split == "train") range = &p.split.train;
    else if (split == "val") range = &p.split.val;
    else if (split == "test") range = &p.split.test;
    else throw UsageError("unknown split '" + split + "'");
    const auto rep = train::evaluate(in, ck.params, *range, tc, split);
    io.out << train::to_json_line(rep) << '\n';
    return 0;
}

inline int cmd_dump_weights(RunConfig c, const std::string& checkpoint, const std::string& nodes,
                            const std::string& steps, const std::string& csv, Streams io) {
    const auto p = prepare(c);
    const auto ck = hyper::load_checkpoint(checkpoint.empty() ? (fs::path(c.out) / "checkpoint.sdp").string() : checkpoint);
    check_checkpoint(ck, p, c);
    const auto node_ids = parse_id_list(nodes, "nodes");
    const auto step_ids = parse_id_list(steps, "steps");
    const std::vector<std::size_t> step_list(step_ids.begin(), step_ids.end());
    std::ostringstream body;
    body << "node,step,i,j,value\n";
    const auto flagged = train::dump_weights(ck.params, p.cache, node_ids, step_list, body, c.window);
    if (csv.empty() || csv == "-") io.out << body.str();
    else write_file(csv, body.str());
    for (const auto& [v, s] : flagged) io.err << "warning: node " << v << " has no history at step " << s << "; wrote zeros\n";
    return 0;
}

struct BenchArgs {
    std::size_t lo = 10000, hi = 1000000, per_decade = 2;
    std::string sizes;
    bool no_epoch = false;
    std::size_t repeats = 3;
};

inline int cmd_bench(const RunConfig& c, const BenchArgs& a, Streams io) {
    bench::BenchSpec spec;
    spec.steps = c.steps ? c.steps : 50;
    spec.hops = c.hops;
    spec.d_e = c.d_e;
    spec.repeats = a.repeats;
    spec.threads = c.threads ? c.threads : 1;
    spec.time_epoch = !a.no_epoch;
    spec.seed = c.seed;
    std::vector<std::size_t> sizes;
    if (!a.sizes.empty()) {
        for (auto v : parse_id_list(a.sizes, "sizes")) sizes.push_back(v);
    } else {
        sizes = bench::geometric_sizes(a.lo, a.hi, a.per_decade);
    }
    std::vector<double> xs, pre, ep;
    for (auto k : sizes) {
        const auto pt = bench::bench_point(k, spec);
        io.out << bench::to_json_line(pt) << std::endl;
        xs.push_back(static_cast<double>(pt.edges));
        pre.push_back(std::max(pt.preprocess_ms, 1e-6));
        if (pt.epoch_ms) ep.push_back(std::max(*pt.epoch_ms, 1e-6));
    }
    if (xs.size() >= 2) {
        nlohmann::ordered_json j;
        j["fit"] = "loglog";
        j["preprocess_slope"] = bench::loglog_slope(xs, pre);
        if (ep.size() == xs.size()) j["epoch_slope"] = bench::loglog_slope(xs, ep);
        io.out << j.dump() << '\n';
        io.err << "preprocessing time grows as edges^" << format_double(j["preprocess_slope"].get<double>()) << " over "
               << xs.size() << " sizes (" << sizes.front() << ".." << sizes.back() << " edges, L=" << spec.steps
               << ", hops=" << spec.hops << ")\n";
    } else {
        io.err << "single size point; no slope fitted\n";
    }
    return 0;
}

inline int cmd_synth(tgraph::SynthParams sp, const std::string& path, Streams io) {
    const auto syn = tgraph::generate_synthetic(sp);
    std::ostringstream body;
    tgraph::write_edge_list(syn.graph, body);
    if (path.empty() || path == "-") io.out << body.str();
    else {
        write_file(path, body.str());
        io.err << "wrote " << syn.graph.n_interactions() << " interactions over " << syn.graph.n_nodes << " nodes to " << path
               << '\n';
    }
    return 0;
}

// ---------------------------------------------------------------------------
// Argument handling

/// Registers --config, --set and one flag per config key on `sub`, and
/// returns a function that builds the merged config after parsing:
/// defaults, then the config file, then --set pairs, then explicit flags.
inline std::function<RunConfig()> config_options(CLI::App* sub) {
    struct State {
        std::string file;
        std::vector<std::string> sets;
        std::vector<std::pair<std::string, std::string>> flags;
        std::vector<std::pair<std::string, CLI::Option*>> opts;
    };
    auto st = std::make_shared<State>();
    sub->add_option("--config", st->file, "key=value config file");
    sub->add_option("--set", st->sets, "override KEY=VALUE (repeatable)");
    st->flags.reserve(config_keys().size());
    for (const auto& key : config_keys()) {
        auto flag = key.name;
        std::replace(flag.begin(), flag.end(), '_', '-');
        std::string names = "--" + flag;
        if (key.name == "d_e") names += ",--dim";
        if (key.name == "ablation") names += ",--ablate";
        if (key.name == "steps") names += ",-L";
        st->flags.emplace_back(key.name, "");
        auto* opt = sub->add_option(names, st->flags.back().second, key.help);
        st->opts.emplace_back(key.name, opt);
    }
    return [st] {
        RunConfig c;
        if (!st->file.empty()) apply_config_file(c, st->file);
        for (const auto& s : st->sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw UsageError("--set expects KEY=VALUE, got '" + s + "'");
            set_key(c, std::string_view(s).substr(0, eq), std::string_view(s).substr(eq + 1));
        }
        for (std::size_t i = 0; i < st->flags.size(); ++i) {
            if (st->opts[i].second->count()) set_key(c, st->flags[i].first, st->flags[i].second);
        }
        // A flag for one of interval / steps overrides the other from the file.
        if (st->opts.size() && st->file.size()) {
            bool interval_flag = false, steps_flag = false;
            for (const auto& [name, opt] : st->opts) {
                if (name == "interval") interval_flag = opt->count() > 0;
                if (name == "steps") steps_flag = opt->count() > 0;
            }
            if (interval_flag && !steps_flag) c.steps = 0;
            if (steps_flag && !interval_flag) c.interval = 0.0;
        }
        return c;
    };
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    Streams io{out, err};
    CLI::App app{"Decoupled dynamic-graph learning: preprocessing, training and evaluation"};
    app.require_subcommand(1);

    auto* ingest = app.add_subcommand("ingest", "parse an edge list into a graph cache (SDG1)");
    auto ingest_cfg = config_options(ingest);
    std::string ingest_data;
    bool validate = false;
    ingest->add_option("input", ingest_data, "edge-list CSV");
    ingest->add_flag("--validate", validate, "re-read the written cache and diff it");

    auto* pre = app.add_subcommand("preprocess", "precompute the per-step message cache (SDM1)");
    auto pre_cfg = config_options(pre);

    auto* trn = app.add_subcommand("train", "train and write metrics, checkpoint and config to the output dir");
    auto trn_cfg = config_options(trn);

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on one split");
    auto ev_cfg = config_options(ev);
    std::string ev_ckpt, ev_split = "test";
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint (default <out>/checkpoint.sdp)");
    ev->add_option("--split", ev_split, "train | val | test")->check(CLI::IsMember({"train", "val", "test"}));

    auto* bn = app.add_subcommand("bench", "time preprocessing across synthetic graph sizes");
    auto bn_cfg = config_options(bn);
    BenchArgs ba;
    bn->add_option("--min-edges", ba.lo, "smallest sweep size");
    bn->add_option("--max-edges", ba.hi, "largest sweep size");
    bn->add_option("--per-decade", ba.per_decade, "sizes per factor of ten");
    bn->add_option("--sizes", ba.sizes, "explicit comma-separated edge counts");
    bn->add_option("--repeats", ba.repeats, "timed repeats per size (best is kept)");
    bn->add_flag("--no-epoch", ba.no_epoch, "skip the training-epoch timing");

    auto* dw = app.add_subcommand("dump-weights", "export top-left 4x4 blocks of per-node transformations");
    auto dw_cfg = config_options(dw);
    std::string dw_ckpt, dw_nodes, dw_steps, dw_csv;
    dw->add_option("--checkpoint", dw_ckpt, "checkpoint (default <out>/checkpoint.sdp)");
    dw->add_option("--nodes", dw_nodes, "comma-separated internal node ids")->required();
    dw->add_option("--step-list", dw_steps, "comma-separated step indices (1-based)")->required();
    dw->add_option("--csv", dw_csv, "output CSV (default stdout)");

    auto* sy = app.add_subcommand("synth", "generate a synthetic interaction stream as CSV");
    tgraph::SynthParams sp;
    std::string sy_pattern = "uniform", sy_out;
    sy->add_option("--pattern", sy_pattern, "uniform | decay-planted | periodic-planted");
    sy->add_option("--n", sp.n, "nodes")->required();
    sy->add_option("--k", sp.k, "interactions")->required();
    sy->add_option("--seed", sp.seed, "RNG seed");
    sy->add_option("--time-span", sp.time_span, "time span");
    sy->add_option("--decay-rate", sp.decay_rate, "excitation decay rate");
    sy->add_option("--period", sp.period, "period of the periodic pattern");
    sy->add_option("--base-weight", sp.base_weight, "endpoint weight without history");
    sy->add_option("--node-excitation", sp.node_excitation, "weight of a node's own recent activity");
    sy->add_option("--pair-excitation", sp.pair_excitation, "weight of a pair's recent interactions");
    sy->add_option("--out", sy_out, "output CSV (default stdout)");

    try {
        try {
            app.parse(argc, argv);
        } catch (const CLI::ParseError& e) {
            if (e.get_exit_code() == 0) {
                out << app.help();
                return 0;
            }
            err << "error: " << e.what() << '\n';
            return 2;
        }
        if (*ingest) {
            auto c = ingest_cfg();
            if (!ingest_data.empty()) c.data = ingest_data;
            if (c.steps == 0 && c.interval == 0) c.steps = 10;
            c.validate();
            return cmd_ingest(c, validate, io);
        }
        if (*pre) return cmd_preprocess(pre_cfg(), io);
        if (*trn) return cmd_train(trn_cfg(), io);
        if (*ev) return cmd_eval(ev_cfg(), ev_ckpt, ev_split, io);
        if (*bn) return cmd_bench(bn_cfg(), ba, io);
        if (*dw) return cmd_dump_weights(dw_cfg(), dw_ckpt, dw_nodes, dw_steps, dw_csv, io);
        if (*sy) {
            sp.pattern = tgraph::parse_pattern(sy_pattern);
            return cmd_synth(sp, sy_out, io);
        }
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return 3;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << '\n';
        return 4;
    } catch (const std::invalid_argument& e) {
        err << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace scadyg::cli

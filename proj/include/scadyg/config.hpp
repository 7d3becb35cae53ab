#pragma once

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "scadyg/hypermodel.hpp"
#include "scadyg/partition.hpp"
#include "scadyg/trainer.hpp"

namespace scadyg::cli {

/// Everything that determines a run. Keys in the text form match the member
/// names; CLI flags use the same names with '-' in place of '_'.
struct RunConfig {
    std::string data;   // edge-list CSV
    std::string graph;  // SDG1 graph cache
    std::string cache;  // SDM1 message cache
    std::string labels;
    std::size_t classes = 0;
    std::string delimiter = ",";
    bool skip_header = false;

    double interval = 0.0;  // exactly one of interval / steps is set
    std::size_t steps = 0;
    std::size_t hops = 1;
    std::size_t d_e = 8;
    double gamma0 = 0.0;  // magnitude; 0 picks 1 / (time span)
    double gamma_sign = -1.0;
    std::size_t window = 0;

    std::string task = "link";
    std::string hidden = "64";
    double train_frac = 0.7;
    double val_frac = 0.15;
    double test_frac = 0.15;
    double lr = 0.01;
    double weight_decay = 0.0;
    double clip = 0.0;
    std::size_t batch_size = 1024;
    std::size_t patience = 20;
    std::size_t max_epochs = 500;
    std::size_t train_negatives = 1;
    std::uint64_t seed = 0;
    std::string ablation = "full";
    std::size_t n_negatives = 100;
    bool collision_check = true;
    std::size_t ndcg_k = 10;
    std::string out = "out";
    std::size_t threads = 0;

    tgraph::SplitSpec split_spec() const { return {train_frac, val_frac, test_frac}; }
    hyper::Ablation ablation_mode() const { return hyper::parse_ablation(ablation); }
    hyper::Task task_kind() const { return hyper::parse_task(task); }
    std::vector<std::size_t> hidden_layers() const;
    train::TrainConfig train_config() const;
    void validate() const;
};

namespace detail {

inline std::string fmt(double v) { return format_double(v); }
inline std::string fmt(std::size_t v) { return std::to_string(v); }
inline std::string fmt(bool v) { return v ? "true" : "false"; }
inline std::string fmt(const std::string& v) { return v; }

inline void parse_into(std::string_view key, std::string_view s, double& v) {
    const auto d = tgraph::detail::parse_double(s);
    if (!d) throw UsageError("config " + std::string(key) + ": expected a number, got '" + std::string(s) + "'");
    v = *d;
}
template <class T>
    requires std::is_unsigned_v<T> && (!std::is_same_v<T, bool>)
inline void parse_into(std::string_view key, std::string_view s, T& v) {
    s = tgraph::detail::trim(s);
    T out{};
    const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
    if (s.empty() || r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
        throw UsageError("config " + std::string(key) + ": expected a non-negative integer, got '" + std::string(s) + "'");
    }
    v = out;
}
inline void parse_into(std::string_view key, std::string_view s, bool& v) {
    s = tgraph::detail::trim(s);
    if (s == "true" || s == "1" || s == "on" || s == "yes") v = true;
    else if (s == "false" || s == "0" || s == "off" || s == "no") v = false;
    else throw UsageError("config " + std::string(key) + ": expected a boolean, got '" + std::string(s) + "'");
}
inline void parse_into(std::string_view, std::string_view s, std::string& v) { v = std::string(tgraph::detail::trim(s)); }

struct Key {
    std::string name;
    std::string help;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, std::string_view)> set;
};

template <class T>
Key key(std::string name, T RunConfig::*member, std::string help) {
    return {name, std::move(help), [member](const RunConfig& c) { return fmt(c.*member); },
            [member, name](RunConfig& c, std::string_view s) { parse_into(name, s, c.*member); }};
}

}  // namespace detail

inline const std::vector<detail::Key>& config_keys() {
    using detail::key;
    static const std::vector<detail::Key> keys = {
        key("data", &RunConfig::data, "edge-list CSV (src,dst,time[,features...])"),
        key("graph", &RunConfig::graph, "graph cache (SDG1)"),
        key("cache", &RunConfig::cache, "message cache (SDM1)"),
        key("labels", &RunConfig::labels, "node affinity labels CSV (time,node,class,weight)"),
        key("classes", &RunConfig::classes, "label classes; 0 infers from the file"),
        key("delimiter", &RunConfig::delimiter, "edge-list field delimiter"),
        key("skip_header", &RunConfig::skip_header, "skip the first edge-list line"),
        key("interval", &RunConfig::interval, "time-step length"),
        key("steps", &RunConfig::steps, "number of time steps"),
        key("hops", &RunConfig::hops, "intra-step propagation hops"),
        key("d_e", &RunConfig::d_e, "feature / time-encoding width"),
        key("gamma0", &RunConfig::gamma0, "largest decay-rate magnitude; 0 = 1/(time span)"),
        key("gamma_sign", &RunConfig::gamma_sign, "sign applied to the rate schedule"),
        key("window", &RunConfig::window, "historical steps per query; 0 = all"),
        key("task", &RunConfig::task, "link | node"),
        key("hidden", &RunConfig::hidden, "head hidden widths, comma separated"),
        key("train_frac", &RunConfig::train_frac, "training share of steps"),
        key("val_frac", &RunConfig::val_frac, "validation share of steps"),
        key("test_frac", &RunConfig::test_frac, "test share of steps"),
        key("lr", &RunConfig::lr, "learning rate"),
        key("weight_decay", &RunConfig::weight_decay, "L2 weight decay"),
        key("clip", &RunConfig::clip, "gradient-norm clip; 0 = off"),
        key("batch_size", &RunConfig::batch_size, "positives per batch"),
        key("patience", &RunConfig::patience, "early-stopping patience in epochs"),
        key("max_epochs", &RunConfig::max_epochs, "epoch limit"),
        key("train_negatives", &RunConfig::train_negatives, "negatives per positive during training"),
        key("seed", &RunConfig::seed, "RNG seed"),
        key("ablation", &RunConfig::ablation, "full | no_time | no_hypernet | single_exponential"),
        key("n_negatives", &RunConfig::n_negatives, "evaluation negatives per positive"),
        key("collision_check", &RunConfig::collision_check, "reject negatives that are positives in the same step"),
        key("ndcg_k", &RunConfig::ndcg_k, "NDCG cutoff"),
        key("out", &RunConfig::out, "output directory or file"),
        key("threads", &RunConfig::threads, "worker cap; 0 = auto"),
    };
    return keys;
}

inline std::string normalize_key(std::string_view k) {
    std::string s(tgraph::detail::trim(k));
    std::replace(s.begin(), s.end(), '-', '_');
    return s;
}

inline void set_key(RunConfig& c, std::string_view name, std::string_view value) {
    const auto k = normalize_key(name);
    for (const auto& key : config_keys()) {
        if (key.name == k) {
            key.set(c, value);
            return;
        }
    }
    throw UsageError("unknown config key '" + k + "'");
}

inline void apply_config_text(RunConfig& c, std::istream& in, const std::string& origin) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto body = tgraph::detail::trim(line);
        if (body.empty() || body.front() == '#') continue;
        const auto eq = body.find('=');
        if (eq == std::string_view::npos) throw UsageError(origin + ":" + std::to_string(line_no) + ": expected key=value");
        set_key(c, body.substr(0, eq), body.substr(eq + 1));
    }
}

inline void apply_config_file(RunConfig& c, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file: " + path);
    apply_config_text(c, in, path);
}

/// Canonical text form: every key, in table order.
inline std::string to_text(const RunConfig& c) {
    std::string out;
    for (const auto& key : config_keys()) out += key.name + "=" + key.get(c) + "\n";
    return out;
}

inline std::vector<std::size_t> RunConfig::hidden_layers() const {
    std::vector<std::size_t> out;
    std::string_view s = tgraph::detail::trim(hidden);
    if (s.empty() || s == "none") return out;
    std::size_t start = 0;
    for (auto pos = s.find(','); ; pos = s.find(',', start)) {
        std::size_t v = 0;
        detail::parse_into("hidden", s.substr(start, pos == std::string_view::npos ? pos : pos - start), v);
        if (v == 0) throw UsageError("config hidden: widths must be >= 1");
        out.push_back(v);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline train::TrainConfig RunConfig::train_config() const {
    train::TrainConfig t;
    t.task = task_kind();
    t.lr = lr;
    t.weight_decay = weight_decay;
    t.clip_norm = clip;
    t.batch_size = batch_size;
    t.max_epochs = max_epochs;
    t.patience = patience;
    t.train_negatives = train_negatives;
    t.window = window;
    t.seed = seed;
    t.eval.n_negatives = n_negatives;
    t.eval.collision_check = collision_check;
    t.eval.ndcg_k = ndcg_k;
    t.eval.seed = mix_seed(seed, 0xe7a1);
    return t;
}

inline void RunConfig::validate() const {
    if ((interval > 0) == (steps > 0)) throw UsageError("config: set exactly one of interval and steps");
    if (interval < 0 || !std::isfinite(interval)) throw UsageError("config interval: must be positive and finite");
    if (hops < 1) throw UsageError("config hops: must be >= 1");
    if (d_e < 1) throw UsageError("config d_e: must be >= 1");
    if (gamma0 < 0 || !std::isfinite(gamma0)) throw UsageError("config gamma0: must be a finite magnitude >= 0");
    if (gamma_sign != 1.0 && gamma_sign != -1.0) throw UsageError("config gamma_sign: must be 1 or -1");
    split_spec().validate();
    if (!(lr >= 0) || !std::isfinite(lr)) throw UsageError("config lr: must be >= 0");
    if (weight_decay < 0) throw UsageError("config weight_decay: must be >= 0");
    if (clip < 0) throw UsageError("config clip: must be >= 0");
    if (batch_size < 1) throw UsageError("config batch_size: must be >= 1");
    if (train_negatives < 1) throw UsageError("config train_negatives: must be >= 1");
    if (n_negatives < 1) throw UsageError("config n_negatives: must be >= 1");
    if (ndcg_k < 1) throw UsageError("config ndcg_k: must be >= 1");
    if (delimiter.size() != 1) throw UsageError("config delimiter: must be one character");
    (void)task_kind();
    (void)ablation_mode();
    (void)hidden_layers();
}

}  // namespace scadyg::cli

#pragma once

#include <random>
#include <sstream>

#include "scadyg/timecode.hpp"

namespace scadyg::hyper {

enum class Task : std::uint32_t { link = 0, node = 1 };

inline std::string to_string(Task t) { return t == Task::link ? "link" : "node"; }

inline Task parse_task(std::string_view s) {
    if (s == "link") return Task::link;
    if (s == "node") return Task::node;
    throw UsageError("unknown task '" + std::string(s) + "' (expected link or node)");
}

/// Parameter tensors. The same layout holds values and gradients.
struct ParamSet {
    Matrix W;                             // d_m x d_out, primary transformation
    Matrix W_r;                           // d_m x d_m, hypernetwork row projector
    std::vector<double> W_p;              // d_out, hypernetwork column extender
    std::vector<Matrix> head_w;           // layer l: in_l x out_l
    std::vector<std::vector<double>> head_b;

    /// Every tensor as a flat named view, in a fixed order.
    std::vector<std::pair<std::string, std::span<double>>> tensors() {
        std::vector<std::pair<std::string, std::span<double>>> t{{"W", W.flat()}, {"W_r", W_r.flat()}, {"W_p", W_p}};
        for (std::size_t l = 0; l < head_w.size(); ++l) {
            t.emplace_back("head." + std::to_string(l) + ".weight", head_w[l].flat());
            t.emplace_back("head." + std::to_string(l) + ".bias", head_b[l]);
        }
        return t;
    }
    std::vector<std::pair<std::string, std::span<const double>>> tensors() const {
        std::vector<std::pair<std::string, std::span<const double>>> t;
        for (auto& [name, span] : const_cast<ParamSet*>(this)->tensors()) t.emplace_back(name, span);
        return t;
    }

    void zero() {
        for (auto& [name, t] : tensors()) std::fill(t.begin(), t.end(), 0.0);
    }

    friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

/// Learnable stage: hypernetwork-scaled transformation plus an MLP head,
/// with gradient buffers mirroring every tensor.
struct ModelParams {
    Task task = Task::link;
    bool hypernet = true;
    ParamSet value;
    ParamSet grad;
    std::uint64_t step_count = 0;

    std::size_t d_m() const noexcept { return value.W.rows(); }
    std::size_t d_out() const noexcept { return value.W.cols(); }
    std::size_t head_in() const noexcept { return value.head_w.front().rows(); }
    std::size_t label_dim() const noexcept { return value.head_w.back().cols(); }

    void zero_grad() { grad.zero(); }
};

struct ModelShape {
    std::size_t d_m = 0;
    std::size_t d_out = 0;  // 0 = d_m
    std::vector<std::size_t> hidden{64};
    std::size_t label_dim = 1;  // 1 for link scoring, classes for node affinity
    Task task = Task::link;
    bool hypernet = true;
};

/// W, W_r and head weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); W_p = 1; biases 0.
inline ModelParams init_params(const ModelShape& shape, std::uint64_t seed) {
    if (shape.d_m == 0) throw UsageError("init_params: d_m must be >= 1");
    const auto d_out = shape.d_out ? shape.d_out : shape.d_m;
    if (shape.hypernet && d_out != shape.d_m) throw UsageError("init_params: hypernetwork needs a square W (d_out = d_m)");
    if (shape.task == Task::link && shape.label_dim != 1) throw UsageError("init_params: link head has one output");
    std::mt19937_64 rng(seed);
    auto fill = [&](std::span<double> t, std::size_t fan_in) {
        const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> u(-a, a);
        for (auto& v : t) v = u(rng);
    };
    ModelParams p;
    p.task = shape.task;
    p.hypernet = shape.hypernet;
    p.value.W = Matrix(shape.d_m, d_out);
    fill(p.value.W.flat(), shape.d_m);
    p.value.W_r = Matrix(shape.d_m, shape.d_m);
    fill(p.value.W_r.flat(), shape.d_m);
    p.value.W_p.assign(d_out, 1.0);
    std::size_t in = shape.task == Task::link ? 2 * d_out : d_out;
    std::vector<std::size_t> dims = shape.hidden;
    dims.push_back(shape.label_dim);
    for (auto out : dims) {
        if (out == 0) throw UsageError("init_params: zero-width head layer");
        p.value.head_w.emplace_back(in, out);
        fill(p.value.head_w.back().flat(), in);
        p.value.head_b.emplace_back(out, 0.0);
        in = out;
    }
    p.grad = p.value;
    p.grad.zero();
    return p;
}

// ---------------------------------------------------------------------------
// Hypernetwork-scaled transformation

/// Intermediates of one hyper_forward call, kept for backward.
struct HyperTrace {
    std::vector<double> s;  // sigmoid(W_r x)
    std::vector<double> u;  // x * s
    std::vector<double> z;  // u W
};

namespace detail {

inline void check_finite(std::span<const double> v, const ModelParams& p, std::string_view what) {
    for (double x : v) {
        if (std::isfinite(x)) continue;
        for (const auto& [name, t] : p.value.tensors())
            for (double y : t)
                if (!std::isfinite(y)) throw NumericError(std::string(what) + ": non-finite parameter " + name);
        throw NumericError(std::string(what) + ": non-finite value from message input");
    }
}

}  // namespace detail

/// y = ((x * s) W) * W_p with s = sigmoid(W_r x); equals x W_x for the
/// per-node matrix W_x = (s outer W_p) * W. Without the hypernetwork, y = x W.
inline std::vector<double> hyper_forward(const ModelParams& p, std::span<const double> x, HyperTrace* trace = nullptr) {
    const auto dm = p.d_m();
    if (x.size() != dm) throw std::invalid_argument("hyper_forward: message width mismatch");
    std::vector<double> y(p.d_out());
    if (!p.hypernet) {
        row_times_matrix(x, p.value.W, y);
        if (trace) {
            trace->s.assign(dm, 1.0);
            trace->u.assign(x.begin(), x.end());
            trace->z = y;
        }
        detail::check_finite(y, p, "hyper_forward");
        return y;
    }
    std::vector<double> s(dm), u(dm), z(p.d_out());
    matrix_times_col(p.value.W_r, x, s);
    for (std::size_t i = 0; i < dm; ++i) {
        s[i] = sigmoid(s[i]);
        u[i] = x[i] * s[i];
    }
    row_times_matrix(u, p.value.W, z);
    for (std::size_t j = 0; j < y.size(); ++j) y[j] = z[j] * p.value.W_p[j];
    detail::check_finite(y, p, "hyper_forward");
    if (trace) *trace = {std::move(s), std::move(u), std::move(z)};
    return y;
}

/// Accumulates parameter gradients of a hyper_forward output given dL/dy.
inline void hyper_backward(ModelParams& p, std::span<const double> x, const HyperTrace& tr, std::span<const double> gy,
                           double scale = 1.0) {
    const auto dm = p.d_m();
    const auto dout = p.d_out();
    auto& g = p.grad;
    std::vector<double> gz(dout);
    if (p.hypernet) {
        for (std::size_t j = 0; j < dout; ++j) {
            g.W_p[j] += scale * gy[j] * tr.z[j];
            gz[j] = gy[j] * p.value.W_p[j];
        }
    } else {
        std::copy(gy.begin(), gy.end(), gz.begin());
    }
    for (std::size_t i = 0; i < dm; ++i) {
        if (tr.u[i] == 0.0) continue;
        auto gw = g.W.row(i);
        const double ui = scale * tr.u[i];
        for (std::size_t j = 0; j < dout; ++j) gw[j] += ui * gz[j];
    }
    if (!p.hypernet) return;
    for (std::size_t i = 0; i < dm; ++i) {
        const auto wr = p.value.W.row(i);
        double gu = 0.0;
        for (std::size_t j = 0; j < dout; ++j) gu += wr[j] * gz[j];
        const double gr = gu * x[i] * tr.s[i] * (1.0 - tr.s[i]);
        if (gr == 0.0) continue;
        auto gwr = g.W_r.row(i);
        for (std::size_t k = 0; k < dm; ++k) gwr[k] += scale * gr * x[k];
    }
}

/// The per-node transformation W_x = (sigmoid(W_r x) outer W_p) * W, built
/// explicitly (W itself without the hypernetwork).
inline Matrix materialize_transform(const ModelParams& p, std::span<const double> x) {
    Matrix wx = p.value.W;
    if (!p.hypernet) return wx;
    std::vector<double> s(p.d_m());
    matrix_times_col(p.value.W_r, x, s);
    for (std::size_t i = 0; i < wx.rows(); ++i)
        for (std::size_t j = 0; j < wx.cols(); ++j) wx(i, j) *= sigmoid(s[i]) * p.value.W_p[j];
    return wx;
}

// ---------------------------------------------------------------------------
// Head

struct MlpTrace {
    std::vector<std::vector<double>> inputs;  // input of each layer (post-activation of the previous one)
    std::vector<std::vector<double>> pre;     // pre-activation of each layer
};

/// Rectifier MLP; no activation on the last layer.
inline std::vector<double> head_forward(const ModelParams& p, std::span<const double> in, MlpTrace* trace = nullptr) {
    const auto& w = p.value.head_w;
    const auto& b = p.value.head_b;
    std::vector<double> a(in.begin(), in.end());
    if (trace) {
        trace->inputs.clear();
        trace->pre.clear();
    }
    for (std::size_t l = 0; l < w.size(); ++l) {
        std::vector<double> z(w[l].cols());
        row_times_matrix(a, w[l], z);
        for (std::size_t j = 0; j < z.size(); ++j) z[j] += b[l][j];
        if (trace) {
            trace->inputs.push_back(a);
            trace->pre.push_back(z);
        }
        if (l + 1 < w.size())
            for (auto& v : z) v = std::max(v, 0.0);
        a = std::move(z);
    }
    return a;
}

/// Accumulates head gradients and returns dL/d(input).
inline std::vector<double> head_backward(ModelParams& p, const MlpTrace& tr, std::span<const double> gout,
                                         double scale = 1.0) {
    const auto& w = p.value.head_w;
    std::vector<double> g(gout.begin(), gout.end());
    for (std::size_t l = w.size(); l-- > 0;) {
        if (l + 1 < w.size())
            for (std::size_t j = 0; j < g.size(); ++j)
                if (tr.pre[l][j] <= 0.0) g[j] = 0.0;
        auto& gw = p.grad.head_w[l];
        auto& gb = p.grad.head_b[l];
        const auto& in = tr.inputs[l];
        for (std::size_t j = 0; j < g.size(); ++j) gb[j] += scale * g[j];
        for (std::size_t i = 0; i < in.size(); ++i) {
            if (in[i] == 0.0) continue;
            auto row = gw.row(i);
            for (std::size_t j = 0; j < g.size(); ++j) row[j] += scale * in[i] * g[j];
        }
        std::vector<double> gin(in.size());
        matrix_times_col(w[l], g, gin);
        g = std::move(gin);
    }
    return g;
}

/// Head logit for the directed pair (src, dst) from transformed messages.
inline double link_score(const ModelParams& p, std::span<const double> y_src, std::span<const double> y_dst) {
    std::vector<double> in(y_src.begin(), y_src.end());
    in.insert(in.end(), y_dst.begin(), y_dst.end());
    return head_forward(p, in).front();
}

// ---------------------------------------------------------------------------
// Batches and losses

inline constexpr double kLogitClamp = 30.0;

/// Link batch: unique message rows plus (src, dst, negative dst) row triples.
struct LinkBatch {
    Matrix messages;
    std::vector<std::array<std::size_t, 3>> triples;
};

/// Node batch: message rows and label rows (normalized to sum 1 internally).
struct NodeBatch {
    Matrix messages;
    Matrix labels;
};

inline double pair_loss(double logit_pos, double logit_neg) {
    const double lp = std::clamp(logit_pos, -kLogitClamp, kLogitClamp);
    const double ln = std::clamp(logit_neg, -kLogitClamp, kLogitClamp);
    return softplus(-lp) + softplus(ln);
}

namespace detail {

inline std::vector<double> normalized_label(std::span<const double> row) {
    double sum = 0.0;
    for (double v : row) {
        if (v < 0 || !std::isfinite(v)) throw DataError("node labels must be finite and non-negative");
        sum += v;
    }
    if (sum <= 0) throw DataError("node label row sums to 0");
    std::vector<double> out(row.begin(), row.end());
    for (auto& v : out) v /= sum;
    return out;
}

/// Cross-entropy of softmax(logits) against a normalized label, and its
/// gradient with respect to the logits.
inline double softmax_xent(std::span<const double> logits, std::span<const double> label, std::vector<double>* grad) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double o : logits) z += std::exp(o - mx);
    const double lse = mx + std::log(z);
    double loss = 0.0;
    for (std::size_t c = 0; c < logits.size(); ++c)
        if (label[c] > 0) loss -= label[c] * (logits[c] - lse);
    if (grad) {
        grad->resize(logits.size());
        for (std::size_t c = 0; c < logits.size(); ++c) (*grad)[c] = std::exp(logits[c] - lse) - label[c];
    }
    return loss;
}

inline std::vector<std::vector<double>> transform_rows(const ModelParams& p, const Matrix& m,
                                                       std::vector<HyperTrace>* traces = nullptr) {
    std::vector<std::vector<double>> ys(m.rows());
    if (traces) traces->resize(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) ys[r] = hyper_forward(p, m.row(r), traces ? &(*traces)[r] : nullptr);
    return ys;
}

}  // namespace detail

/// Mean over triples of -ln sigmoid(pos) - ln(1 - sigmoid(neg)), logits clamped to +-30.
inline double link_loss(const ModelParams& p, const LinkBatch& batch) {
    if (batch.triples.empty()) return 0.0;
    const auto ys = detail::transform_rows(p, batch.messages);
    double total = 0.0;
    for (const auto& [s, d, n] : batch.triples) total += pair_loss(link_score(p, ys[s], ys[d]), link_score(p, ys[s], ys[n]));
    return total / static_cast<double>(batch.triples.size());
}

/// Mean over rows of the softmax cross-entropy against the label rows.
inline double node_loss(const ModelParams& p, const NodeBatch& batch) {
    if (batch.messages.rows() == 0) return 0.0;
    double total = 0.0;
    for (std::size_t r = 0; r < batch.messages.rows(); ++r) {
        const auto y = hyper_forward(p, batch.messages.row(r));
        const auto label = detail::normalized_label(batch.labels.row(r));
        total += detail::softmax_xent(head_forward(p, y), label, nullptr);
    }
    return total / static_cast<double>(batch.messages.rows());
}

namespace detail {

inline void check_grads(const ModelParams& p) {
    for (const auto& [name, t] : p.grad.tensors())
        for (double v : t)
            if (!std::isfinite(v)) throw NumericError("backward: non-finite gradient in " + name);
}

}  // namespace detail

/// Adds scale * d(sum of per-triple losses)/d(params) to the gradient buffers
/// and returns the summed loss. Pass scale = 1/batch for the mean loss.
///
/// Outside the +-30 clamp the logit gradient is evaluated at the clamped
/// value, so a saturated wrong prediction still gets a signal.
inline double backward(ModelParams& p, const LinkBatch& batch, double scale = 1.0) {
    std::vector<HyperTrace> traces;
    const auto ys = detail::transform_rows(p, batch.messages, &traces);
    const auto dout = p.d_out();
    std::vector<std::vector<double>> gy(ys.size(), std::vector<double>(dout, 0.0));
    double total = 0.0;
    std::vector<double> in(2 * dout);
    auto one_side = [&](std::size_t a, std::size_t b, bool positive) {
        std::copy(ys[a].begin(), ys[a].end(), in.begin());
        std::copy(ys[b].begin(), ys[b].end(), in.begin() + static_cast<std::ptrdiff_t>(dout));
        MlpTrace tr;
        const double logit = std::clamp(head_forward(p, in, &tr).front(), -kLogitClamp, kLogitClamp);
        total += positive ? softplus(-logit) : softplus(logit);
        const double dlogit = positive ? sigmoid(logit) - 1.0 : sigmoid(logit);
        const std::array<double, 1> g{dlogit};
        const auto gin = head_backward(p, tr, g, scale);
        for (std::size_t j = 0; j < dout; ++j) {
            gy[a][j] += gin[j];
            gy[b][j] += gin[dout + j];
        }
    };
    for (const auto& [s, d, n] : batch.triples) {
        one_side(s, d, true);
        one_side(s, n, false);
    }
    for (std::size_t r = 0; r < ys.size(); ++r) hyper_backward(p, batch.messages.row(r), traces[r], gy[r], scale);
    detail::check_grads(p);
    return total;
}

/// Node-task counterpart: scale * d(sum of per-row cross-entropies)/d(params).
inline double backward(ModelParams& p, const NodeBatch& batch, double scale = 1.0) {
    double total = 0.0;
    for (std::size_t r = 0; r < batch.messages.rows(); ++r) {
        HyperTrace ht;
        const auto y = hyper_forward(p, batch.messages.row(r), &ht);
        MlpTrace mt;
        const auto logits = head_forward(p, y, &mt);
        const auto label = detail::normalized_label(batch.labels.row(r));
        std::vector<double> g;
        total += detail::softmax_xent(logits, label, &g);
        const auto gin = head_backward(p, mt, g, scale);
        hyper_backward(p, batch.messages.row(r), ht, gin, scale);
    }
    detail::check_grads(p);
    return total;
}

/// p <- p - lr * (g + weight_decay * p). With clip_norm > 0 the gradient is
/// rescaled to at most that global L2 norm first.
inline void sgd_step(ModelParams& p, double lr, double weight_decay = 0.0, double clip_norm = 0.0) {
    double factor = 1.0;
    if (clip_norm > 0) {
        double sq = 0.0;
        for (const auto& [name, g] : p.grad.tensors())
            for (double v : g) sq += v * v;
        const double norm = std::sqrt(sq);
        if (norm > clip_norm) factor = clip_norm / norm;
    }
    auto values = p.value.tensors();
    auto grads = p.grad.tensors();
    for (std::size_t t = 0; t < values.size(); ++t) {
        auto& [name, v] = values[t];
        const auto g = grads[t].second;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double next = v[i] - lr * (factor * g[i] + weight_decay * v[i]);
            if (!std::isfinite(next)) throw NumericError("sgd_step: non-finite update in " + name);
            v[i] = next;
        }
    }
    ++p.step_count;
}

// ---------------------------------------------------------------------------
// Ablations

enum class Ablation : std::uint32_t { full = 0, no_time = 1, no_hypernet = 2, single_exponential = 3 };

inline std::string to_string(Ablation a) {
    switch (a) {
        case Ablation::full: return "full";
        case Ablation::no_time: return "no_time";
        case Ablation::no_hypernet: return "no_hypernet";
        case Ablation::single_exponential: return "single_exponential";
    }
    return "?";
}

inline Ablation parse_ablation(std::string_view s) {
    if (s == "full" || s == "none") return Ablation::full;
    if (s == "no_time" || s == "no_t") return Ablation::no_time;
    if (s == "no_hypernet" || s == "no_hn") return Ablation::no_hypernet;
    if (s == "single_exponential" || s == "no_te") return Ablation::single_exponential;
    throw UsageError("unknown ablation '" + std::string(s) + "'");
}

struct PipelineConfig {
    Ablation mode = Ablation::full;
    bool time_encoding = true;
    bool hypernet = true;
    bool single_exponential = false;

    /// Applies the ablation to a rate schedule: zero rates (encode == ones)
    /// for no_time, every rate set to the signed gamma0 for single_exponential.
    timecode::TimeEncoder adjust(timecode::TimeEncoder enc, double signed_gamma0) const {
        if (!time_encoding) std::fill(enc.gammas.begin(), enc.gammas.end(), 0.0);
        if (single_exponential) std::fill(enc.gammas.begin(), enc.gammas.end(), signed_gamma0);
        return enc;
    }
};

inline PipelineConfig ablation_config(Ablation mode) {
    PipelineConfig c;
    c.mode = mode;
    c.time_encoding = mode != Ablation::no_time;
    c.hypernet = mode != Ablation::no_hypernet;
    c.single_exponential = mode == Ablation::single_exponential;
    return c;
}

// ---------------------------------------------------------------------------
// Checkpoint (SDP1)

inline constexpr std::string_view kCheckpointMagic = "SDP1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    ModelParams params;
    timecode::TimeEncoder encoder;
    Ablation ablation = Ablation::full;
    std::uint64_t seed = 0;
    std::string rng_state;  // textual std::mt19937_64 state
};

inline BinaryWriter encode_checkpoint(const Checkpoint& c) {
    const auto& p = c.params;
    BinaryWriter w;
    w.bytes(kCheckpointMagic);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(p.task));
    w.u32(static_cast<std::uint32_t>(c.ablation));
    w.u32(p.hypernet ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(c.encoder.dim()));
    w.f64s(c.encoder.gammas);
    w.f64(c.encoder.exponent_clamp);
    w.u32(static_cast<std::uint32_t>(p.d_m()));
    w.u32(static_cast<std::uint32_t>(p.d_out()));
    w.u32(static_cast<std::uint32_t>(p.value.head_w.size()));
    for (const auto& hw : p.value.head_w) {
        w.u32(static_cast<std::uint32_t>(hw.rows()));
        w.u32(static_cast<std::uint32_t>(hw.cols()));
    }
    for (const auto& [name, t] : p.value.tensors()) w.f64s(t);
    w.u64(p.step_count);
    w.u64(c.seed);
    w.str(c.rng_state);
    return w;
}

inline Checkpoint decode_checkpoint(BinaryReader& r) {
    r.expect_header(kCheckpointMagic, kCheckpointVersion);
    Checkpoint c;
    auto& p = c.params;
    p.task = static_cast<Task>(r.u32());
    c.ablation = static_cast<Ablation>(r.u32());
    p.hypernet = r.u32() != 0;
    const auto de = r.u32();
    c.encoder.gammas = r.f64s(de);
    c.encoder.exponent_clamp = r.f64();
    const auto dm = r.u32();
    const auto dout = r.u32();
    const auto layers = r.u32();
    p.value.W = Matrix(dm, dout);
    p.value.W_r = Matrix(dm, dm);
    p.value.W_p.assign(dout, 0.0);
    for (std::uint32_t l = 0; l < layers; ++l) {
        const auto rows = r.u32();
        const auto cols = r.u32();
        p.value.head_w.emplace_back(rows, cols);
        p.value.head_b.emplace_back(cols, 0.0);
    }
    for (auto& [name, t] : p.value.tensors()) {
        const auto v = r.f64s(t.size());
        std::copy(v.begin(), v.end(), t.begin());
    }
    p.step_count = r.u64();
    c.seed = r.u64();
    c.rng_state = r.str();
    if (!r.at_end()) throw DataError(r.origin() + ": trailing bytes in checkpoint");
    p.grad = p.value;
    p.grad.zero();
    return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::string& path) { encode_checkpoint(c).save(path); }

inline Checkpoint load_checkpoint(const std::string& path) {
    auto r = BinaryReader::from_file(path);
    return decode_checkpoint(r);
}

inline std::string rng_state_string(const std::mt19937_64& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

}  // namespace scadyg::hyper

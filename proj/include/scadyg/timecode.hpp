#pragma once

#include "scadyg/common.hpp"

namespace scadyg::timecode {

/// Exponential time encoding: component i of encode(dt) is exp(gammas[i] * dt).
///
/// Rates are signed; negative rates decay with elapsed time. Exponents are
/// clamped to +-exponent_clamp before exponentiation so outputs stay finite
/// and strictly positive.
struct TimeEncoder {
    std::vector<double> gammas;
    double exponent_clamp = 50.0;

    std::size_t dim() const noexcept { return gammas.size(); }

    /// Writes the encoding into `out` and returns how many components clamped.
    std::size_t encode_into(double dt, std::span<double> out) const {
        if (!std::isfinite(dt) || dt < 0) {
            throw std::invalid_argument("TimeEncoder: dt must be finite and non-negative, got " +
                                        format_double(dt));
        }
        std::size_t clamped = 0;
        for (std::size_t i = 0; i < gammas.size(); ++i) {
            double e = gammas[i] * dt;
            if (e > exponent_clamp) {
                e = exponent_clamp;
                ++clamped;
            } else if (e < -exponent_clamp) {
                e = -exponent_clamp;
                ++clamped;
            }
            out[i] = std::exp(e);
        }
        return clamped;
    }

    std::vector<double> encode(double dt) const {
        std::vector<double> out(dim());
        encode_into(dt, out);
        return out;
    }

    void validate() const {
        if (gammas.empty()) throw UsageError("TimeEncoder: empty gamma vector");
        for (double g : gammas)
            if (!std::isfinite(g)) throw UsageError("TimeEncoder: non-finite gamma");
        if (!(exponent_clamp > 0)) throw UsageError("TimeEncoder: exponent clamp must be positive");
    }

    friend bool operator==(const TimeEncoder&, const TimeEncoder&) = default;
};

/// Uniformly decreasing rate schedule: magnitudes g0 - i*delta for i = 1..d_e,
/// with delta chosen so the last magnitude is g0/10. `sign` (+1 or -1) is
/// applied to every rate.
inline TimeEncoder default_schedule(std::size_t d_e, double gamma0, double sign = -1.0,
                                    double exponent_clamp = 50.0) {
    if (d_e == 0) throw UsageError("default_schedule: d_e must be >= 1");
    if (!(gamma0 > 0) || !std::isfinite(gamma0)) throw UsageError("default_schedule: gamma0 must be positive");
    if (sign != 1.0 && sign != -1.0) throw UsageError("default_schedule: sign must be +1 or -1");
    const double last = 0.1 * gamma0;
    const double delta = (gamma0 - last) / static_cast<double>(d_e);
    TimeEncoder enc;
    enc.exponent_clamp = exponent_clamp;
    enc.gammas.resize(d_e);
    for (std::size_t i = 1; i <= d_e; ++i) enc.gammas[i - 1] = sign * (gamma0 - static_cast<double>(i) * delta);
    return enc;
}

/// encode(dt1) * encode(dt2), component-wise.
inline std::vector<double> encode_product_property(const TimeEncoder& enc, double dt1, double dt2) {
    auto a = enc.encode(dt1);
    const auto b = enc.encode(dt2);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] *= b[i];
    return a;
}

/// Composite exponential dependency: kappa(dt) = sum_i coeffs[i] * exp(gammas[i] * dt).
struct CEDependency {
    std::vector<double> coeffs;
    TimeEncoder encoder;
};

inline double kappa(const CEDependency& dep, double dt) {
    if (dep.coeffs.size() != dep.encoder.dim()) throw std::invalid_argument("kappa: coeff/encoder size mismatch");
    const auto e = dep.encoder.encode(dt);
    double acc = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) acc += dep.coeffs[i] * e[i];
    return acc;
}

/// Composite-exponential message: (x * kappa(dt)) W, with x a row vector.
inline std::vector<double> ce_message(std::span<const double> x, double dt, const CEDependency& dep,
                                      const Matrix& W) {
    if (x.size() != W.rows()) throw std::invalid_argument("ce_message: x/W dimension mismatch");
    const double k = kappa(dep, dt);
    std::vector<double> y(W.cols());
    row_times_matrix(x, W, y);
    for (auto& v : y) v *= k;
    return y;
}

/// Weight matrix W1 that makes the weight-free split form reproduce a CE message:
///
///   (x * encode(dt1) * encode(dt2)) W1 == ce_message(x, dt1 + dt2, dep, W)
///
/// Entry (i, j) is W(i, j) * sum_k a_k exp((gamma_k - gamma_i) dt). The rate
/// subtracted is that of input channel i, the channel that multiplies x_i in
/// the row-vector product. Only used to check the propagation pipeline.
inline Matrix split_weight_map(const Matrix& W, const CEDependency& dep, double dt) {
    const auto& g = dep.encoder.gammas;
    const auto d = g.size();
    if (W.rows() != d || W.cols() != d) throw std::invalid_argument("split_weight_map: W must be d_e x d_e");
    if (dep.coeffs.size() != d) throw std::invalid_argument("split_weight_map: coeff size mismatch");
    if (!std::isfinite(dt) || dt < 0) throw std::invalid_argument("split_weight_map: dt must be >= 0");
    Matrix W1(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        double mix = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            const double e = (g[k] - g[i]) * dt;
            if (std::abs(e) > dep.encoder.exponent_clamp) {
                throw NumericError("split_weight_map: exponent " + format_double(e) + " exceeds clamp");
            }
            mix += dep.coeffs[k] * std::exp(e);
        }
        for (std::size_t j = 0; j < d; ++j) W1(i, j) = W(i, j) * mix;
    }
    return W1;
}

}  // namespace scadyg::timecode

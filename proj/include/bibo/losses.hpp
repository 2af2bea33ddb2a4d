#pragma once

// Reconstruction cost, kernel MMD, the WAE loss and the uncertainty-weighted
// two-task objective.

#include <cmath>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bibo/error.hpp"
#include "bibo/ops.hpp"
#include "bibo/rng.hpp"
#include "bibo/tensor.hpp"

namespace bibo {

enum class KernelKind { rbf, imq };

inline const char* to_string(KernelKind k) { return k == KernelKind::rbf ? "rbf" : "imq"; }

inline KernelKind kernel_kind_from_string(const std::string& s) {
    if (s == "rbf") return KernelKind::rbf;
    if (s == "imq") return KernelKind::imq;
    fail(ErrorKind::config, "unknown kernel kind '" + s + "' (expected rbf or imq)");
}

struct LossConfig {
    double lambda = 0.1;
    KernelKind kernel_kind = KernelKind::rbf;
    /// Squared RBF bandwidth; unset means 2 * latent_dim * prior_std^2.
    std::optional<double> rbf_bandwidth_sq;
    /// IMQ scale C; unset means 2 * latent_dim * prior_std^2.
    std::optional<double> imq_c;
    double prior_std = 1.0;
    int prior_sample_count = 64;

    void validate() const {
        if (!(lambda >= 1e-4 && lambda <= 1.0))
            fail(ErrorKind::config, "loss.lambda must lie in [1e-4, 1], got " + std::to_string(lambda));
        if (prior_sample_count < 10 || prior_sample_count > 100)
            fail(ErrorKind::config, "loss.prior_sample_count must lie in [10, 100], got " +
                                        std::to_string(prior_sample_count));
        if (!(prior_std > 0.0)) fail(ErrorKind::config, "loss.prior_std must be positive");
        if (rbf_bandwidth_sq && !(*rbf_bandwidth_sq > 0.0))
            fail(ErrorKind::config, "loss.rbf_bandwidth_sq must be positive");
        if (imq_c && !(*imq_c > 0.0)) fail(ErrorKind::config, "loss.imq_c must be positive");
    }
};

/// Kernel with all scales resolved for a given latent dimension.
struct Kernel {
    KernelKind kind = KernelKind::rbf;
    double scale = 1.0;  // sigma_k^2 for RBF, C for IMQ

    static Kernel from_config(const LossConfig& cfg, std::size_t latent_dim) {
        const double dflt = 2.0 * static_cast<double>(latent_dim) * cfg.prior_std * cfg.prior_std;
        Kernel k;
        k.kind = cfg.kernel_kind;
        k.scale = cfg.kernel_kind == KernelKind::rbf ? cfg.rbf_bandwidth_sq.value_or(dflt) : cfg.imq_c.value_or(dflt);
        require(k.scale > 0.0, "kernel scale must be positive");
        return k;
    }

    double operator()(double sq_dist) const {
        return kind == KernelKind::rbf ? std::exp(-sq_dist / scale) : scale / (scale + sq_dist);
    }

    /// dk/d(sq_dist)
    double derivative(double sq_dist) const {
        if (kind == KernelKind::rbf) return -std::exp(-sq_dist / scale) / scale;
        const double den = scale + sq_dist;
        return -scale / (den * den);
    }
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "squared_distance: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

inline double kernel_eval(std::span<const double> z, std::span<const double> z_tilde, const Kernel& k) {
    require(k.scale > 0.0, "kernel_eval: non-positive kernel scale");
    return k(squared_distance(z, z_tilde));
}

/// Masked mean squared error sum(w*mask*(x - x_hat)^2) / sum(w*mask). Optional
/// per-sample weights broadcast over all entries of a sample (first axis).
inline Var reconstruction_cost(Var x_hat, const Tensor& target, const Tensor& mask,
                               std::span<const double> sample_weights = {}) {
    const auto& xs = x_hat.shape();
    require(xs == target.shape && xs == mask.shape,
            "reconstruction_cost: shapes differ (" + shape_str(xs) + ", " + shape_str(target.shape) + ", " +
                shape_str(mask.shape) + ")");
    const std::size_t n = target.size();
    const std::size_t samples = xs.size() >= 3 ? xs[0] : 1;
    const std::size_t per = samples ? n / samples : 0;
    require(sample_weights.empty() || sample_weights.size() == samples,
            "reconstruction_cost: expected one weight per sample");

    std::vector<double> w(n);
    double denom = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double m = mask.values[i];
        require(m == 0.0 || m == 1.0, "reconstruction_cost: mask entries must be 0 or 1");
        w[i] = m * (sample_weights.empty() ? 1.0 : sample_weights[i / per]);
        denom += w[i];
    }
    if (!(denom > 0.0)) fail("reconstruction_cost: mask selects no entries (empty window)");

    const auto& xv = x_hat.value().values;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = xv[i] - target.values[i];
        acc += w[i] * d * d;
    }
    const double inv = 1.0 / denom;
    const std::size_t xi = x_hat.id();
    return x_hat.tape().record(Tensor::scalar(acc * inv), detail::needs(x_hat),
                               [=, w = std::move(w), tgt = target.values](Tape& t, std::size_t self) {
                                   const double g = t.grad(self)[0];
                                   const auto& xv = t.node(xi).value.values;
                                   auto& gx = t.grad_buffer(xi);
                                   for (std::size_t i = 0; i < gx.size(); ++i)
                                       gx[i] += g * 2.0 * w[i] * (xv[i] - tgt[i]) * inv;
                               });
}

/// Draws `count` latent vectors from N(0, std^2 I).
inline Tensor sample_prior(std::size_t count, std::size_t dim, double stddev, Rng& rng) {
    Tensor out(Shape{count, dim});
    std::normal_distribution<double> normal(0.0, stddev);
    for (auto& v : out.values) v = normal(rng);
    return out;
}

namespace detail {

inline double mean_offdiag(const std::vector<double>& rows, std::size_t n, std::size_t dim, const Kernel& k) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            s += k(squared_distance({&rows[i * dim], dim}, {&rows[j * dim], dim}));
    return 2.0 * s / (static_cast<double>(n) * static_cast<double>(n - 1));
}

} // namespace detail

/// Unbiased U-statistic estimate of squared MMD between the encoded batch
/// (rows of `encoded`, differentiable) and prior samples (constant).
inline Var mmd(Var encoded, const Tensor& prior, const Kernel& k) {
    const auto& es = encoded.shape();
    require(es.size() == 2 && prior.shape.size() == 2, "mmd: expected [count, dim] matrices");
    const std::size_t n = es[0], m = prior.shape[0], dim = es[1];
    require(prior.shape[1] == dim, "mmd: latent dimension mismatch");
    if (n < 2 || m < 2) fail("mmd: U-statistic needs at least two samples per set");

    const auto& q = encoded.value().values;
    const auto& p = prior.values;
    const double qq = detail::mean_offdiag(q, n, dim, k);
    const double pp = detail::mean_offdiag(p, m, dim, k);
    double qp = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) qp += k(squared_distance({&q[i * dim], dim}, {&p[j * dim], dim}));
    qp /= static_cast<double>(n) * static_cast<double>(m);

    const std::size_t qi = encoded.id();
    return encoded.tape().record(
        Tensor::scalar(qq + pp - 2.0 * qp), detail::needs(encoded),
        [=, p = prior.values](Tape& t, std::size_t self) {
            const double g = t.grad(self)[0];
            const auto& q = t.node(qi).value.values;
            auto& gq = t.grad_buffer(qi);
            const double c_qq = 2.0 / (static_cast<double>(n) * static_cast<double>(n - 1));
            const double c_qp = -2.0 / (static_cast<double>(n) * static_cast<double>(m));
            for (std::size_t i = 0; i < n; ++i) {
                const double* qi_row = &q[i * dim];
                for (std::size_t j = 0; j < n; ++j) {
                    if (j == i) continue;
                    const double* qj = &q[j * dim];
                    const double dk = k.derivative(squared_distance({qi_row, dim}, {qj, dim}));
                    for (std::size_t c = 0; c < dim; ++c) gq[i * dim + c] += g * c_qq * dk * 2.0 * (qi_row[c] - qj[c]);
                }
                for (std::size_t j = 0; j < m; ++j) {
                    const double* pj = &p[j * dim];
                    const double dk = k.derivative(squared_distance({qi_row, dim}, {pj, dim}));
                    for (std::size_t c = 0; c < dim; ++c) gq[i * dim + c] += g * c_qp * dk * 2.0 * (qi_row[c] - pj[c]);
                }
            }
        });
}

/// Plain MMD estimate between two constant sample sets.
inline double mmd_value(const Tensor& a, const Tensor& b, const Kernel& k) {
    Tape tape;
    return mmd(tape.constant(a), b, k).value().item();
}

/// WAE objective: reconstruction cost + lambda * MMD(latents, prior).
inline Var wae_loss(Var x_hat, const Tensor& target, const Tensor& mask, Var latents, const Tensor& prior,
                    const Kernel& k, double lambda, std::span<const double> sample_weights = {}) {
    Var rec = reconstruction_cost(x_hat, target, mask, sample_weights);
    return add(rec, affine(mmd(latents, prior, k), lambda));
}

/// Learnable homoscedastic task uncertainties stored as log sigma.
struct TaskUncertainty {
    double log_sigma1 = 0.0;
    double log_sigma2 = 0.0;

    double sigma1() const { return std::exp(log_sigma1); }
    double sigma2() const { return std::exp(log_sigma2); }
};

/// loss1 / (2 sigma1^2) + loss2 / (2 sigma2^2) + ln sigma1 + ln sigma2,
/// with sigma_i = exp(log_sigma_i) supplied as scalar Vars.
inline Var multitask_objective(Var loss1, Var loss2, Var log_sigma1, Var log_sigma2) {
    Var w1 = exp(affine(log_sigma1, -2.0));  // 1/sigma1^2
    Var w2 = exp(affine(log_sigma2, -2.0));
    Var a = affine(mul(w1, loss1), 0.5);
    Var b = affine(mul(w2, loss2), 0.5);
    return add(add(a, b), add(log_sigma1, log_sigma2));
}

/// Value-only form of the two-task objective.
inline double multitask_value(double loss1, double loss2, const TaskUncertainty& u) {
    return loss1 / (2.0 * u.sigma1() * u.sigma1()) + loss2 / (2.0 * u.sigma2() * u.sigma2()) + u.log_sigma1 +
           u.log_sigma2;
}

} // namespace bibo
